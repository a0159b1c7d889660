#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "ldaf/dataset.hpp"
#include "ldaf/model.hpp"

namespace ldaf::cli {

/// --threads, else LDAF_THREADS, else the number of logical cores.
int resolve_threads(std::optional<int> flag);

/// Loads a feature file (binary or .csv) and tags splits from the config.
Dataset load_dataset(const RunConfig& cfg, const std::string& path);

/// Writes a synthetic feature file.
void cmd_gen_data(const RunConfig& cfg, const std::string& out, std::ostream& log);

/// Trains the deterministic classifier and writes the model directory with
/// train_log.csv inside it.
void cmd_train_prior(const RunConfig& cfg, const std::string& data, const std::string& out_model,
                     int threads, std::ostream& log);

/// Fits the posterior covariance on the validation split, updates the model
/// in place and writes posterior_trace.csv next to the manifest.
void cmd_train_posterior(const RunConfig& cfg, const std::string& model_dir,
                         const std::string& data, int threads, std::ostream& log);

/// Writes one certificate file per epsilon into `out_dir` and prints a
/// summary table. Returns the written paths.
std::vector<std::string> cmd_certify(const RunConfig& cfg, const std::string& model_dir,
                                     const std::string& data, const std::string& out_dir,
                                     int threads, std::ostream& out);

/// Error rates of the deterministic and stochastic classifiers on a split.
void cmd_evaluate(const RunConfig& cfg, const std::string& model_dir, const std::string& data,
                  Split split, int threads, std::ostream& out);

struct BenchCell {
  int datum = 0;
  int n_points = 0;
  double reference = 0.0;
  double qmc = 0.0;
  double mc = 0.0;
};

/// Per-datum QMC and MC estimates of the expected empirical risk against a
/// large MC reference, on the first bench.max_data validation rows.
std::vector<BenchCell> bench_integration(const RunConfig& cfg, const ModelBundle& model,
                                         const Dataset& ds, int threads);

/// Writes the CSV and prints a per-count summary.
void cmd_bench_integration(const RunConfig& cfg, const std::string& model_dir,
                           const std::string& data, const std::string& out_csv, int threads,
                           std::ostream& out);

/// Recomputes a certificate's bound from its own fields.
bool cmd_verify_cert(const std::string& path, std::ostream& out);

}  // namespace ldaf::cli
