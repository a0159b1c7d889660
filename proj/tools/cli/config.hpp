#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldaf/kvtext.hpp"

namespace ldaf::cli {

/// Every tunable of the command-line pipeline. Loaded from a "key = value"
/// file; unknown keys are rejected and every value is checked before any
/// command starts work.
struct RunConfig {
  struct DatasetCfg {
    std::string kind = "gaussian_blobs";
    std::string path;
    int m = 2000;
    int dim = 5;
    int c = 3;
    std::uint64_t seed = 1;
    double val_fraction = 0.25;
    double test_fraction = 0.2;
    double separation = 4.0;
    std::uint64_t split_seed = 2;
  } dataset;
  struct ModelCfg {
    int n_nodes = 10;
    double T = 1.0;
  } model;
  struct PriorCfg {
    int steps = 200;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-3;
    std::uint64_t seed = 1;
    int batch_size = 64;
    std::uint64_t cov_seed = 2;
  } prior;
  struct PosteriorCfg {
    int alternations = 10;
    int epochs = 5;
    double lr = 0.1;
    int n_points = 4096;
  } posterior;
  struct CertifyCfg {
    std::vector<double> epsilon{0.05};
    int n_points = 8192;
    bool padding = false;
    int replicates = 8;
    std::uint64_t replicate_seed = 0;
  } certify;
  struct BenchCfg {
    std::vector<int> point_counts{512, 1024, 2048, 4096, 8192};
    long long mc_reference_points = 10000000;
    std::uint64_t mc_seed = 1;
    std::string loss = "cross_entropy";
    int max_data = 100;
  } bench;

  /// Sets one key from its text form; throws a Config error for unknown keys
  /// or malformed values.
  void set(const std::string& key, const std::string& value);
  void merge(const KvDocument& doc);
  void validate() const;

  static RunConfig load(const std::string& path);
  /// Every key in a fixed order with canonical values.
  [[nodiscard]] KvDocument to_document() const;
  /// SHA-256 of the canonical document.
  [[nodiscard]] std::string digest() const;
};

}  // namespace ldaf::cli
