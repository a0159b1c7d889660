#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "ldaf/error.hpp"

namespace {

using ldaf::cli::RunConfig;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Common& common, bool with_config = true) {
  if (with_config) {
    cmd->add_option("--config", common.config, "key = value config file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", common.sets, "override one config entry, key=value");
  }
  cmd->add_option("--threads", common.threads, "worker threads (default: LDAF_THREADS or all cores)");
}

RunConfig build_config(const Common& common) {
  RunConfig cfg;
  if (!common.config.empty()) cfg = RunConfig::load(common.config);
  for (const std::string& s : common.sets) {
    const auto eq = s.find('=');
    ldaf::require(eq != std::string::npos, ldaf::ErrorKind::Config,
                  "--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return cfg;
}

int report(ldaf::ErrorKind kind, const std::string& message) {
  std::cerr << "error: " << ldaf::to_string(kind) << ": " << message << "\n";
  return kind == ldaf::ErrorKind::Config ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic LDAF classifiers with PAC-Bayes risk certificates"};
  app.require_subcommand(1);
  Common common;

  std::string out, data, model, out_dir = "certs", split_name = "test";
  std::optional<double> epsilon;
  std::vector<double> epsilons;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic feature file");
  add_common(gen, common);
  gen->add_option("--out", out, "feature file (.csv for text)")->required();

  auto* prior = app.add_subcommand("train-prior", "train the deterministic classifier");
  add_common(prior, common);
  prior->add_option("--data", data, "feature file (default: dataset.path)");
  prior->add_option("--out-model", out, "model directory")->required();

  auto* post = app.add_subcommand("train-posterior", "fit the posterior covariance");
  add_common(post, common);
  post->add_option("--model", model, "model directory")->required()->check(CLI::ExistingDirectory);
  post->add_option("--data", data, "feature file (default: dataset.path)");

  auto* cert = app.add_subcommand("certify", "write risk certificates");
  add_common(cert, common);
  cert->add_option("--model", model, "model directory")->required()->check(CLI::ExistingDirectory);
  cert->add_option("--data", data, "feature file (default: dataset.path)");
  cert->add_option("--epsilon", epsilons, "confidence levels (overrides certify.epsilon)");
  cert->add_option("--out-dir", out_dir, "certificate directory")->capture_default_str();

  auto* eval = app.add_subcommand("evaluate", "error rates on a split");
  add_common(eval, common);
  eval->add_option("--model", model, "model directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--data", data, "feature file (default: dataset.path)");
  eval->add_option("--split", split_name, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();

  auto* bench = app.add_subcommand("bench-integration", "QMC vs MC integration errors");
  add_common(bench, common);
  bench->add_option("--model", model, "model directory")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--data", data, "feature file (default: dataset.path)");
  bench->add_option("--out", out, "CSV output")->required();

  auto* verify = app.add_subcommand("verify-cert", "recompute a certificate's bound");
  verify->add_option("certificate", out, "certificate file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(ldaf::ErrorKind::Config, e.what());
  }

  try {
    if (verify->parsed()) return ldaf::cli::cmd_verify_cert(out, std::cout) ? 0 : 3;
    RunConfig cfg = build_config(common);
    if (!epsilons.empty()) cfg.certify.epsilon = epsilons;
    cfg.validate();
    const int threads = ldaf::cli::resolve_threads(common.threads);

    if (gen->parsed()) {
      ldaf::cli::cmd_gen_data(cfg, out, std::cout);
    } else if (prior->parsed()) {
      ldaf::cli::cmd_train_prior(cfg, data, out, threads, std::cout);
    } else if (post->parsed()) {
      ldaf::cli::cmd_train_posterior(cfg, model, data, threads, std::cout);
    } else if (cert->parsed()) {
      ldaf::cli::cmd_certify(cfg, model, data, out_dir, threads, std::cout);
    } else if (eval->parsed()) {
      const ldaf::Split split = split_name == "train"        ? ldaf::Split::Train
                                : split_name == "validation" ? ldaf::Split::Validation
                                                             : ldaf::Split::Test;
      ldaf::cli::cmd_evaluate(cfg, model, data, split, threads, std::cout);
    } else if (bench->parsed()) {
      ldaf::cli::cmd_bench_integration(cfg, model, data, out, threads, std::cout);
    }
  } catch (const ldaf::Error& e) {
    return report(e.kind(), e.what());
  } catch (const std::exception& e) {
    return report(ldaf::ErrorKind::Io, e.what());
  }
  return 0;
}
