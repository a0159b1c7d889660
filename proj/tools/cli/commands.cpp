#include "commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "ldaf/certificate.hpp"
#include "ldaf/error.hpp"
#include "ldaf/pacbayes.hpp"
#include "ldaf/parallel.hpp"
#include "ldaf/quadrature.hpp"
#include "ldaf/training.hpp"

namespace ldaf::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path + "'");
  return out;
}

std::string resolve_data(const RunConfig& cfg, const std::string& data) {
  const std::string path = data.empty() ? cfg.dataset.path : data;
  require(!path.empty(), ErrorKind::Config, "no data file: pass --data or set dataset.path");
  require(fs::exists(path), ErrorKind::Io, "data file '" + path + "' does not exist");
  return path;
}

void log_splits(const Dataset& ds, std::ostream& log) {
  log << "splits: train " << ds.indices(Split::Train).size() << ", validation "
      << ds.indices(Split::Validation).size() << ", test " << ds.indices(Split::Test).size()
      << "\n";
}

void require_matching(const ModelBundle& model, const Dataset& ds) {
  require(ds.classes == model.shape.classes(), ErrorKind::ShapeMismatch,
          "data has " + std::to_string(ds.classes) + " classes but the model has " +
              std::to_string(model.shape.classes()));
  require(ds.dim() == model.feature.input_dim(), ErrorKind::ShapeMismatch,
          "data dimension does not match the model's feature map");
  const auto stored = model.find_metadata("dataset_sha256");
  require(!stored || *stored == dataset_digest(ds), ErrorKind::InvalidArgument,
          "data file differs from the one the model was trained on");
}

std::string fixed(double x, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << x;
  return ss.str();
}

std::string eps_tag(double eps) { return format_double(eps); }

}  // namespace

int resolve_threads(std::optional<int> flag) {
  if (flag) {
    require(*flag >= 1, ErrorKind::Config, "--threads must be positive");
    return *flag;
  }
  if (const char* env = std::getenv("LDAF_THREADS"); env && *env) {
    const long long t = parse_int(env, "LDAF_THREADS");
    require(t >= 1, ErrorKind::Config, "LDAF_THREADS must be positive");
    return static_cast<int>(t);
  }
  return ldaf::resolve_threads(0);
}

Dataset load_dataset(const RunConfig& cfg, const std::string& path) {
  Dataset ds = load_features(path);
  assign_splits(ds, cfg.dataset.val_fraction, cfg.dataset.test_fraction, cfg.dataset.split_seed);
  return ds;
}

void cmd_gen_data(const RunConfig& cfg, const std::string& out, std::ostream& log) {
  const Dataset ds = gen_synthetic(parse_synthetic_kind(cfg.dataset.kind), cfg.dataset.m,
                                   cfg.dataset.dim, cfg.dataset.c, cfg.dataset.seed,
                                   cfg.dataset.separation);
  if (out.size() >= 4 && out.compare(out.size() - 4, 4, ".csv") == 0) {
    save_features_csv(ds, out);
  } else {
    save_features(ds, out);
  }
  log << "wrote " << ds.rows() << " x " << ds.dim() << " features, " << ds.classes
      << " classes, sha256 " << dataset_digest(ds) << "\n";
}

void cmd_train_prior(const RunConfig& cfg, const std::string& data, const std::string& out_model,
                     int threads, std::ostream& log) {
  const Dataset ds = load_dataset(cfg, resolve_data(cfg, data));
  log_splits(ds, log);
  log << "prior training reads the train split only\n";
  PriorOptions o;
  o.n_nodes = cfg.model.n_nodes;
  o.horizon = cfg.model.T;
  o.steps = cfg.prior.steps;
  o.lr = cfg.prior.lr;
  o.momentum = cfg.prior.momentum;
  o.weight_decay = cfg.prior.weight_decay;
  o.batch_size = cfg.prior.batch_size;
  o.seed = cfg.prior.seed;
  o.cov_seed = cfg.prior.cov_seed;
  o.threads = threads;
  PriorResult r = train_prior(ds, o);
  r.model.set_metadata("dataset_sha256", dataset_digest(ds));
  r.model.set_metadata("config_sha256", cfg.digest());
  r.model.set_metadata("prior.seed", std::to_string(cfg.prior.seed));
  r.model.set_metadata("prior.cov_seed", std::to_string(cfg.prior.cov_seed));
  r.model.set_metadata("dataset.split_seed", std::to_string(cfg.dataset.split_seed));
  save_model(r.model, out_model);

  std::ofstream csv = open_out((fs::path(out_model) / "train_log.csv").string());
  csv << "step,loss,error\n";
  for (const auto& e : r.log) {
    csv << e.step << "," << format_double(e.loss) << "," << format_double(e.error) << "\n";
  }
  if (!r.log.empty()) {
    log << "loss " << fixed(r.log.front().loss) << " -> " << fixed(r.log.back().loss)
        << " over " << r.log.size() << " steps\n";
  }
  log << "train error " << fixed(evaluate(r.model, ds, Split::Train, EvalMode::Deterministic, 1,
                                          threads))
      << "\n";
}

void cmd_train_posterior(const RunConfig& cfg, const std::string& model_dir,
                         const std::string& data, int threads, std::ostream& log) {
  ModelBundle model = load_model(model_dir);
  const Dataset ds = load_dataset(cfg, resolve_data(cfg, data));
  require_matching(model, ds);
  log_splits(ds, log);
  log << "posterior training reads the validation split only\n";
  const auto ops = build_operators(model, ds, Split::Validation, threads);
  require(!ops.empty(), ErrorKind::InvalidArgument, "train-posterior: empty validation split");
  const auto labels = split_labels(ds, Split::Validation);
  pacbayes::PosteriorOptions po;
  po.alternations = cfg.posterior.alternations;
  po.epochs = cfg.posterior.epochs;
  po.lr = cfg.posterior.lr;
  po.n_points = cfg.posterior.n_points;
  po.epsilon = cfg.certify.epsilon.front();
  po.threads = threads;
  const pacbayes::PosteriorResult r = pacbayes::optimize_posterior(model.prior, ops, labels, po);
  if (r.diverged) log << "warning: the bound rose for three consecutive alternations\n";
  model.posterior = r.posterior;
  model.set_metadata("posterior.lambda", format_double(r.lambda));
  save_model(model, model_dir);

  std::ofstream csv = open_out((fs::path(model_dir) / "posterior_trace.csv").string());
  csv << "alternation,lambda,bound,surrogate_risk,kl\n";
  for (const auto& t : r.trace) {
    csv << t.alternation << "," << format_double(t.lambda) << "," << format_double(t.bound) << ","
        << format_double(t.surrogate_risk) << "," << format_double(t.kl) << "\n";
  }
  log << "surrogate bound " << fixed(r.trace.front().bound) << " -> "
      << fixed(r.trace.back().bound) << ", lambda " << fixed(r.lambda) << "\n";
}

std::vector<std::string> cmd_certify(const RunConfig& cfg, const std::string& model_dir,
                                     const std::string& data, const std::string& out_dir,
                                     int threads, std::ostream& out) {
  const ModelBundle model = load_model(model_dir);
  const Dataset ds = load_dataset(cfg, resolve_data(cfg, data));
  require_matching(model, ds);
  require(model.posterior.has_value(), ErrorKind::InvalidArgument,
          "certify: the model has no posterior; run train-posterior first");
  const auto ops = build_operators(model, ds, Split::Validation, threads);
  require(!ops.empty(), ErrorKind::InvalidArgument, "certify: empty validation split");
  const auto labels = split_labels(ds, Split::Validation);

  pacbayes::CertifyOptions co;
  co.n_points = cfg.certify.n_points;
  co.padding = cfg.certify.padding;
  co.replicates = cfg.certify.replicates;
  co.replicate_seed = cfg.certify.replicate_seed;
  co.threads = threads;
  fs::create_directories(out_dir);

  const bool has_test = !ds.indices(Split::Test).empty();
  auto test_error = [&](const ModelBundle& m, EvalMode mode) {
    return has_test ? fixed(evaluate(m, ds, Split::Test, mode, cfg.certify.n_points, threads))
                    : std::string("n/a");
  };
  ModelBundle prior_only = model;
  prior_only.posterior.reset();
  out << "metric                          value\n";
  out << "deterministic test error        " << test_error(model, EvalMode::Deterministic) << "\n";
  out << "prior stochastic test error     " << test_error(prior_only, EvalMode::StochasticExpected)
      << "\n";
  out << "posterior stochastic test error " << test_error(model, EvalMode::StochasticExpected)
      << "\n";

  std::vector<std::string> paths;
  for (double eps : cfg.certify.epsilon) {
    Certificate cert = pacbayes::certify(*model.posterior, model.prior, ops, labels, eps, co);
    cert.provenance = {{"config_sha256", cfg.digest()},
                       {"model_sha256", model_digest(model_dir)},
                       {"dataset_sha256", dataset_digest(ds)},
                       {"split_seed", std::to_string(cfg.dataset.split_seed)},
                       {"replicate_seed", std::to_string(cfg.certify.replicate_seed)}};
    const std::string path = (fs::path(out_dir) / ("certificate_eps" + eps_tag(eps) + ".txt")).string();
    cert.to_document().save(path);
    paths.push_back(path);
    out << "certificate (eps " << eps_tag(eps) << ")" << std::string(
               std::max<int>(1, 16 - static_cast<int>(eps_tag(eps).size())), ' ')
        << fixed(cert.bound) << "  (risk " << fixed(cert.risk_used) << ", kl "
        << fixed(cert.kl, 6) << ", lambda " << fixed(cert.lambda_star) << ", m " << cert.m
        << ")\n";
  }
  return paths;
}

void cmd_evaluate(const RunConfig& cfg, const std::string& model_dir, const std::string& data,
                  Split split, int threads, std::ostream& out) {
  const ModelBundle model = load_model(model_dir);
  const Dataset ds = load_dataset(cfg, resolve_data(cfg, data));
  require_matching(model, ds);
  out << "mode,error\n";
  out << "deterministic," << format_double(evaluate(model, ds, split, EvalMode::Deterministic, 1,
                                                    threads))
      << "\n";
  out << "stochastic_mean,"
      << format_double(evaluate(model, ds, split, EvalMode::StochasticMean, 1, threads)) << "\n";
  out << "stochastic_expected,"
      << format_double(evaluate(model, ds, split, EvalMode::StochasticExpected,
                                cfg.certify.n_points, threads))
      << "\n";
}

std::vector<BenchCell> bench_integration(const RunConfig& cfg, const ModelBundle& model,
                                         const Dataset& ds, int threads) {
  std::vector<int> rows = ds.indices(Split::Validation);
  require(!rows.empty(), ErrorKind::InvalidArgument, "bench-integration: empty validation split");
  if (static_cast<int>(rows.size()) > cfg.bench.max_data) rows.resize(cfg.bench.max_data);
  std::vector<pushforward::MarginalMoments> moments(rows.size());
  std::vector<int> labels(rows.size());
  parallel_for(static_cast<long long>(rows.size()), threads, [&](long long i) {
    moments[i] = pushforward::push_marginal(
        datum_operator(model, ds.features.row(rows[i]).transpose()), model.active_cov());
    labels[i] = ds.labels[rows[i]];
  });
  const auto loss = cfg.bench.loss == "01" ? quadrature::LossKind::ZeroOne
                                           : quadrature::LossKind::CrossEntropy;
  const int dim = model.shape.classes() - 1;
  const quadrature::RiskEstimate ref = quadrature::mc_expected_risk(
      moments, labels, loss, cfg.bench.mc_reference_points, cfg.bench.mc_seed, threads);

  std::vector<BenchCell> cells;
  for (std::size_t j = 0; j < cfg.bench.point_counts.size(); ++j) {
    const int n = cfg.bench.point_counts[j];
    const auto qmc =
        quadrature::risk_on_points(moments, labels, loss, quadrature::qmc_points(dim, n), threads);
    // Each point count gets its own stream, distinct from the reference.
    const auto mc = quadrature::risk_on_points(
        moments, labels, loss, quadrature::mc_points(dim, n, cfg.bench.mc_seed + 1 + j), threads);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      cells.push_back({static_cast<int>(k), n, ref.per_datum[k], qmc.per_datum[k],
                       mc.per_datum[k]});
    }
  }
  return cells;
}

void cmd_bench_integration(const RunConfig& cfg, const std::string& model_dir,
                           const std::string& data, const std::string& out_csv, int threads,
                           std::ostream& out) {
  const ModelBundle model = load_model(model_dir);
  const Dataset ds = load_dataset(cfg, resolve_data(cfg, data));
  require_matching(model, ds);
  const std::vector<BenchCell> cells = bench_integration(cfg, model, ds, threads);

  std::ofstream csv = open_out(out_csv);
  csv << "datum,n_points,method,estimate,reference,abs_error\n";
  for (const BenchCell& c : cells) {
    csv << c.datum << "," << c.n_points << ",qmc," << format_double(c.qmc) << ","
        << format_double(c.reference) << "," << format_double(std::abs(c.qmc - c.reference))
        << "\n";
    csv << c.datum << "," << c.n_points << ",mc," << format_double(c.mc) << ","
        << format_double(c.reference) << "," << format_double(std::abs(c.mc - c.reference))
        << "\n";
  }

  out << "n_points  qmc_mean_err  mc_mean_err  qmc_wins\n";
  for (int n : cfg.bench.point_counts) {
    double qe = 0.0, me = 0.0;
    int wins = 0, count = 0;
    for (const BenchCell& c : cells) {
      if (c.n_points != n) continue;
      const double a = std::abs(c.qmc - c.reference), b = std::abs(c.mc - c.reference);
      qe += a;
      me += b;
      wins += a < b;
      ++count;
    }
    out << std::setw(8) << n << "  " << std::scientific << std::setprecision(3) << std::setw(12)
        << qe / count << "  " << std::setw(11) << me / count << std::defaultfloat << "  " << wins
        << "/" << count << "\n";
  }
}

bool cmd_verify_cert(const std::string& path, std::ostream& out) {
  const Certificate cert = Certificate::from_document(KvDocument::load(path));
  const double recomputed = pacbayes::bound_eval(
      {cert.risk_used, cert.kl, cert.m, cert.epsilon, cert.lambda_star});
  const bool ok = verify_certificate(cert);
  out << "stored bound     " << format_double(cert.bound) << "\n";
  out << "recomputed bound " << format_double(recomputed) << "\n";
  out << (ok ? "ok" : "MISMATCH") << "\n";
  return ok;
}

}  // namespace ldaf::cli
