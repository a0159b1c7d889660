// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "commands.hpp"
#include "ldaf/dataset.hpp"
#include "ldaf/error.hpp"
#include "ldaf/flow.hpp"
#include "ldaf/pacbayes.hpp"
#include "ldaf/pushforward.hpp"
#include "ldaf/quadrature.hpp"
#include "ldaf/training.hpp"
#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ldaf;
using ldaf::testing::random_cov;
using ldaf::testing::random_params;
using ldaf::testing::random_state;
using ldaf::testing::random_vector;
using ldaf::testing::rel_err;
using manifold::AssignmentState;
using manifold::GraphShape;
using pushforward::LowRankCov;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path work_dir() {
  const fs::path dir = fs::current_path() / "acceptance_work";
  fs::create_directories(dir);
  return dir;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Fourth-order central difference of f along a direction parameterized by h.
double fd4(const std::function<double(double)>& f, double h) {
  return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h);
}

LowRankCov shifted(const LowRankCov& c, const Vector& ud, const Vector& uq, double h) {
  return {c.shape, c.d + h * ud, c.q + h * uq};
}

// Columns apply_sqrt(e_i): the square root of the state covariance.
Matrix sqrt_factor(const LowRankCov& cov) {
  const int k = cov.shape.coord_dim();
  Matrix s(cov.shape.dim(), k);
  for (int i = 0; i < k; ++i) s.col(i) = cov.apply_sqrt(Vector::Unit(k, i));
  return s;
}

Outcome closed_form_vs_ode() {
  std::mt19937_64 rng(101);
  const GraphShape shape(10, 3);
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 20; ++trial) {
    const flow::FlowParams p = random_params(rng, shape, 0.3);
    const AssignmentState s0 = random_state(rng, shape);
    const flow::LinearizedSystem sys(p, s0);
    const Vector ref = ldaf::testing::rk4_linear(sys.dense(), sys.drift().values, 1.0, 1e-3);
    worst = std::max(worst, rel_err(flow::solve_ldaf(p, s0, 1.0).values, ref));
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-6 && elapsed < 1.0,
          "max rel err " + fmt("%.2e", worst) + ", " + fmt("%.3f", elapsed) + " s incl. RK4"};
}

Outcome linearization_order() {
  // Integrator step T/10; the reported gap is O(T^2).
  std::mt19937_64 rng(102);
  const GraphShape shape(10, 3);
  const std::vector<double> ts{1e-1, 1e-2, 1e-3};
  double lo = 1e9, hi = -1e9;
  for (int trial = 0; trial < 5; ++trial) {
    const flow::FlowParams p = random_params(rng, shape, 0.3);
    const AssignmentState s0 = random_state(rng, shape);
    std::vector<double> logs_t, logs_e;
    for (double t : ts) {
      const AssignmentState lin = manifold::lift(s0, flow::solve_ldaf(p, s0, t));
      const double e = (lin.values - flow::integrate_nonlinear_daf(p, s0, t, t / 10).values).norm();
      logs_t.push_back(std::log10(t));
      logs_e.push_back(std::log10(e));
    }
    // Least-squares slope over the three horizons.
    const double mt = (logs_t[0] + logs_t[1] + logs_t[2]) / 3;
    const double me = (logs_e[0] + logs_e[1] + logs_e[2]) / 3;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 3; ++i) {
      num += (logs_t[i] - mt) * (logs_e[i] - me);
      den += (logs_t[i] - mt) * (logs_t[i] - mt);
    }
    lo = std::min(lo, num / den);
    hi = std::max(hi, num / den);
  }
  return {lo >= 1.7 && hi <= 2.3, "slopes in [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "]"};
}

Outcome pushforward_correctness() {
  std::mt19937_64 rng(103);
  const int samples = 1000000;
  double worst_dense = 0.0, worst_z = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const GraphShape shape(4 + trial % 4, 3 + trial % 2);
    const int c = shape.classes();
    const flow::FlowParams p = random_params(rng, shape, 0.3);
    const AssignmentState s0 = random_state(rng, shape);
    const LowRankCov cov = random_cov(rng, shape, 0.1, 0.5, 0.3);
    const double horizon = 1.0;
    const auto op = pushforward::class_node_operator(p, s0, horizon, Vector::Zero(c));
    const Matrix from_rows = pushforward::marginal_cov_full(op, cov);

    const flow::LinearizedSystem sys(p, s0);
    const Matrix e = (horizon * sys.dense()).exp();
    const Matrix s = sqrt_factor(cov);
    const Matrix dense = (e * s * s.transpose() * e.transpose()).topLeftCorner(c, c);
    worst_dense = std::max(worst_dense, rel_err(from_rows, dense));

    const Matrix g = (e * s).topRows(c);
    std::normal_distribution<double> normal;
    Vector z(g.cols());
    Matrix sum = Matrix::Zero(c, c), sum_sq = Matrix::Zero(c, c);
    for (int n = 0; n < samples; ++n) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
      const Vector x = g * z;
      const Matrix xx = x * x.transpose();
      sum += xx;
      sum_sq += xx.cwiseProduct(xx);
    }
    const Matrix emp = sum / samples;
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j) {
        const double var = sum_sq(i, j) / samples - emp(i, j) * emp(i, j);
        const double se = std::sqrt(var / samples);
        worst_z = std::max(worst_z, std::abs(emp(i, j) - from_rows(i, j)) / se);
      }
    }
  }
  return {worst_dense <= 1e-8 && worst_z <= 5.0,
          "dense rel err " + fmt("%.2e", worst_dense) + ", MC max |z| " + fmt("%.2f", worst_z)};
}

double dense_kl(const LowRankCov& post, const LowRankCov& prior) {
  auto sigma = [](const LowRankCov& c) {
    const Matrix m = Matrix(c.d.asDiagonal()) + c.q * c.q.transpose();
    return Matrix(m * m);
  };
  const Matrix s1 = sigma(post), s0 = sigma(prior);
  const Eigen::LLT<Matrix> l0(s0), l1(s1);
  const double logdet0 = 2 * l0.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet1 = 2 * l1.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double k = static_cast<double>(s0.rows());
  return 0.5 * (l0.solve(s1).trace() - k + logdet0 - logdet1);
}

Outcome kl_algebra() {
  std::mt19937_64 rng(104);
  const std::vector<GraphShape> shapes{{1, 2}, {5, 3}, {10, 4}, {20, 4}, {30, 3}};
  double worst_kl = 0.0, worst_grad = 0.0;
  for (int draw = 0; draw < 50; ++draw) {
    const GraphShape shape = shapes[draw % shapes.size()];
    const LowRankCov prior = random_cov(rng, shape, 0.1, 1.0, 0.3);
    const LowRankCov post = random_cov(rng, shape, 0.1, 1.0, 0.3);
    worst_kl = std::max(worst_kl, std::abs(pacbayes::kl_lowrank(post, prior) - dense_kl(post, prior)));
    const auto g = pacbayes::kl_lowrank_grad(post, prior);
    for (int dir = 0; dir < 3; ++dir) {
      const int k = shape.coord_dim();
      const Vector ud = random_vector(rng, k), uq = random_vector(rng, k);
      const double fd = fd4(
          [&](double h) { return pacbayes::kl_lowrank(shifted(post, ud, uq, h), prior); }, 1e-3);
      const double an = g.d.dot(ud) + g.q.dot(uq);
      worst_grad = std::max(worst_grad, std::abs(an - fd) / std::max(std::abs(fd), 1e-8));
    }
  }
  return {worst_kl <= 1e-9 && worst_grad <= 1e-6,
          "max |KL - dense| " + fmt("%.2e", worst_kl) + ", max grad rel err " +
              fmt("%.2e", worst_grad)};
}

Outcome binary_oracle() {
  std::mt19937_64 rng(105);
  const GraphShape shape(5, 2);
  double worst = 0.0;
  std::bernoulli_distribution coin;
  for (int trial = 0; trial < 100; ++trial) {
    const flow::FlowParams p = random_params(rng, shape, 0.4);
    const AssignmentState s0 = random_state(rng, shape);
    const Vector shift = manifold::project_tangent(random_vector(rng, shape.dim()), shape)
                             .values.head(2);
    const auto mom = pushforward::push_marginal(
        pushforward::class_node_operator(p, s0, 1.0, shift), random_cov(rng, shape, 0.2, 1.0, 0.4));
    const int label = coin(rng) ? 1 : 0;
    // Logits are (a + s, b - s) with s ~ N(mean, sigma^2); the label loses
    // when its logit falls below the other one.
    const double sigma = mom.chol(0, 0);
    const double diff = mom.logits_shift(0) - mom.logits_shift(1) + 2 * mom.mean_hat(0);
    const double margin = label == 0 ? diff : -diff;
    const double exact = normal_cdf(-margin / (2 * sigma));
    quadrature::RiskOptions ro;
    ro.n_points = 1 << 13;
    const std::vector<quadrature::MarginalMoments> batch{mom};
    const std::vector<int> labels{label};
    worst = std::max(worst, std::abs(quadrature::expected_risk(batch, labels, ro).value - exact));
  }
  return {worst <= 1e-4, "max |QMC - Phi| " + fmt("%.2e", worst)};
}

Outcome qmc_vs_mc(const fs::path& csv_path) {
  cli::RunConfig cfg;
  cfg.bench.point_counts = {512, 1024, 2048, 4096, 8192};
  cfg.bench.mc_reference_points = 10000000;
  cfg.bench.max_data = 100;
  cfg.bench.loss = "cross_entropy";
  Dataset ds = gen_synthetic(SyntheticKind::GaussianBlobs, 600, 4, 3, 106, 2.0);
  assign_splits(ds, 100.0 / 600.0, 0.0, 107);
  PriorOptions po;
  po.steps = 40;
  const PriorResult prior = train_prior(ds, po);
  const auto cells = cli::bench_integration(cfg, prior.model, ds, 0);

  std::ofstream csv(csv_path);
  csv << "datum,n_points,method,estimate,reference,abs_error\n";
  int wins = 0;
  for (const auto& c : cells) {
    const double q = std::abs(c.qmc - c.reference), m = std::abs(c.mc - c.reference);
    wins += q < m;
    csv << c.datum << "," << c.n_points << ",qmc," << format_double(c.qmc) << ","
        << format_double(c.reference) << "," << format_double(q) << "\n";
    csv << c.datum << "," << c.n_points << ",mc," << format_double(c.mc) << ","
        << format_double(c.reference) << "," << format_double(m) << "\n";
  }
  const double frac = static_cast<double>(wins) / static_cast<double>(cells.size());
  return {cells.size() == 500 && frac >= 0.9,
          std::to_string(wins) + "/" + std::to_string(cells.size()) + " cells, csv " +
              csv_path.string()};
}

Outcome backprop_commutation() {
  std::mt19937_64 rng(108);
  bool identical = true;
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const GraphShape shape(4, 3 + trial % 2);
    const int c = shape.classes();
    const LowRankCov prior = random_cov(rng, shape, 0.1, 0.4, 0.2);
    const LowRankCov post = random_cov(rng, shape, 0.1, 0.4, 0.2);
    std::vector<pushforward::ClassNodeOperator> ops;
    std::vector<int> labels;
    std::uniform_int_distribution<int> pick(0, c - 1);
    for (int i = 0; i < 6; ++i) {
      const Vector shift =
          manifold::project_tangent(random_vector(rng, shape.dim()), shape).values.head(c);
      ops.push_back(pushforward::class_node_operator(random_params(rng, shape, 0.3),
                                                     random_state(rng, shape), 1.0, shift));
      labels.push_back(pick(rng));
    }
    const auto points = quadrature::qmc_points(c - 1, 256);

    // Gradient of the point sum vs the sum of per-point gradients.
    std::vector<quadrature::MarginalMoments> moments;
    for (const auto& op : ops) moments.push_back(pushforward::push_marginal(op, post));
    const auto whole = quadrature::expected_risk_grad(
        moments, labels, quadrature::LossKind::CrossEntropy, points);
    const double scale = 1.0 / (static_cast<double>(ops.size()) * points.size());
    for (std::size_t k = 0; k < moments.size(); ++k) {
      auto acc = quadrature::MarginalGradient::zeros(c);
      for (int j = 0; j < points.size(); ++j) {
        quadrature::integrand_grad(moments[k], points.normals.row(j).transpose(), labels[k], 1.0,
                                   acc);
      }
      acc.mean_hat *= scale;
      acc.chol *= scale;
      acc.logits_shift *= scale;
      identical = identical && acc.mean_hat == whole[k].mean_hat && acc.chol == whole[k].chol &&
                  acc.logits_shift == whole[k].logits_shift;
    }

    // Bound -> risk -> Cholesky -> (d, q) against finite differences.
    const long long m = static_cast<long long>(ops.size());
    const double lambda = 0.7;
    const auto g = pacbayes::surrogate_bound_grad(post, prior, ops, labels, points, m, 0.05, lambda);
    const int k = shape.coord_dim();
    const Vector ud = random_vector(rng, k), uq = random_vector(rng, k);
    const double fd = fd4(
        [&](double h) {
          return pacbayes::surrogate_bound(shifted(post, ud, uq, h), prior, ops, labels, points, m,
                                           0.05, lambda)
              .bound;
        },
        1e-4);
    const double an = g.d.dot(ud) + g.q.dot(uq);
    worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(fd), 1e-10));
  }
  return {identical && worst <= 1e-4,
          std::string(identical ? "bit-identical" : "NOT bit-identical") +
              ", chained grad max rel err " + fmt("%.2e", worst)};
}

Outcome lambda_optimality() {
  std::mt19937_64 rng(109);
  std::uniform_real_distribution<double> risk(0.0, 0.5), log_kl(-3.0, 3.0);
  const std::vector<long long> ms{50, 500, 5000, 50000};
  const std::vector<double> epss{0.01, 0.05, 0.1};
  const int grid = 10000;
  double worst = 0.0;
  bool unimodal = true;
  for (int trial = 0; trial < 20; ++trial) {
    pacbayes::BoundInputs in;
    in.emp_risk = risk(rng);
    in.kl = std::pow(10.0, log_kl(rng));
    in.m = ms[trial % ms.size()];
    in.epsilon = epss[trial % epss.size()];
    std::vector<double> values(grid);
    int best = 0;
    for (int i = 0; i < grid; ++i) {
      in.lambda = 2.0 * (i + 1) / (grid + 1);
      values[i] = pacbayes::bound_eval(in);
      if (values[i] < values[best]) best = i;
    }
    // Non-increasing up to the minimum, non-decreasing after it.
    for (int i = 1; i < grid; ++i) {
      const double tol = 1e-14 * std::abs(values[i]);
      if (i <= best && values[i] > values[i - 1] + tol) unimodal = false;
      if (i > best && values[i] < values[i - 1] - tol) unimodal = false;
    }
    const double opt = pacbayes::lambda_opt(in.emp_risk, in.kl, in.m, in.epsilon);
    worst = std::max(worst, std::abs(opt - 2.0 * (best + 1) / (grid + 1)));
  }
  return {worst <= 1e-4 && unimodal,
          "max |lambda* - grid| " + fmt("%.2e", worst) + (unimodal ? ", unimodal" : ", NOT unimodal")};
}

Outcome certificate_validity() {
  const int trials = 100;
  const int m_train = 1000, m_val = 2000, m_test = 100000;
  const int m = m_train + m_val + m_test;
  int valid = 0;
  std::vector<double> gaps;
  for (int trial = 0; trial < trials; ++trial) {
    Dataset ds = gen_synthetic(SyntheticKind::GaussianBlobs, m, 4, 3, 1000 + trial, 3.0);
    assign_splits(ds, static_cast<double>(m_val) / m, static_cast<double>(m_test) / m, 2000 + trial);
    PriorOptions po;
    po.n_nodes = 5;
    po.steps = 30;
    po.seed = 3000 + trial;
    po.cov_seed = 4000 + trial;
    PriorResult prior = train_prior(ds, po);
    const auto ops = build_operators(prior.model, ds, Split::Validation);
    const auto labels = split_labels(ds, Split::Validation);
    pacbayes::PosteriorOptions post;
    post.alternations = 3;
    post.epochs = 2;
    post.n_points = 512;
    const auto fit = pacbayes::optimize_posterior(prior.model.prior, ops, labels, post);
    pacbayes::CertifyOptions co;
    co.replicates = 0;
    const Certificate cert = pacbayes::certify(fit.posterior, prior.model.prior, ops, labels, 0.05, co);
    prior.model.posterior = fit.posterior;
    const double risk = evaluate(prior.model, ds, Split::Test, EvalMode::StochasticExpected, 256);
    valid += cert.bound >= risk;
    gaps.push_back(cert.bound - risk);
  }
  std::sort(gaps.begin(), gaps.end());
  const double median = 0.5 * (gaps[trials / 2 - 1] + gaps[trials / 2]);
  return {valid >= 93, std::to_string(valid) + "/" + std::to_string(trials) +
                           " valid, median certificate - risk gap " + fmt("%.4f", median)};
}

struct PipelineRun {
  std::vector<std::string> certificates;
  fs::path model;
};

PipelineRun run_pipeline(const cli::RunConfig& cfg, const fs::path& data, const fs::path& dir,
                         int threads) {
  std::ostringstream log;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path model = dir / "model";
  cli::cmd_train_prior(cfg, data.string(), model.string(), threads, log);
  cli::cmd_train_posterior(cfg, model.string(), data.string(), threads, log);
  return {cli::cmd_certify(cfg, model.string(), data.string(), (dir / "certs").string(), threads,
                           log),
          model};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Pipelines {
  PipelineRun one, two;
};

Pipelines run_pipelines() {
  const fs::path dir = work_dir() / "pipeline";
  fs::create_directories(dir);
  cli::RunConfig cfg;
  cfg.certify.epsilon = {0.05, 0.01};
  std::ostringstream log;
  const fs::path data = dir / "data.bin";
  cli::cmd_gen_data(cfg, data.string(), log);
  return {run_pipeline(cfg, data, dir / "threads1", 1), run_pipeline(cfg, data, dir / "threads2", 2)};
}

Outcome alternation_behavior(const PipelineRun& run) {
  std::ifstream in(run.model / "posterior_trace.csv");
  std::string line;
  std::getline(in, line);
  std::vector<double> lambdas, bounds;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    lambdas.push_back(parse_double(f.at(1), "lambda"));
    bounds.push_back(parse_double(f.at(2), "bound"));
  }
  int settled = -1;
  for (std::size_t t = 0; t + 1 < lambdas.size() && t + 1 <= 10; ++t) {
    if (std::abs(lambdas[t + 1] - lambdas[t]) < 1e-3) {
      settled = static_cast<int>(t + 1);
      break;
    }
  }
  const bool ok = settled > 0 && bounds.back() <= bounds.front();
  return {ok, "lambda settles at alternation " + std::to_string(settled) + ", bound " +
                  fmt("%.6f", bounds.front()) + " -> " + fmt("%.6f", bounds.back())};
}

Outcome determinism(const Pipelines& p) {
  bool same = p.one.certificates.size() == p.two.certificates.size() && !p.one.certificates.empty();
  for (std::size_t i = 0; same && i < p.one.certificates.size(); ++i) {
    same = slurp(p.one.certificates[i]) == slurp(p.two.certificates[i]);
  }
  same = same && slurp((p.one.model / "manifest.txt").string()) ==
                     slurp((p.two.model / "manifest.txt").string());
  return {same, std::to_string(p.one.certificates.size()) +
                    " certificate files and model manifest compared for --threads 1 vs 2"};
}

void report(int id, const std::string& name, const std::function<Outcome()>& fn, int& failures) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " ("
            << o.detail << "; " << fmt("%.1f", seconds_since(t0)) << " s)" << std::endl;
}

}  // namespace

int main() {
  int failures = 0;
  report(1, "closed form vs RK4", closed_form_vs_ode, failures);
  report(2, "linearization consistency slope", linearization_order, failures);
  report(3, "pushforward covariance", pushforward_correctness, failures);
  report(4, "low-rank KL algebra", kl_algebra, failures);
  report(5, "binary analytic oracle", binary_oracle, failures);
  report(6, "QMC beats MC", [] { return qmc_vs_mc(work_dir() / "bench_integration.csv"); },
         failures);
  report(7, "QMC/backprop commutation", backprop_commutation, failures);
  report(8, "lambda optimality", lambda_optimality, failures);
  report(9, "end-to-end certificate validity", certificate_validity, failures);

  Pipelines pipelines;
  std::string pipeline_error;
  const auto pipeline_start = Clock::now();
  try {
    pipelines = run_pipelines();
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  const std::string pipeline_time =
      ", pipelines ran " + fmt("%.1f", seconds_since(pipeline_start)) + " s";
  auto guarded = [&](const std::function<Outcome()>& fn) {
    return [&, fn] {
      if (!pipeline_error.empty()) return Outcome{false, "pipeline failed: " + pipeline_error};
      Outcome o = fn();
      o.detail += pipeline_time;
      return o;
    };
  };
  report(10, "alternating optimization", guarded([&] { return alternation_behavior(pipelines.one); }),
         failures);
  report(11, "determinism across threads", guarded([&] { return determinism(pipelines); }),
         failures);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
