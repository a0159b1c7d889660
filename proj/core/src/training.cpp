#include "ldaf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ldaf/error.hpp"
#include "ldaf/linalg.hpp"
#include "ldaf/pacbayes.hpp"
#include "ldaf/parallel.hpp"
#include "ldaf/quadrature.hpp"

namespace ldaf {

void PriorOptions::validate() const {
  require(n_nodes >= 1, ErrorKind::Config, "prior: n_nodes must be positive");
  require(horizon > 0.0, ErrorKind::Config, "prior: horizon must be positive");
  require(steps >= 0, ErrorKind::Config, "prior: steps must be non-negative");
  require(lr >= 0.0 && momentum >= 0.0 && momentum < 1.0 && weight_decay >= 0.0,
          ErrorKind::Config, "prior: invalid optimizer hyperparameters");
  require(batch_size >= 0, ErrorKind::Config, "prior: batch_size must be non-negative");
}

namespace {

struct DatumGrad {
  double loss = 0.0;
  double error = 0.0;
  Matrix omega;
  Vector v0_bar;  // gradient with respect to F(x)
};

DatumGrad datum_grad(const ModelBundle& model, const Vector& x, int label) {
  const int c = model.shape.classes();
  const int n = model.shape.dim();
  const TangentField v0 = model.feature.apply(model.shape, x);
  const auto s0 = manifold::lift_at_barycenter(v0);
  const flow::LinearizedSystem sys(model.flow, s0);
  const flow::DenseSolution sol = flow::solve_dense(sys, model.horizon);
  const Vector logits = sol.mean.head(c) + v0.values.head(c);

  DatumGrad out;
  out.loss = quadrature::loss_value(quadrature::LossKind::CrossEntropy, logits, label);
  out.error = argmax(logits) == label ? 0.0 : 1.0;
  const Vector g = quadrature::cross_entropy_grad(logits, label);
  Vector solution_bar = Vector::Zero(n);
  solution_bar.head(c) = g;
  flow::SolutionGradient back = flow::solve_ldaf_backward(sys, model.horizon, solution_bar);
  // s0 = softmax(v0) per block, whose Jacobian is R_{s0}.
  out.v0_bar = manifold::replicator_apply(s0, back.state).values;
  out.v0_bar.head(c) += g;
  out.omega = std::move(back.omega);
  return out;
}

}  // namespace

LossGradient loss_and_grad(const ModelBundle& model, const RowMatrix& features,
                           const std::vector<int>& labels, const std::vector<int>& rows,
                           int threads) {
  require(!rows.empty(), ErrorKind::InvalidArgument, "loss_and_grad: empty batch");
  std::vector<DatumGrad> per(rows.size());
  parallel_for(static_cast<long long>(rows.size()), threads, [&](long long i) {
    per[i] = datum_grad(model, features.row(rows[i]).transpose(), labels[rows[i]]);
  });
  const int n = model.shape.dim();
  LossGradient out;
  out.omega = Matrix::Zero(n, n);
  out.weight = Matrix::Zero(n, model.feature.input_dim());
  out.bias = Vector::Zero(n);
  linalg::CompensatedSum loss, error;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    loss.add(per[i].loss);
    error.add(per[i].error);
    out.omega += per[i].omega;
    if (model.feature.kind == FeatureMap::Kind::Linear) {
      // F(x) = P0 (W x + beta) and P0 is symmetric.
      const Vector u = manifold::project_tangent(per[i].v0_bar, model.shape).values;
      out.weight.noalias() += u * features.row(rows[i]);
      out.bias += u;
    }
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  out.loss = loss.value() * inv;
  out.error = error.value() * inv;
  out.omega = ((0.5 * inv) * (out.omega + out.omega.transpose())).eval();
  out.weight *= inv;
  out.bias *= inv;
  return out;
}

PriorResult train_prior(const Dataset& ds, const PriorOptions& options) {
  options.validate();
  ds.validate();
  const std::vector<int> train = ds.indices(Split::Train);
  require(!train.empty(), ErrorKind::InvalidArgument, "train_prior: no training rows");
  const GraphShape shape(options.n_nodes, ds.classes);
  const int n = shape.dim();

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ModelBundle model;
  model.shape = shape;
  model.horizon = options.horizon;
  if (options.feature_kind == FeatureMap::Kind::Identity) {
    require(ds.dim() == n, ErrorKind::Config,
            "train_prior: identity features need input dimension N = n * c");
    model.feature = FeatureMap::identity(shape);
  } else {
    model.feature = FeatureMap::linear(shape, ds.dim());
    for (Eigen::Index i = 0; i < model.feature.weight.size(); ++i) {
      model.feature.weight.data()[i] = options.feature_init_scale * normal(rng);
    }
  }
  model.flow = flow::FlowParams::zeros(shape);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) model.flow.omega(i, j) = options.omega_init_scale * normal(rng);
  }
  model.flow.symmetrize();
  model.prior = pacbayes::init_prior_cov(shape, options.cov_seed);

  const bool learn_features = model.feature.kind == FeatureMap::Kind::Linear;
  Matrix vel_omega = Matrix::Zero(n, n);
  Matrix vel_weight = Matrix::Zero(n, model.feature.input_dim());
  Vector vel_bias = Vector::Zero(n);
  const int batch = options.batch_size == 0
                        ? static_cast<int>(train.size())
                        : std::min<int>(options.batch_size, static_cast<int>(train.size()));
  std::vector<int> order = train;
  std::size_t cursor = order.size();

  PriorResult result;
  for (int step = 0; step < options.steps; ++step) {
    std::vector<int> rows;
    if (batch == static_cast<int>(train.size())) {
      rows = train;
    } else {
      rows.reserve(static_cast<std::size_t>(batch));
      while (static_cast<int>(rows.size()) < batch) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        rows.push_back(order[cursor++]);
      }
    }
    const LossGradient g = loss_and_grad(model, ds.features, ds.labels, rows, options.threads);
    require(std::isfinite(g.loss) && g.omega.allFinite() && g.weight.allFinite(),
            ErrorKind::Numerical,
            "train_prior: non-finite loss or gradient at step " + std::to_string(step) +
                " (loss " + std::to_string(g.loss) + "); try a smaller learning rate");
    result.log.push_back({step, g.loss, g.error});
    vel_omega = options.momentum * vel_omega + g.omega + options.weight_decay * model.flow.omega;
    model.flow.omega -= options.lr * vel_omega;
    model.flow.symmetrize();
    if (learn_features) {
      vel_weight = options.momentum * vel_weight + g.weight;
      vel_bias = options.momentum * vel_bias + g.bias;
      model.feature.weight -= options.lr * vel_weight;
      model.feature.bias -= options.lr * vel_bias;
    }
  }
  result.model = std::move(model);
  return result;
}

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "deterministic") return EvalMode::Deterministic;
  if (name == "stochastic_mean") return EvalMode::StochasticMean;
  if (name == "stochastic_expected") return EvalMode::StochasticExpected;
  fail(ErrorKind::Config, "unknown evaluation mode '" + name + "'");
}

std::vector<pushforward::ClassNodeOperator> build_operators(const ModelBundle& model,
                                                            const Dataset& ds, Split split,
                                                            int threads) {
  const std::vector<int> rows = ds.indices(split);
  std::vector<pushforward::ClassNodeOperator> ops(rows.size());
  parallel_for(static_cast<long long>(rows.size()), threads, [&](long long i) {
    ops[i] = datum_operator(model, ds.features.row(rows[i]).transpose());
  });
  return ops;
}

std::vector<int> split_labels(const Dataset& ds, Split split) {
  std::vector<int> out;
  for (int i : ds.indices(split)) out.push_back(ds.labels[i]);
  return out;
}

double evaluate(const ModelBundle& model, const Dataset& ds, Split split, EvalMode mode,
                int n_points, int threads) {
  const std::vector<int> rows = ds.indices(split);
  require(!rows.empty(), ErrorKind::InvalidArgument, "evaluate: the requested split is empty");
  require(ds.classes == model.shape.classes(), ErrorKind::ShapeMismatch,
          "evaluate: dataset and model class counts differ");
  if (mode == EvalMode::StochasticExpected) {
    const auto ops = build_operators(model, ds, split, threads);
    std::vector<pushforward::MarginalMoments> moments(ops.size());
    parallel_for(static_cast<long long>(ops.size()), threads, [&](long long i) {
      moments[i] = pushforward::push_marginal(ops[i], model.active_cov());
    });
    quadrature::RiskOptions ro;
    ro.loss = quadrature::LossKind::ZeroOne;
    ro.n_points = n_points;
    ro.threads = threads;
    return quadrature::expected_risk(moments, split_labels(ds, split), ro).value;
  }
  std::vector<double> wrong(rows.size());
  parallel_for(static_cast<long long>(rows.size()), threads, [&](long long i) {
    const Prediction p = forward_deterministic(model, ds.features.row(rows[i]).transpose());
    wrong[i] = p.label == ds.labels[rows[i]] ? 0.0 : 1.0;
  });
  return std::accumulate(wrong.begin(), wrong.end(), 0.0) / static_cast<double>(rows.size());
}

}  // namespace ldaf
