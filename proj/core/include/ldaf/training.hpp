#pragma once

#include <cstdint>
#include <vector>

#include "ldaf/dataset.hpp"
#include "ldaf/model.hpp"

namespace ldaf {

struct PriorOptions {
  int n_nodes = 10;
  double horizon = 1.0;
  FeatureMap::Kind feature_kind = FeatureMap::Kind::Linear;
  int steps = 200;
  double lr = 0.05;
  double momentum = 0.9;
  /// Applied to Omega only.
  double weight_decay = 1e-3;
  /// Minibatch size; 0 means full batch.
  int batch_size = 64;
  std::uint64_t seed = 1;
  std::uint64_t cov_seed = 2;
  double omega_init_scale = 0.01;
  double feature_init_scale = 0.1;
  int threads = 1;

  void validate() const;
};

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;   // minibatch cross-entropy before the update
  double error = 0.0;  // minibatch 01 error before the update
};

/// Cross-entropy of the deterministic classifier and its gradient.
struct LossGradient {
  double loss = 0.0;
  double error = 0.0;
  Matrix omega;  // symmetrized
  Matrix weight;
  Vector bias;
};

/// Mean loss and gradient over `rows` of `features`.
LossGradient loss_and_grad(const ModelBundle& model, const RowMatrix& features,
                           const std::vector<int>& labels, const std::vector<int>& rows,
                           int threads = 1);

struct PriorResult {
  ModelBundle model;
  std::vector<TrainLogEntry> log;
};

/// Momentum gradient descent on (feature map, Omega) using only the rows
/// tagged Train; the prior covariance is drawn from `cov_seed`.
PriorResult train_prior(const Dataset& ds, const PriorOptions& options);

enum class EvalMode { Deterministic, StochasticMean, StochasticExpected };

EvalMode parse_eval_mode(const std::string& name);

/// Class-node operators of every row tagged `split`, in row order.
std::vector<pushforward::ClassNodeOperator> build_operators(const ModelBundle& model,
                                                            const Dataset& ds, Split split,
                                                            int threads = 1);
std::vector<int> split_labels(const Dataset& ds, Split split);

/// 01 error rate on the rows tagged `split`. The stochastic-mean classifier
/// predicts with the posterior mean, which is the deterministic one; the
/// stochastic-expected mode is the QMC expected 01 risk under the active
/// covariance.
double evaluate(const ModelBundle& model, const Dataset& ds, Split split, EvalMode mode,
                int n_points = 8192, int threads = 1);

}  // namespace ldaf
