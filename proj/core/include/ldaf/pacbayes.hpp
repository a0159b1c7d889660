#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ldaf/certificate.hpp"
#include "ldaf/pushforward.hpp"
#include "ldaf/quadrature.hpp"

namespace ldaf::pacbayes {

using pushforward::ClassNodeOperator;
using pushforward::CovGradient;
using pushforward::LowRankCov;

/// Right-hand side of the PAC-Bayes-lambda inequality:
///   E / (1 - l/2) + (KL + log(2 sqrt(m) / eps)) / (m l (1 - l/2)).
struct BoundInputs {
  double emp_risk = 0.0;
  double kl = 0.0;
  long long m = 1;
  double epsilon = 0.05;
  double lambda = 1.0;

  /// Throws unless emp_risk >= 0, kl >= 0, m >= 1, eps > 0, lambda in (0, 2).
  void validate() const;
};

double log_term(long long m, double epsilon);
double bound_eval(const BoundInputs& in);

/// Partial derivatives of the bound with respect to emp_risk and kl.
struct BoundPartials {
  double emp_risk;
  double kl;
};
BoundPartials bound_partials(const BoundInputs& in);

/// Stationary point of the bound in lambda,
///   2 / (sqrt(2 m E / (KL + log term) + 1) + 1),
/// which is its unique minimizer on (0, 2).
double lambda_opt(double emp_risk, double kl, long long m, double epsilon);

/// KL(N(0, M^2) : N(0, Mp^2)) with M = Diag(d) + q q^T, in O(k).
double kl_lowrank(const LowRankCov& post, const LowRankCov& prior);
/// Gradient of kl_lowrank with respect to post.(d, q).
CovGradient kl_lowrank_grad(const LowRankCov& post, const LowRankCov& prior);

/// Diagonal of the Hessian of kl_lowrank with respect to post.(d, q).
CovGradient kl_lowrank_hess_diag(const LowRankCov& post, const LowRankCov& prior);

/// Random prior covariance: entries of d and q ~ N(0.1, 0.01), then
/// d clamped to at least `min_d`.
LowRankCov init_prior_cov(const manifold::GraphShape& shape, std::uint64_t seed,
                          double min_d = 1e-4);

struct PosteriorOptions {
  int alternations = 10;
  int epochs = 5;
  double lr = 0.1;
  int n_points = 8192;
  double epsilon = 0.05;
  double min_d = 1e-4;
  int threads = 1;

  void validate() const;
};

struct TraceEntry {
  int alternation = 0;
  double lambda = 0.0;
  double bound = 0.0;
  double surrogate_risk = 0.0;
  double kl = 0.0;
};

struct PosteriorResult {
  LowRankCov posterior;
  double lambda = 1.0;
  /// Entry t holds lambda*(mu_t) and the surrogate bound of mu_t at it; entry
  /// 0 is the prior.
  std::vector<TraceEntry> trace;
  /// Set when the bound rose for three consecutive alternations.
  bool diverged = false;
};

/// Surrogate (cross-entropy) bound of a posterior at lambda, with its risk and KL.
TraceEntry surrogate_bound(const LowRankCov& post, const LowRankCov& prior,
                           std::span<const ClassNodeOperator> data, std::span<const int> labels,
                           const quadrature::PointSet& points, long long m, double epsilon,
                           double lambda, int threads = 1);

/// Gradient of the surrogate bound with respect to post.(d, q) at fixed lambda.
CovGradient surrogate_bound_grad(const LowRankCov& post, const LowRankCov& prior,
                                 std::span<const ClassNodeOperator> data,
                                 std::span<const int> labels, const quadrature::PointSet& points,
                                 long long m, double epsilon, double lambda, int threads = 1);

/// Alternates an exact lambda update with `epochs` full-batch gradient steps
/// on the surrogate bound, starting from the prior. Only (d, q) move. Steps
/// are damped by the KL curvature diagonal where it is stiff and halved until
/// the bound does not increase. Returns the iterate with the smallest bound.
PosteriorResult optimize_posterior(const LowRankCov& prior, std::span<const ClassNodeOperator> data,
                                   std::span<const int> labels, const PosteriorOptions& options);

struct CertifyOptions {
  int n_points = 8192;
  /// Add the randomized-QMC error estimate to the empirical risk.
  bool padding = false;
  int replicates = 8;
  std::uint64_t replicate_seed = 0;
  int threads = 1;
};

/// 01-loss certificate on validation data; lambda re-optimized for the 01 risk.
Certificate certify(const LowRankCov& posterior, const LowRankCov& prior,
                    std::span<const ClassNodeOperator> data, std::span<const int> labels,
                    double epsilon, const CertifyOptions& options);

}  // namespace ldaf::pacbayes
