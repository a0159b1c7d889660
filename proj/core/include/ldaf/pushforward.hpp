#pragma once

// Gaussian pushforward of a randomized initial tangent state v0 ~ N(0, Sigma0)
// through the linearized flow, restricted to the classification node.
//
// With sqrt(Sigma0) = (I_n (x) P)(Diag(d) + q q^T), the state at time T is
// v(T) = expm(TA) v0 + T phi(TA) b, so the node-0 block is Gaussian with mean
// m_I and covariance B B^T, where B = [expm(TA) sqrt(Sigma0)]_I is c x k.

#include "ldaf/flow.hpp"
#include "ldaf/types.hpp"

namespace ldaf::pushforward {

using flow::FlowParams;
using manifold::AssignmentState;
using manifold::GraphShape;
using manifold::TangentField;

/// Parameters (d, q) of the square-root factor of Sigma0, both of length
/// k = (c - 1) n in simplex-basis coordinates.
struct LowRankCov {
  GraphShape shape;
  Vector d;
  Vector q;

  /// Throws unless d and q have length k and d > 0.
  void validate() const;
  /// Diag(d) + q q^T, k x k.
  [[nodiscard]] Matrix coord_factor() const;
  /// (I_n (x) P)(Diag(d) + q q^T), N x k.
  [[nodiscard]] Matrix sqrt_factor() const;
  /// sqrt(Sigma0) z for a coordinate vector z of length k.
  [[nodiscard]] Vector apply_sqrt(const Vector& z) const;
};

/// Moments of the classification-node marginal in P-coordinates.
struct MarginalMoments {
  Vector mean_hat;      // c - 1
  Matrix cov_hat;       // (c - 1) x (c - 1)
  Matrix chol;          // lower, chol * chol^T = cov_hat + jitter I
  Vector logits_shift;  // c
  double jitter = 0.0;
};

/// Everything about one datum that does not depend on (d, q): the node-0
/// rows of expm(TA) mapped to coordinates, and the node-0 mean.
struct ClassNodeOperator {
  GraphShape shape;
  Matrix coupling;      // c x k, [expm(TA) (I_n (x) P)]_I
  Vector mean;          // c, node-0 block of T phi(TA) b
  Vector logits_shift;  // c
};

/// Builds the operator from one dense augmented exponential, or from c
/// transposed Krylov actions when N exceeds the dense limit.
ClassNodeOperator class_node_operator(const FlowParams& params, const AssignmentState& s0,
                                      double horizon, const Vector& logits_shift,
                                      const flow::SolverOptions& options = {});

/// B = C (Diag(d) + q q^T), c x k.
Matrix class_rows(const ClassNodeOperator& op, const LowRankCov& cov);

/// Mean of the pushforward, m(T) = T phi(TA) b.
TangentField push_mean(const FlowParams& params, const AssignmentState& s0, double horizon,
                       const flow::SolverOptions& options = {});

MarginalMoments push_marginal(const ClassNodeOperator& op, const LowRankCov& cov);

MarginalMoments push_marginal(const FlowParams& params, const AssignmentState& s0,
                              const LowRankCov& cov, double horizon, const Vector& logits_shift,
                              const flow::SolverOptions& options = {});

/// c x c marginal covariance B B^T (annihilates the ones vector).
Matrix marginal_cov_full(const ClassNodeOperator& op, const LowRankCov& cov);

/// Upstream gradients of a scalar with respect to the marginal moments.
struct MarginalGradient {
  Vector mean_hat;
  Matrix chol;
  Vector logits_shift;

  static MarginalGradient zeros(int classes);
};

/// Gradients with respect to (d, q).
struct CovGradient {
  Vector d;
  Vector q;

  static CovGradient zeros(int k);
  CovGradient& operator+=(const CovGradient& other);
};

/// Chains an upstream chol gradient through Cholesky, Sigma_hat = B_hat B_hat^T
/// and B = C (Diag(d) + q q^T). The mean does not depend on (d, q).
CovGradient push_marginal_grad(const ClassNodeOperator& op, const LowRankCov& cov,
                               const MarginalMoments& moments, const MarginalGradient& upstream);

CovGradient push_marginal_grad(const FlowParams& params, const AssignmentState& s0,
                               const LowRankCov& cov, double horizon, const Vector& logits_shift,
                               const MarginalGradient& upstream,
                               const flow::SolverOptions& options = {});

}  // namespace ldaf::pushforward
