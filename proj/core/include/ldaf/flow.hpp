#pragma once

// Deep assignment flow dynamics and their linearization
//
//   v'(t) = A v(t) + b,   A = P0 Omega R_{s0},   b = P0 Omega s0,   v(0) = 0,
//
// whose solution is v(t) = t phi(tA) b. Matrix-function actions are evaluated
// densely (Pade scaling and squaring) up to `dense_limit`, and by restarted
// Krylov iterations above it.

#include "ldaf/krylov.hpp"
#include "ldaf/manifold.hpp"
#include "ldaf/types.hpp"

namespace ldaf::flow {

using manifold::AssignmentState;
using manifold::GraphShape;
using manifold::TangentField;

/// Symmetric interaction matrix Omega over all (node, label) pairs.
struct FlowParams {
  GraphShape shape;
  Matrix omega;

  static FlowParams zeros(const GraphShape& shape);
  /// Replaces omega by (omega + omega^T) / 2.
  void symmetrize();
  /// Throws unless omega is N x N, finite and symmetric to 1e-12.
  void validate() const;
};

enum class Method { Auto, Dense, Krylov };

struct SolverOptions {
  Method method = Method::Auto;
  /// Largest N evaluated densely under Method::Auto.
  int dense_limit = 512;
  krylov::KrylovConfig krylov;
};

/// The pair (A, b) for one initial state. A is kept matrix-free.
class LinearizedSystem {
 public:
  LinearizedSystem(const FlowParams& params, const AssignmentState& s0);

  [[nodiscard]] const GraphShape& shape() const noexcept { return s0_.shape; }
  [[nodiscard]] const AssignmentState& initial_state() const noexcept { return s0_; }
  [[nodiscard]] const Matrix& omega() const noexcept { return omega_; }
  /// b = P0 Omega s0.
  [[nodiscard]] const TangentField& drift() const noexcept { return drift_; }

  /// A u = P0 Omega R_{s0} u.
  [[nodiscard]] Vector apply(const Vector& u) const;
  /// A^T u = R_{s0} Omega^T P0 u.
  [[nodiscard]] Vector apply_transpose(const Vector& u) const;
  /// Dense N x N materialization of A.
  [[nodiscard]] Matrix dense() const;

 private:
  Matrix omega_;
  AssignmentState s0_;
  TangentField drift_;
};

LinearizedSystem assemble_linearized(const FlowParams& params, const AssignmentState& s0);

/// t phi(tA) u.
Vector phi_apply(const LinearizedSystem& sys, double t, const Vector& u,
                 const SolverOptions& options = {});
/// expm(tA) u.
Vector expm_apply(const LinearizedSystem& sys, double t, const Vector& u,
                  const SolverOptions& options = {});
/// expm(tA^T) u.
Vector expm_apply_transpose(const LinearizedSystem& sys, double t, const Vector& u,
                            const SolverOptions& options = {});

/// Closed-form LDAF solution v(T) = T phi(TA) b.
TangentField solve_ldaf(const FlowParams& params, const AssignmentState& s0, double horizon,
                        const SolverOptions& options = {});

/// Reference integrator for the nonlinear flow in tangent parametrization:
/// explicit Euler on v' = P0 Omega exp_{s0}(v), returning exp_{s0}(v(T)).
AssignmentState integrate_nonlinear_daf(const FlowParams& params, const AssignmentState& s0,
                                        double horizon, double step = 1e-3);

/// L(tA, tE) u, the Frechet derivative of expm at tA in direction tE, applied
/// to u. Dense only; throws for N above `options.dense_limit`.
Vector frechet_expm_apply(const LinearizedSystem& sys, double t, const Matrix& direction,
                          const Vector& u, const SolverOptions& options = {});

/// Everything a dense forward pass produces for one datum.
struct DenseSolution {
  /// expm(TA), N x N.
  Matrix propagator;
  /// v(T) = T phi(TA) b.
  Vector mean;
};

/// One augmented (N+1) exponential giving both expm(TA) and T phi(TA) b.
DenseSolution solve_dense(const LinearizedSystem& sys, double horizon);

/// Gradients of a scalar loss with respect to Omega (unsymmetrized, N x N)
/// and to the initial state s0, given dLoss/dv(T).
struct SolutionGradient {
  Matrix omega;
  Vector state;
};

/// Reverse-mode pass through v(T) = T phi(TA) b using the adjoint Frechet
/// derivative of the augmented exponential.
SolutionGradient solve_ldaf_backward(const LinearizedSystem& sys, double horizon,
                                     const Vector& solution_bar);

}  // namespace ldaf::flow
