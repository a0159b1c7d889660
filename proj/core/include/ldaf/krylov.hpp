#pragma once

#include <functional>

#include "ldaf/types.hpp"

namespace ldaf::krylov {

struct KrylovConfig {
  int max_subspace_dim = 30;
  /// Relative tolerance on the a-posteriori error estimate.
  double tolerance = 1e-10;
  /// Maximum number of time sub-steps (each one restarts Arnoldi).
  int max_restarts = 10;

  void validate() const;
};

/// out = Op * in. `out` is pre-sized by the caller.
using LinearOperator = std::function<void(const Vector& in, Vector& out)>;

struct KrylovResult {
  Vector value;
  int substeps = 0;
  double error_estimate = 0.0;
};

/// Approximates expm(t * Op) w with restarted Arnoldi and adaptive time
/// sub-stepping. Throws ErrorKind::Convergence when the error estimate can
/// not be met within `max_restarts` sub-steps.
KrylovResult expm_action(const LinearOperator& op, const Vector& w, double t,
                         const KrylovConfig& config);

/// t * phi(t * Op) u with phi(z) = (e^z - 1) / z, via the augmented operator
/// [[Op, u], [0, 0]] acting on e_{n+1}.
KrylovResult phi_action(const LinearOperator& op, const Vector& u, double t,
                        const KrylovConfig& config);

}  // namespace ldaf::krylov
