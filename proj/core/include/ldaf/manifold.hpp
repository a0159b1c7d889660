#pragma once

// Geometry of the assignment manifold: a product of open probability
// simplices, one per graph node. All states are stored vectorized, row-major
// by node: entry (i, j) of the n x c state matrix lives at index i * c + j.

#include "ldaf/types.hpp"

namespace ldaf::manifold {

/// Graph size and label count. Node 0 is the classification node, so its
/// entries are the first `c` components of any vectorized state.
class GraphShape {
 public:
  GraphShape() = default;
  GraphShape(int nodes, int classes);

  [[nodiscard]] int nodes() const noexcept { return nodes_; }
  [[nodiscard]] int classes() const noexcept { return classes_; }
  /// N = n * c.
  [[nodiscard]] int dim() const noexcept { return nodes_ * classes_; }
  /// (c - 1) * n, the dimension of T0 in simplex-basis coordinates.
  [[nodiscard]] int coord_dim() const noexcept { return nodes_ * (classes_ - 1); }

  friend bool operator==(const GraphShape&, const GraphShape&) = default;

 private:
  int nodes_ = 1;
  int classes_ = 2;
};

/// A point s on the assignment manifold. Every node block is strictly
/// positive and sums to one.
struct AssignmentState {
  GraphShape shape;
  Vector values;
};

/// A tangent vector in T0: every node block sums to zero.
struct TangentField {
  GraphShape shape;
  Vector values;
};

/// Smallest value a lifted state entry is allowed to take.
inline constexpr double kSupportFloor = 1e-300;

/// Uniform assignment (the barycenter 1_W).
AssignmentState barycenter(const GraphShape& shape);

/// Checks the W invariants (positivity, unit block sums within `tol`).
bool is_assignment(const Vector& s, const GraphShape& shape, double tol = 1e-10);
/// Checks that each node block sums to zero within `tol`.
bool is_tangent(const Vector& v, const GraphShape& shape, double tol = 1e-10);

/// Orthogonal projection onto T0: subtracts the block mean from every node.
TangentField project_tangent(const Vector& v, const GraphShape& shape);

/// e-exponential map exp_{s0}(v) = s0 * e^v / <s0, e^v>, evaluated per node
/// with the block maximum subtracted before exponentiation.
AssignmentState lift(const AssignmentState& s0, const TangentField& v);

/// exp at the barycenter, i.e. a per-node softmax.
AssignmentState lift_at_barycenter(const TangentField& v);

/// Inverse of `lift_at_barycenter`: per block, the centered logarithm.
TangentField lift_inverse_at_barycenter(const AssignmentState& s);

/// R_s u with R_{s_i} = Diag(s_i) - s_i s_i^T applied node-wise.
TangentField replicator_apply(const AssignmentState& s, const Vector& u);

/// Dense N x N block-diagonal replicator matrix (test and dense-path helper).
Matrix replicator_matrix(const AssignmentState& s);

/// Dense N x N projection I - blockdiag(11^T / c).
Matrix projection_matrix(const GraphShape& shape);

/// Simplex basis P = (I_{c-1}; -1^T): embed(z) = (z, -sum z).
Vector basis_embed(const Vector& z);
/// Left inverse of `basis_embed`; rejects inputs that do not sum to zero.
Vector basis_coords(const Vector& w, double tol = 1e-10);
/// The c x (c-1) basis matrix P.
Matrix basis_matrix(int classes);

}  // namespace ldaf::manifold
