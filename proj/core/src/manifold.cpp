#include "ldaf/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ldaf/error.hpp"

namespace ldaf::manifold {

namespace {

void check_length(const Vector& v, const GraphShape& shape, const char* what) {
  if (v.size() != shape.dim()) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": expected length " +
                                       std::to_string(shape.dim()) + ", got " +
                                       std::to_string(v.size()));
  }
}

}  // namespace

GraphShape::GraphShape(int nodes, int classes) : nodes_(nodes), classes_(classes) {
  require(nodes >= 1, ErrorKind::InvalidArgument, "graph shape: need at least one node");
  require(classes >= 2, ErrorKind::InvalidArgument, "graph shape: need at least two classes");
}

AssignmentState barycenter(const GraphShape& shape) {
  return {shape, Vector::Constant(shape.dim(), 1.0 / shape.classes())};
}

bool is_assignment(const Vector& s, const GraphShape& shape, double tol) {
  if (s.size() != shape.dim()) return false;
  const int c = shape.classes();
  for (int i = 0; i < shape.nodes(); ++i) {
    const auto block = s.segment(i * c, c);
    if ((block.array() <= 0.0).any()) return false;
    if (std::abs(block.sum() - 1.0) > tol) return false;
  }
  return true;
}

bool is_tangent(const Vector& v, const GraphShape& shape, double tol) {
  if (v.size() != shape.dim()) return false;
  const int c = shape.classes();
  for (int i = 0; i < shape.nodes(); ++i) {
    if (std::abs(v.segment(i * c, c).sum()) > tol) return false;
  }
  return true;
}

TangentField project_tangent(const Vector& v, const GraphShape& shape) {
  check_length(v, shape, "project_tangent");
  const int c = shape.classes();
  Vector out = v;
  for (int i = 0; i < shape.nodes(); ++i) {
    auto block = out.segment(i * c, c);
    block.array() -= block.mean();
  }
  return {shape, std::move(out)};
}

AssignmentState lift(const AssignmentState& s0, const TangentField& v) {
  require(s0.shape == v.shape, ErrorKind::ShapeMismatch, "lift: state and tangent shapes differ");
  check_length(s0.values, s0.shape, "lift (state)");
  check_length(v.values, v.shape, "lift (tangent)");
  const int c = s0.shape.classes();
  Vector out(s0.shape.dim());
  for (int i = 0; i < s0.shape.nodes(); ++i) {
    const auto vb = v.values.segment(i * c, c);
    const double shift = vb.maxCoeff();
    auto ob = out.segment(i * c, c);
    ob = s0.values.segment(i * c, c).array() * (vb.array() - shift).exp();
    ob /= ob.sum();
    ob = ob.cwiseMax(kSupportFloor);
  }
  return {s0.shape, std::move(out)};
}

AssignmentState lift_at_barycenter(const TangentField& v) {
  return lift(barycenter(v.shape), v);
}

TangentField lift_inverse_at_barycenter(const AssignmentState& s) {
  check_length(s.values, s.shape, "lift_inverse_at_barycenter");
  require((s.values.array() > 0.0).all(), ErrorKind::InvalidArgument,
          "lift_inverse_at_barycenter: state must have full support");
  return project_tangent(s.values.array().log().matrix(), s.shape);
}

TangentField replicator_apply(const AssignmentState& s, const Vector& u) {
  check_length(s.values, s.shape, "replicator_apply (state)");
  check_length(u, s.shape, "replicator_apply (vector)");
  const int c = s.shape.classes();
  Vector out(s.shape.dim());
  for (int i = 0; i < s.shape.nodes(); ++i) {
    const auto sb = s.values.segment(i * c, c);
    const auto ub = u.segment(i * c, c);
    out.segment(i * c, c) = sb.cwiseProduct(ub) - sb.dot(ub) * sb;
  }
  return {s.shape, std::move(out)};
}

Matrix replicator_matrix(const AssignmentState& s) {
  check_length(s.values, s.shape, "replicator_matrix");
  const int c = s.shape.classes();
  Matrix r = Matrix::Zero(s.shape.dim(), s.shape.dim());
  for (int i = 0; i < s.shape.nodes(); ++i) {
    const Vector sb = s.values.segment(i * c, c);
    r.block(i * c, i * c, c, c) = Matrix(sb.asDiagonal()) - sb * sb.transpose();
  }
  return r;
}

Matrix projection_matrix(const GraphShape& shape) {
  const int c = shape.classes();
  Matrix p = Matrix::Identity(shape.dim(), shape.dim());
  for (int i = 0; i < shape.nodes(); ++i) {
    p.block(i * c, i * c, c, c).array() -= 1.0 / c;
  }
  return p;
}

Vector basis_embed(const Vector& z) {
  Vector w(z.size() + 1);
  w.head(z.size()) = z;
  w(z.size()) = -z.sum();
  return w;
}

Vector basis_coords(const Vector& w, double tol) {
  require(w.size() >= 2, ErrorKind::ShapeMismatch, "basis_coords: need at least two entries");
  const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
  require(std::abs(w.sum()) <= tol * scale, ErrorKind::InvalidArgument,
          "basis_coords: input is not a tangent vector (entries do not sum to zero)");
  return w.head(w.size() - 1);
}

Matrix basis_matrix(int classes) {
  require(classes >= 2, ErrorKind::InvalidArgument, "basis_matrix: need at least two classes");
  Matrix p = Matrix::Zero(classes, classes - 1);
  p.topRows(classes - 1).setIdentity();
  p.row(classes - 1).setConstant(-1.0);
  return p;
}

}  // namespace ldaf::manifold
