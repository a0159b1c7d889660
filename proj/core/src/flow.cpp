#include "ldaf/flow.hpp"

#include <cmath>
#include <string>

#include "ldaf/error.hpp"
#include "ldaf/linalg.hpp"

namespace ldaf::flow {

namespace {

bool use_dense(const GraphShape& shape, const SolverOptions& options) {
  switch (options.method) {
    case Method::Dense: return true;
    case Method::Krylov: return false;
    case Method::Auto: return shape.dim() <= options.dense_limit;
  }
  return true;
}

void check_vector(const LinearizedSystem& sys, const Vector& u, const char* what) {
  require(u.size() == sys.shape().dim(), ErrorKind::ShapeMismatch,
          std::string(what) + ": vector length does not match the system dimension");
}

// Subtracts the node-block mean from every column of m.
void project_columns(Matrix& m, const GraphShape& shape) {
  const int c = shape.classes();
  for (int i = 0; i < shape.nodes(); ++i) {
    auto rows = m.middleRows(i * c, c);
    const Eigen::RowVectorXd mean = rows.colwise().mean();
    rows.rowwise() -= mean;
  }
}

}  // namespace

FlowParams FlowParams::zeros(const GraphShape& shape) {
  return {shape, Matrix::Zero(shape.dim(), shape.dim())};
}

void FlowParams::symmetrize() { omega = (0.5 * (omega + omega.transpose())).eval(); }

void FlowParams::validate() const {
  require(omega.rows() == shape.dim() && omega.cols() == shape.dim(), ErrorKind::ShapeMismatch,
          "flow params: omega must be N x N");
  require(omega.allFinite(), ErrorKind::Numerical, "flow params: omega has non-finite entries");
  const double scale = std::max(1.0, omega.cwiseAbs().maxCoeff());
  require((omega - omega.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
          ErrorKind::InvalidArgument, "flow params: omega must be symmetric");
}

LinearizedSystem::LinearizedSystem(const FlowParams& params, const AssignmentState& s0)
    : omega_(params.omega), s0_(s0) {
  require(params.shape == s0.shape, ErrorKind::ShapeMismatch,
          "assemble_linearized: parameter and state shapes differ");
  require(omega_.rows() == s0.shape.dim() && omega_.cols() == s0.shape.dim() &&
              s0.values.size() == s0.shape.dim(),
          ErrorKind::ShapeMismatch, "assemble_linearized: dimension mismatch");
  drift_ = manifold::project_tangent(omega_ * s0_.values, s0_.shape);
}

Vector LinearizedSystem::apply(const Vector& u) const {
  check_vector(*this, u, "A apply");
  const Vector r = manifold::replicator_apply(s0_, u).values;
  return manifold::project_tangent(omega_ * r, s0_.shape).values;
}

Vector LinearizedSystem::apply_transpose(const Vector& u) const {
  check_vector(*this, u, "A^T apply");
  const Vector p = manifold::project_tangent(u, s0_.shape).values;
  return manifold::replicator_apply(s0_, omega_.transpose() * p).values;
}

Matrix LinearizedSystem::dense() const {
  Matrix a = omega_ * manifold::replicator_matrix(s0_);
  project_columns(a, s0_.shape);
  return a;
}

LinearizedSystem assemble_linearized(const FlowParams& params, const AssignmentState& s0) {
  return LinearizedSystem(params, s0);
}

Vector phi_apply(const LinearizedSystem& sys, double t, const Vector& u,
                 const SolverOptions& options) {
  require(t > 0.0, ErrorKind::InvalidArgument, "phi_apply: time must be positive");
  check_vector(sys, u, "phi_apply");
  const int n = sys.shape().dim();
  if (use_dense(sys.shape(), options)) {
    Matrix aug = Matrix::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = t * sys.dense();
    aug.col(n).head(n) = t * u;
    return linalg::expm(aug).col(n).head(n);
  }
  krylov::LinearOperator op = [&sys](const Vector& in, Vector& out) { out = sys.apply(in); };
  return krylov::phi_action(op, u, t, options.krylov).value;
}

Vector expm_apply(const LinearizedSystem& sys, double t, const Vector& u,
                  const SolverOptions& options) {
  check_vector(sys, u, "expm_apply");
  if (t == 0.0) return u;
  if (use_dense(sys.shape(), options)) {
    return linalg::expm(t * sys.dense()) * u;
  }
  krylov::LinearOperator op = [&sys](const Vector& in, Vector& out) { out = sys.apply(in); };
  return krylov::expm_action(op, u, t, options.krylov).value;
}

Vector expm_apply_transpose(const LinearizedSystem& sys, double t, const Vector& u,
                            const SolverOptions& options) {
  check_vector(sys, u, "expm_apply_transpose");
  if (t == 0.0) return u;
  if (use_dense(sys.shape(), options)) {
    return linalg::expm(t * sys.dense().transpose()) * u;
  }
  krylov::LinearOperator op = [&sys](const Vector& in, Vector& out) {
    out = sys.apply_transpose(in);
  };
  return krylov::expm_action(op, u, t, options.krylov).value;
}

TangentField solve_ldaf(const FlowParams& params, const AssignmentState& s0, double horizon,
                        const SolverOptions& options) {
  require(horizon > 0.0, ErrorKind::InvalidArgument, "solve_ldaf: horizon must be positive");
  const LinearizedSystem sys(params, s0);
  return {s0.shape, phi_apply(sys, horizon, sys.drift().values, options)};
}

AssignmentState integrate_nonlinear_daf(const FlowParams& params, const AssignmentState& s0,
                                        double horizon, double step) {
  require(step > 0.0, ErrorKind::InvalidArgument, "integrate_nonlinear_daf: step must be positive");
  require(horizon >= 0.0, ErrorKind::InvalidArgument,
          "integrate_nonlinear_daf: horizon must be non-negative");
  require(params.shape == s0.shape && params.omega.rows() == s0.shape.dim(),
          ErrorKind::ShapeMismatch, "integrate_nonlinear_daf: shape mismatch");
  TangentField v{s0.shape, Vector::Zero(s0.shape.dim())};
  if (horizon == 0.0) return manifold::lift(s0, v);
  const auto steps = static_cast<long>(std::ceil(horizon / step - 1e-9));
  const double h = horizon / static_cast<double>(steps);
  for (long k = 0; k < steps; ++k) {
    const AssignmentState s = manifold::lift(s0, v);
    v.values += h * manifold::project_tangent(params.omega * s.values, s0.shape).values;
  }
  return manifold::lift(s0, v);
}

Vector frechet_expm_apply(const LinearizedSystem& sys, double t, const Matrix& direction,
                          const Vector& u, const SolverOptions& options) {
  check_vector(sys, u, "frechet_expm_apply");
  const int n = sys.shape().dim();
  require(n <= options.dense_limit, ErrorKind::InvalidArgument,
          "frechet_expm_apply: N exceeds the dense limit");
  require(direction.rows() == n && direction.cols() == n, ErrorKind::ShapeMismatch,
          "frechet_expm_apply: direction must be N x N");
  return linalg::expm_frechet(t * sys.dense(), t * direction) * u;
}

DenseSolution solve_dense(const LinearizedSystem& sys, double horizon) {
  require(horizon > 0.0, ErrorKind::InvalidArgument, "solve_dense: horizon must be positive");
  const int n = sys.shape().dim();
  Matrix aug = Matrix::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = horizon * sys.dense();
  aug.col(n).head(n) = horizon * sys.drift().values;
  const Matrix e = linalg::expm(aug);
  return {e.topLeftCorner(n, n), e.col(n).head(n)};
}

SolutionGradient solve_ldaf_backward(const LinearizedSystem& sys, double horizon,
                                     const Vector& solution_bar) {
  check_vector(sys, solution_bar, "solve_ldaf_backward");
  const GraphShape& shape = sys.shape();
  const int n = shape.dim();
  const int c = shape.classes();

  Matrix aug = Matrix::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = horizon * sys.dense();
  aug.col(n).head(n) = horizon * sys.drift().values;
  Matrix seed = Matrix::Zero(n + 1, n + 1);
  seed.col(n).head(n) = solution_bar;
  // <G, L(M, dM)> = <L(M^T, G), dM>
  const Matrix aug_bar = linalg::expm_frechet(aug.transpose(), seed);
  Matrix a_bar = horizon * aug_bar.topLeftCorner(n, n);
  Vector b_bar = horizon * aug_bar.col(n).head(n);

  // A = P0 Omega R, b = P0 Omega s0 (P0 and R symmetric).
  project_columns(a_bar, shape);
  b_bar = manifold::project_tangent(b_bar, shape).values;
  const Matrix& omega = sys.omega();
  const Vector& s0 = sys.initial_state().values;

  SolutionGradient grad;
  grad.omega = a_bar * manifold::replicator_matrix(sys.initial_state()) + b_bar * s0.transpose();

  const Matrix k = omega.transpose() * a_bar;
  grad.state = omega.transpose() * b_bar;
  for (int i = 0; i < shape.nodes(); ++i) {
    const auto kb = k.block(i * c, i * c, c, c);
    const auto sb = s0.segment(i * c, c);
    grad.state.segment(i * c, c) += kb.diagonal() - (kb + kb.transpose()) * sb;
  }
  return grad;
}

}  // namespace ldaf::flow
