#include "ldaf/pushforward.hpp"

#include "ldaf/error.hpp"
#include "ldaf/linalg.hpp"

namespace ldaf::pushforward {

namespace {

// Right-multiplies an r x N matrix by (I_n (x) P): per node block, the first
// c-1 columns minus the last one.
Matrix times_basis(const Matrix& g, const GraphShape& shape) {
  const int c = shape.classes();
  Matrix out(g.rows(), shape.coord_dim());
  for (int i = 0; i < shape.nodes(); ++i) {
    out.middleCols(i * (c - 1), c - 1) =
        g.middleCols(i * c, c - 1).colwise() - g.col(i * c + c - 1);
  }
  return out;
}

}  // namespace

void LowRankCov::validate() const {
  const int k = shape.coord_dim();
  require(d.size() == k && q.size() == k, ErrorKind::ShapeMismatch,
          "low-rank covariance: d and q must have length (c-1)n = " + std::to_string(k));
  require(d.allFinite() && q.allFinite(), ErrorKind::Numerical,
          "low-rank covariance: non-finite parameters");
  require((d.array() > 0.0).all(), ErrorKind::InvalidArgument,
          "low-rank covariance: d must be strictly positive");
}

Matrix LowRankCov::coord_factor() const {
  Matrix m = q * q.transpose();
  m.diagonal() += d;
  return m;
}

Matrix LowRankCov::sqrt_factor() const {
  const int c = shape.classes();
  const Matrix m = coord_factor();
  Matrix out(shape.dim(), shape.coord_dim());
  for (int i = 0; i < shape.nodes(); ++i) {
    out.middleRows(i * c, c - 1) = m.middleRows(i * (c - 1), c - 1);
    out.row(i * c + c - 1) = -m.middleRows(i * (c - 1), c - 1).colwise().sum();
  }
  return out;
}

Vector LowRankCov::apply_sqrt(const Vector& z) const {
  require(z.size() == shape.coord_dim(), ErrorKind::ShapeMismatch,
          "apply_sqrt: coordinate vector has the wrong length");
  const Vector w = d.cwiseProduct(z) + q.dot(z) * q;
  const int c = shape.classes();
  Vector out(shape.dim());
  for (int i = 0; i < shape.nodes(); ++i) {
    out.segment(i * c, c) = manifold::basis_embed(w.segment(i * (c - 1), c - 1));
  }
  return out;
}

ClassNodeOperator class_node_operator(const FlowParams& params, const AssignmentState& s0,
                                      double horizon, const Vector& logits_shift,
                                      const flow::SolverOptions& options) {
  const GraphShape& shape = s0.shape;
  const int c = shape.classes();
  require(logits_shift.size() == c, ErrorKind::ShapeMismatch,
          "class_node_operator: logits shift must have length c");
  const flow::LinearizedSystem sys(params, s0);
  Matrix rows(c, shape.dim());
  ClassNodeOperator op{shape, {}, {}, logits_shift};
  const bool dense = options.method == flow::Method::Dense ||
                     (options.method == flow::Method::Auto && shape.dim() <= options.dense_limit);
  if (dense) {
    const flow::DenseSolution sol = flow::solve_dense(sys, horizon);
    rows = sol.propagator.topRows(c);
    op.mean = sol.mean.head(c);
  } else {
    for (int i = 0; i < c; ++i) {
      rows.row(i) = flow::expm_apply_transpose(sys, horizon, Vector::Unit(shape.dim(), i), options)
                        .transpose();
    }
    op.mean = flow::phi_apply(sys, horizon, sys.drift().values, options).head(c);
  }
  op.coupling = times_basis(rows, shape);
  return op;
}

Matrix class_rows(const ClassNodeOperator& op, const LowRankCov& cov) {
  require(cov.shape == op.shape, ErrorKind::ShapeMismatch, "class_rows: shape mismatch");
  Matrix b = op.coupling * cov.d.asDiagonal();
  b.noalias() += (op.coupling * cov.q) * cov.q.transpose();
  return b;
}

TangentField push_mean(const FlowParams& params, const AssignmentState& s0, double horizon,
                       const flow::SolverOptions& options) {
  return flow::solve_ldaf(params, s0, horizon, options);
}

Matrix marginal_cov_full(const ClassNodeOperator& op, const LowRankCov& cov) {
  const Matrix b = class_rows(op, cov);
  return b * b.transpose();
}

MarginalMoments push_marginal(const ClassNodeOperator& op, const LowRankCov& cov) {
  cov.validate();
  const int c = op.shape.classes();
  const Matrix b_hat = class_rows(op, cov).topRows(c - 1);
  MarginalMoments mom;
  mom.mean_hat = op.mean.head(c - 1);
  mom.cov_hat = b_hat * b_hat.transpose();
  mom.cov_hat = (0.5 * (mom.cov_hat + mom.cov_hat.transpose())).eval();
  const linalg::CholeskyResult ch = linalg::cholesky_with_jitter(mom.cov_hat);
  mom.chol = ch.lower;
  mom.jitter = ch.jitter;
  mom.logits_shift = op.logits_shift;
  return mom;
}

MarginalMoments push_marginal(const FlowParams& params, const AssignmentState& s0,
                              const LowRankCov& cov, double horizon, const Vector& logits_shift,
                              const flow::SolverOptions& options) {
  return push_marginal(class_node_operator(params, s0, horizon, logits_shift, options), cov);
}

MarginalGradient MarginalGradient::zeros(int classes) {
  return {Vector::Zero(classes - 1), Matrix::Zero(classes - 1, classes - 1),
          Vector::Zero(classes)};
}

CovGradient CovGradient::zeros(int k) { return {Vector::Zero(k), Vector::Zero(k)}; }

CovGradient& CovGradient::operator+=(const CovGradient& other) {
  d += other.d;
  q += other.q;
  return *this;
}

CovGradient push_marginal_grad(const ClassNodeOperator& op, const LowRankCov& cov,
                               const MarginalMoments& moments, const MarginalGradient& upstream) {
  const int c = op.shape.classes();
  require(upstream.chol.rows() == c - 1 && upstream.chol.cols() == c - 1,
          ErrorKind::ShapeMismatch, "push_marginal_grad: upstream chol must be (c-1) x (c-1)");
  const Matrix c_hat = op.coupling.topRows(c - 1);
  const Matrix b_hat = class_rows(op, cov).topRows(c - 1);
  const Matrix sigma_bar = linalg::cholesky_backward(moments.chol, upstream.chol);
  const Matrix b_bar = 2.0 * sigma_bar * b_hat;
  CovGradient g;
  g.d = b_bar.cwiseProduct(c_hat).colwise().sum().transpose();
  g.q = c_hat.transpose() * (b_bar * cov.q) + b_bar.transpose() * (c_hat * cov.q);
  return g;
}

CovGradient push_marginal_grad(const FlowParams& params, const AssignmentState& s0,
                               const LowRankCov& cov, double horizon, const Vector& logits_shift,
                               const MarginalGradient& upstream,
                               const flow::SolverOptions& options) {
  require(s0.shape.dim() <= options.dense_limit, ErrorKind::InvalidArgument,
          "push_marginal_grad: N exceeds the dense limit");
  const ClassNodeOperator op = class_node_operator(params, s0, horizon, logits_shift, options);
  return push_marginal_grad(op, cov, push_marginal(op, cov), upstream);
}

}  // namespace ldaf::pushforward
