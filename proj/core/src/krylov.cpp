#include "ldaf/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ldaf/error.hpp"
#include "ldaf/linalg.hpp"

namespace ldaf::krylov {

namespace {

constexpr int kMaxHalvings = 60;

struct Arnoldi {
  Matrix basis;       // n x (m + 1)
  Matrix hessenberg;  // (m + 1) x m
  int dim = 0;
  bool invariant = false;  // happy breakdown: the subspace is A-invariant
};

Arnoldi arnoldi(const LinearOperator& op, const Vector& start, double beta, int max_dim) {
  const Eigen::Index n = start.size();
  Arnoldi out;
  out.basis = Matrix::Zero(n, max_dim + 1);
  out.hessenberg = Matrix::Zero(max_dim + 1, max_dim);
  out.basis.col(0) = start / beta;
  Vector w(n);
  for (int j = 0; j < max_dim; ++j) {
    op(out.basis.col(j), w);
    // Modified Gram-Schmidt with one re-orthogonalization pass.
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= j; ++i) {
        const double h = out.basis.col(i).dot(w);
        out.hessenberg(i, j) += h;
        w -= h * out.basis.col(i);
      }
    }
    const double next = w.norm();
    out.hessenberg(j + 1, j) = next;
    const double col_scale = out.hessenberg.col(j).head(j + 1).norm();
    if (next <= 1e-13 * std::max(col_scale, 1e-300)) {
      out.dim = j + 1;
      out.invariant = true;
      return out;
    }
    out.basis.col(j + 1) = w / next;
  }
  out.dim = max_dim;
  return out;
}

}  // namespace

void KrylovConfig::validate() const {
  require(max_subspace_dim > 0 && tolerance > 0.0 && max_restarts > 0, ErrorKind::InvalidArgument,
          "krylov config: all parameters must be positive");
}

KrylovResult expm_action(const LinearOperator& op, const Vector& w, double t,
                         const KrylovConfig& config) {
  config.validate();
  KrylovResult result{w, 0, 0.0};
  const double horizon = std::abs(t);
  const double direction = t >= 0.0 ? 1.0 : -1.0;
  if (horizon == 0.0 || w.size() == 0) return result;

  const int max_dim = std::min<int>(config.max_subspace_dim, static_cast<int>(w.size()));
  Vector current = w;
  double elapsed = 0.0;
  double step_hint = horizon;

  while (elapsed < horizon) {
    const double beta = current.norm();
    if (beta == 0.0) break;
    if (result.substeps >= config.max_restarts) {
      fail(ErrorKind::Convergence, "krylov: no convergence within " +
                                       std::to_string(config.max_restarts) + " restarts");
    }
    const Arnoldi k = arnoldi(op, current, beta, max_dim);
    const int m = k.dim;
    const double h_next = k.invariant ? 0.0 : k.hessenberg(m, m - 1);

    double tau = std::min(horizon - elapsed, step_hint);
    Matrix small_exp;
    double err = 0.0;
    bool accepted = false;
    for (int halving = 0; halving <= kMaxHalvings; ++halving) {
      // expm([[tau H, tau e1], [0, 0]]) yields e^{tau H} and tau phi(tau H) e1.
      Matrix aug = Matrix::Zero(m + 1, m + 1);
      aug.topLeftCorner(m, m) = (direction * tau) * k.hessenberg.topLeftCorner(m, m);
      aug(0, m) = tau;
      const Matrix e = linalg::expm(aug);
      err = beta * h_next * std::abs(e(m - 1, m));
      if (k.invariant || err <= config.tolerance * beta * (tau / horizon)) {
        small_exp = e.topLeftCorner(m, m);
        accepted = true;
        break;
      }
      tau *= 0.5;
    }
    if (!accepted) {
      fail(ErrorKind::Convergence, "krylov: step size underflow");
    }
    current = beta * (k.basis.leftCols(m) * small_exp.col(0));
    elapsed += tau;
    step_hint = 2.0 * tau;
    result.error_estimate += err;
    ++result.substeps;
  }
  result.value = std::move(current);
  return result;
}

KrylovResult phi_action(const LinearOperator& op, const Vector& u, double t,
                        const KrylovConfig& config) {
  const Eigen::Index n = u.size();
  LinearOperator augmented = [&op, &u, n](const Vector& in, Vector& out) {
    Vector head(n);
    op(in.head(n), head);
    out.head(n) = head + in(n) * u;
    out(n) = 0.0;
  };
  Vector start = Vector::Zero(n + 1);
  start(n) = 1.0;
  KrylovResult r = expm_action(augmented, start, t, config);
  r.value = r.value.head(n).eval();
  return r;
}

}  // namespace ldaf::krylov
