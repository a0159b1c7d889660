#pragma once

#include <cmath>

#include "ldaf/types.hpp"

namespace ldaf::linalg {

/// Matrix exponential by Pade scaling and squaring (degrees 3..13 chosen from
/// the 1-norm, Higham 2005).
Matrix expm(const Matrix& a);

/// Frechet derivative L(A, E) of expm, read off the upper-right block of
/// expm([[A, E], [0, A]]).
Matrix expm_frechet(const Matrix& a, const Matrix& e);

/// Cholesky factor together with the diagonal jitter that had to be added.
struct CholeskyResult {
  Matrix lower;
  double jitter = 0.0;
};

/// Lower Cholesky factor of a symmetric matrix. If the plain factorization
/// fails, jitter = base * trace / dim is added to the diagonal with base
/// starting at `min_jitter` and growing x10 up to `max_jitter`; past that an
/// ErrorKind::Numerical error is thrown.
CholeskyResult cholesky_with_jitter(const Matrix& sym, double min_jitter = 1e-12,
                                    double max_jitter = 1e-6);

/// Reverse-mode Cholesky: given L = chol(S) and Lbar = df/dL (lower part
/// used), returns the symmetric Sbar with df = <Sbar, dS> for symmetric dS.
Matrix cholesky_backward(const Matrix& lower, const Matrix& lower_bar);

/// Neumaier-compensated running sum. Reductions feed it in a fixed order so
/// results do not depend on the thread schedule.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace ldaf::linalg
