#include "ldaf/linalg.hpp"

#include <array>
#include <cmath>

#include "ldaf/error.hpp"

namespace ldaf::linalg {

namespace {

constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                          25200.0,    1512.0,    56.0,      1.0};
constexpr std::array<double, 10> kPade9 = {17643225600.0, 8821612800.0, 2075673600.0,
                                           302702400.0,   30270240.0,   2162160.0,
                                           110880.0,      3960.0,       90.0,
                                           1.0};
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};

// Backward-error thresholds on ||A||_1 for each Pade degree.
constexpr double kTheta3 = 1.495585217958292e-2;
constexpr double kTheta5 = 2.539398330063230e-1;
constexpr double kTheta7 = 9.504178996162932e-1;
constexpr double kTheta9 = 2.097847961257068e0;
constexpr double kTheta13 = 5.371920351148152e0;

double norm1(const Matrix& a) { return a.cwiseAbs().colwise().sum().maxCoeff(); }

template <std::size_t K>
Matrix pade_low(const Matrix& a, const std::array<double, K>& b) {
  // Degrees 3..9: U = A * sum_{odd} b_j A^{j-1}, V = sum_{even} b_j A^j.
  const Eigen::Index n = a.rows();
  const Matrix ident = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  Matrix power = ident;
  Matrix u_inner = Matrix::Zero(n, n);
  Matrix v = Matrix::Zero(n, n);
  for (std::size_t j = 0; j < K; j += 2) {
    v += b[j] * power;
    u_inner += b[j + 1] * power;
    if (j + 2 < K) power = power * a2;
  }
  const Matrix u = a * u_inner;
  return (v - u).partialPivLu().solve(v + u);
}

Matrix pade13(const Matrix& a) {
  const auto& b = kPade13;
  const Eigen::Index n = a.rows();
  const Matrix ident = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                        b[3] * a2 + b[1] * ident);
  const Matrix v =
      a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
  return (v - u).partialPivLu().solve(v + u);
}

}  // namespace

Matrix expm(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorKind::ShapeMismatch, "expm: matrix must be square");
  if (a.size() == 0) return a;
  require(a.allFinite(), ErrorKind::Numerical, "expm: non-finite input");
  const double nrm = norm1(a);
  if (nrm <= kTheta3) return pade_low(a, kPade3);
  if (nrm <= kTheta5) return pade_low(a, kPade5);
  if (nrm <= kTheta7) return pade_low(a, kPade7);
  if (nrm <= kTheta9) return pade_low(a, kPade9);
  int squarings = 0;
  if (nrm > kTheta13) {
    squarings = static_cast<int>(std::ceil(std::log2(nrm / kTheta13)));
  }
  Matrix result = pade13(a * std::ldexp(1.0, -squarings));
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

Matrix expm_frechet(const Matrix& a, const Matrix& e) {
  require(a.rows() == a.cols() && e.rows() == a.rows() && e.cols() == a.cols(),
          ErrorKind::ShapeMismatch, "expm_frechet: A and E must be square and of equal size");
  const Eigen::Index n = a.rows();
  Matrix block = Matrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = a;
  block.topRightCorner(n, n) = e;
  block.bottomRightCorner(n, n) = a;
  return expm(block).topRightCorner(n, n);
}

CholeskyResult cholesky_with_jitter(const Matrix& sym, double min_jitter, double max_jitter) {
  require(sym.rows() == sym.cols(), ErrorKind::ShapeMismatch, "cholesky: matrix must be square");
  const Eigen::Index n = sym.rows();
  {
    Eigen::LLT<Matrix> llt(sym);
    if (llt.info() == Eigen::Success) {
      return {llt.matrixL(), 0.0};
    }
  }
  const double scale = std::max(sym.trace() / static_cast<double>(n), 0.0);
  for (double base = min_jitter; base <= max_jitter * (1.0 + 1e-9); base *= 10.0) {
    const double jitter = base * scale;
    if (jitter <= 0.0) break;
    Matrix shifted = sym;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success) {
      return {llt.matrixL(), jitter};
    }
  }
  fail(ErrorKind::Numerical, "cholesky: matrix is not positive definite even after maximal jitter");
}

Matrix cholesky_backward(const Matrix& lower, const Matrix& lower_bar) {
  require(lower.rows() == lower.cols() && lower_bar.rows() == lower.rows() &&
              lower_bar.cols() == lower.cols(),
          ErrorKind::ShapeMismatch, "cholesky_backward: size mismatch");
  // Phi(L^T Lbar): lower triangle with the diagonal halved.
  Matrix phi = lower.transpose() * lower_bar.triangularView<Eigen::Lower>().toDenseMatrix();
  phi = phi.triangularView<Eigen::Lower>().toDenseMatrix();
  phi.diagonal() *= 0.5;
  // S = L^{-T} Phi L^{-1}
  const auto tri = lower.triangularView<Eigen::Lower>();
  const Matrix tmp = tri.transpose().solve(phi);
  Matrix s = tri.transpose().solve(tmp.transpose()).transpose();
  return 0.5 * (s + s.transpose());
}

}  // namespace ldaf::linalg
