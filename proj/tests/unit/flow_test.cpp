#include <gtest/gtest.h>

#include <complex>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "ldaf/error.hpp"
#include "ldaf/flow.hpp"
#include "ldaf/linalg.hpp"
#include "test_util.hpp"

namespace ldaf::flow {
namespace {

using ldaf::testing::random_matrix;
using ldaf::testing::random_params;
using ldaf::testing::random_state;
using ldaf::testing::random_vector;
using ldaf::testing::rel_err;
using ldaf::testing::rk4_linear;

SolverOptions dense_opts() {
  SolverOptions o;
  o.method = Method::Dense;
  return o;
}

SolverOptions krylov_opts() {
  SolverOptions o;
  o.method = Method::Krylov;
  return o;
}

TEST(Assemble, ZeroOmega) {
  std::mt19937_64 rng(31);
  const GraphShape shape(3, 4);
  const LinearizedSystem sys(FlowParams::zeros(shape), random_state(rng, shape));
  EXPECT_EQ(sys.drift().values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(sys.dense().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Assemble, IdentityOmega) {
  std::mt19937_64 rng(32);
  const GraphShape shape(2, 3);
  const AssignmentState s0 = random_state(rng, shape);
  const FlowParams p{shape, Matrix::Identity(6, 6)};
  const LinearizedSystem sys(p, s0);
  const Matrix proj = manifold::projection_matrix(shape);
  EXPECT_LE((sys.drift().values - proj * s0.values).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((sys.dense() - proj * manifold::replicator_matrix(s0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Assemble, OperatorMatchesDense) {
  std::mt19937_64 rng(33);
  const GraphShape shape(5, 3);
  const LinearizedSystem sys(random_params(rng, shape, 0.5), random_state(rng, shape));
  const Matrix a = sys.dense();
  for (int trial = 0; trial < 5; ++trial) {
    const Vector u = random_vector(rng, shape.dim());
    EXPECT_LE(rel_err(sys.apply(u), Vector(a * u)), 1e-14);
    EXPECT_LE(rel_err(sys.apply_transpose(u), Vector(a.transpose() * u)), 1e-14);
    EXPECT_TRUE(manifold::is_tangent(sys.apply(u), shape, 1e-12));
  }
}

TEST(Assemble, ShapeMismatchThrows) {
  std::mt19937_64 rng(34);
  EXPECT_THROW(LinearizedSystem(FlowParams::zeros(GraphShape(2, 3)),
                                random_state(rng, GraphShape(3, 3))),
               Error);
}

TEST(FlowParams, ValidateRejectsAsymmetric) {
  FlowParams p = FlowParams::zeros(GraphShape(2, 2));
  p.omega(0, 1) = 1.0;
  EXPECT_THROW(p.validate(), Error);
  p.symmetrize();
  EXPECT_NO_THROW(p.validate());
}

TEST(Phi, ZeroMatrixGivesLinearGrowth) {
  std::mt19937_64 rng(35);
  const GraphShape shape(2, 3);
  const LinearizedSystem sys(FlowParams::zeros(shape), random_state(rng, shape));
  const Vector u = random_vector(rng, 6);
  for (const auto& o : {dense_opts(), krylov_opts()}) {
    EXPECT_LE(rel_err(phi_apply(sys, 1.7, u, o), Vector(1.7 * u)), 1e-14);
  }
}

TEST(Phi, MatchesEigendecomposition) {
  // t phi(tA) = V diag(t phi(t lambda)) V^-1 with phi(0) = 1.
  std::mt19937_64 rng(36);
  const GraphShape shape(2, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const LinearizedSystem sys(random_params(rng, shape, 0.8), random_state(rng, shape));
    const Vector u = random_vector(rng, 4);
    const double t = 1.3;
    Eigen::EigenSolver<Matrix> es(sys.dense());
    const Eigen::MatrixXcd v = es.eigenvectors();
    Eigen::VectorXcd f(4);
    for (int i = 0; i < 4; ++i) {
      const std::complex<double> z = t * es.eigenvalues()(i);
      f(i) = std::abs(z) < 1e-12 ? std::complex<double>(t) : t * (std::exp(z) - 1.0) / z;
    }
    const Eigen::VectorXcd ref = v * f.asDiagonal() * v.inverse() * u.cast<std::complex<double>>();
    EXPECT_LE(ref.imag().norm(), 1e-10);
    EXPECT_LE(rel_err(phi_apply(sys, t, u, dense_opts()), Vector(ref.real())), 1e-10);
  }
}

TEST(Phi, KrylovAgreesWithDense) {
  std::mt19937_64 rng(37);
  const GraphShape shape(60, 3);
  for (double t : {0.5, 2.0, 5.0}) {
    const LinearizedSystem sys(random_params(rng, shape, 0.5), random_state(rng, shape));
    const Vector u = sys.drift().values;
    EXPECT_LE(rel_err(phi_apply(sys, t, u, krylov_opts()), phi_apply(sys, t, u, dense_opts())),
              1e-8)
        << "t = " << t;
    const Vector w = random_vector(rng, shape.dim());
    EXPECT_LE(rel_err(expm_apply(sys, t, w, krylov_opts()), expm_apply(sys, t, w, dense_opts())),
              1e-8);
    EXPECT_LE(rel_err(expm_apply_transpose(sys, t, w, krylov_opts()),
                      expm_apply_transpose(sys, t, w, dense_opts())),
              1e-8);
  }
}

TEST(Phi, LinearInVector) {
  std::mt19937_64 rng(38);
  const GraphShape shape(4, 3);
  const LinearizedSystem sys(random_params(rng, shape, 0.5), random_state(rng, shape));
  const Vector u1 = random_vector(rng, 12);
  const Vector u2 = random_vector(rng, 12);
  for (const auto& o : {dense_opts(), krylov_opts()}) {
    const Vector lhs = phi_apply(sys, 1.0, u1 + u2, o);
    EXPECT_LE(rel_err(lhs, Vector(phi_apply(sys, 1.0, u1, o) + phi_apply(sys, 1.0, u2, o))), 1e-9);
  }
}

TEST(Phi, ExponentialIdentity) {
  // A (t phi(tA) u) + u = expm(tA) u
  std::mt19937_64 rng(39);
  const GraphShape shape(6, 4);
  const LinearizedSystem sys(random_params(rng, shape, 0.7), random_state(rng, shape));
  const Vector u = random_vector(rng, shape.dim());
  for (const auto& o : {dense_opts(), krylov_opts()}) {
    const Vector lhs = sys.apply(phi_apply(sys, 2.0, u, o)) + u;
    EXPECT_LE(rel_err(lhs, expm_apply(sys, 2.0, u, o)), 1e-9);
  }
}

TEST(Phi, RejectsNonPositiveTime) {
  std::mt19937_64 rng(40);
  const GraphShape shape(2, 3);
  const LinearizedSystem sys(FlowParams::zeros(shape), random_state(rng, shape));
  EXPECT_THROW(phi_apply(sys, 0.0, Vector::Zero(6)), Error);
}

TEST(Expm, ZeroTimeAndZeroMatrix) {
  std::mt19937_64 rng(41);
  const GraphShape shape(3, 3);
  const LinearizedSystem sys(random_params(rng, shape, 1.0), random_state(rng, shape));
  const Vector u = random_vector(rng, 9);
  EXPECT_EQ(expm_apply(sys, 0.0, u), u);
  const LinearizedSystem zero(FlowParams::zeros(shape), random_state(rng, shape));
  EXPECT_LE(rel_err(expm_apply(zero, 3.0, u), u), 1e-15);
}

TEST(Expm, MatchesIndependentExponential) {
  std::mt19937_64 rng(42);
  const GraphShape shape(5, 3);
  const LinearizedSystem sys(random_params(rng, shape, 0.6), random_state(rng, shape));
  const Vector u = random_vector(rng, 15);
  const Matrix ref = (1.5 * sys.dense()).exp();
  EXPECT_LE(rel_err(expm_apply(sys, 1.5, u), Vector(ref * u)), 1e-12);
  EXPECT_LE(rel_err(expm_apply_transpose(sys, 1.5, u), Vector(ref.transpose() * u)), 1e-12);
}

TEST(SolveLdaf, ZeroOmega) {
  std::mt19937_64 rng(43);
  const GraphShape shape(3, 3);
  const TangentField v = solve_ldaf(FlowParams::zeros(shape), random_state(rng, shape), 2.0);
  EXPECT_EQ(v.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SolveLdaf, VanishingLinearPartGrowsLinearly) {
  // Omega = a 1^T + 1 a^T with a tangent: at the barycenter P0 Omega R = 0
  // while b = P0 Omega s0 = n a.
  std::mt19937_64 rng(44);
  const GraphShape shape(4, 3);
  const Vector a = manifold::project_tangent(random_vector(rng, 12), shape).values;
  FlowParams p{shape, a * Vector::Ones(12).transpose() + Vector::Ones(12) * a.transpose()};
  const AssignmentState s0 = manifold::barycenter(shape);
  const LinearizedSystem sys(p, s0);
  EXPECT_LE(sys.dense().cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE(rel_err(sys.drift().values, Vector(4.0 * a)), 1e-14);
  for (const auto& o : {dense_opts(), krylov_opts()}) {
    EXPECT_LE(rel_err(solve_ldaf(p, s0, 2.5, o).values, Vector(2.5 * 4.0 * a)), 1e-13);
  }
}

TEST(SolveLdaf, MatchesRk4) {
  std::mt19937_64 rng(45);
  const GraphShape shape(10, 3);
  for (int trial = 0; trial < 3; ++trial) {
    const FlowParams p = random_params(rng, shape, 0.3);
    const AssignmentState s0 = random_state(rng, shape);
    const LinearizedSystem sys(p, s0);
    const Vector ref = rk4_linear(sys.dense(), sys.drift().values, 1.0, 1e-3);
    const Vector v = solve_ldaf(p, s0, 1.0).values;
    EXPECT_LE(rel_err(v, ref), 1e-6);
    EXPECT_TRUE(manifold::is_tangent(v, shape, 1e-12));
    EXPECT_LE(rel_err(solve_dense(sys, 1.0).mean, v), 1e-13);
  }
}

TEST(SolveDense, PropagatorIsExponential) {
  std::mt19937_64 rng(46);
  const GraphShape shape(4, 3);
  const LinearizedSystem sys(random_params(rng, shape, 0.5), random_state(rng, shape));
  EXPECT_LE(rel_err(solve_dense(sys, 1.2).propagator, Matrix((1.2 * sys.dense()).exp())), 1e-12);
}

TEST(Nonlinear, ZeroOmegaStaysPut) {
  std::mt19937_64 rng(47);
  const GraphShape shape(3, 4);
  const AssignmentState s0 = random_state(rng, shape);
  const AssignmentState s = integrate_nonlinear_daf(FlowParams::zeros(shape), s0, 1.0);
  EXPECT_LE((s.values - s0.values).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Nonlinear, RejectsBadStep) {
  std::mt19937_64 rng(48);
  const GraphShape shape(2, 3);
  EXPECT_THROW(integrate_nonlinear_daf(FlowParams::zeros(shape), random_state(rng, shape), 1.0, 0.0),
               Error);
}

double gap(const FlowParams& p, const AssignmentState& s0, double t, double step) {
  const AssignmentState lin = manifold::lift(s0, solve_ldaf(p, s0, t));
  return (lin.values - integrate_nonlinear_daf(p, s0, t, step).values).norm();
}

double slope(const std::vector<double>& ts, const std::vector<double>& errs) {
  return std::log10(errs.front() / errs.back()) / std::log10(ts.front() / ts.back());
}

TEST(Nonlinear, AgreementWithEulerAtStepProportionalToHorizon) {
  // Euler with h = T/10 has global error O(T^2), which dominates the gap.
  std::mt19937_64 rng(49);
  const GraphShape shape(10, 3);
  const FlowParams p = random_params(rng, shape, 0.3);
  const AssignmentState s0 = random_state(rng, shape);
  const std::vector<double> ts{1e-1, 1e-2, 1e-3};
  std::vector<double> errs;
  for (double t : ts) errs.push_back(gap(p, s0, t, t / 10.0));
  EXPECT_NEAR(slope(ts, errs), 2.0, 0.3);
}

TEST(Nonlinear, LinearizationGapIsThirdOrder) {
  // With a fine step the integrator error is negligible and the remaining
  // difference is the linearization itself.
  std::mt19937_64 rng(50);
  const GraphShape shape(6, 3);
  const FlowParams p = random_params(rng, shape, 0.3);
  const AssignmentState s0 = random_state(rng, shape);
  const std::vector<double> ts{1e-1, 1e-2};
  std::vector<double> errs;
  for (double t : ts) errs.push_back(gap(p, s0, t, t / 20000.0));
  EXPECT_NEAR(slope(ts, errs), 3.0, 0.3);
}

// Independent S-flow: S' = R_S[Omega_hat S] on row-stochastic n x c matrices, RK4.
Matrix s_flow_rhs(const Matrix& s, const Matrix& w) {
  const Matrix f = w * s;
  Matrix out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mean = s.row(i).dot(f.row(i));
    for (Eigen::Index j = 0; j < s.cols(); ++j) out(i, j) = s(i, j) * (f(i, j) - mean);
  }
  return out;
}

Matrix s_flow(const Matrix& s0, const Matrix& w, double t, double h) {
  const auto steps = static_cast<long>(std::llround(t / h));
  Matrix s = s0;
  for (long k = 0; k < steps; ++k) {
    const Matrix k1 = s_flow_rhs(s, w);
    const Matrix k2 = s_flow_rhs(s + 0.5 * h * k1, w);
    const Matrix k3 = s_flow_rhs(s + 0.5 * h * k2, w);
    const Matrix k4 = s_flow_rhs(s + h * k3, w);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return s;
}

TEST(Nonlinear, KroneckerOmegaReproducesSFlow) {
  std::mt19937_64 rng(51);
  const int n = 3;
  const int c = 4;
  const GraphShape shape(n, c);
  Matrix w(n, n);
  w << 0.5, 0.3, 0.2,
       0.3, 0.4, 0.3,
       0.2, 0.3, 0.5;
  const AssignmentState s0 = random_state(rng, shape, 1.5);
  FlowParams p{shape, Eigen::kroneckerProduct(w, Matrix::Identity(c, c)).eval()};
  const double t = 2.0;
  const Matrix s0m = Eigen::Map<const RowMatrix>(s0.values.data(), n, c);
  const Matrix ref = s_flow(s0m, w, t, 1e-3);
  const AssignmentState s = integrate_nonlinear_daf(p, s0, t, 1e-4);
  const Matrix sm = Eigen::Map<const RowMatrix>(s.values.data(), n, c);
  EXPECT_LE((sm - ref).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LE((ref.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Frechet, ZeroDirectionAndZeroMatrix) {
  std::mt19937_64 rng(52);
  const GraphShape shape(3, 3);
  const LinearizedSystem sys(random_params(rng, shape, 0.5), random_state(rng, shape));
  const Vector u = random_vector(rng, 9);
  EXPECT_EQ(frechet_expm_apply(sys, 1.0, Matrix::Zero(9, 9), u).cwiseAbs().maxCoeff(), 0.0);
  const LinearizedSystem zero(FlowParams::zeros(shape), random_state(rng, shape));
  const Matrix e = random_matrix(rng, 9, 9);
  EXPECT_LE(rel_err(frechet_expm_apply(zero, 0.7, e, u), Vector(0.7 * e * u)), 1e-14);
}

TEST(Frechet, MatchesCentralDifferences) {
  std::mt19937_64 rng(53);
  const GraphShape shape(4, 3);
  for (int trial = 0; trial < 5; ++trial) {
    const LinearizedSystem sys(random_params(rng, shape, 0.5), random_state(rng, shape));
    const Matrix a = sys.dense();
    const Matrix e = random_matrix(rng, 12, 12);
    const Vector u = random_vector(rng, 12);
    const double t = 1.3;
    const double h = 1e-6;
    const Vector fd = ((t * (a + h * e)).exp() - (t * (a - h * e)).exp()) * u / (2.0 * h);
    EXPECT_LE(rel_err(frechet_expm_apply(sys, t, e, u), fd), 1e-5);
  }
}

TEST(Frechet, ThrowsAboveDenseLimit) {
  std::mt19937_64 rng(54);
  const GraphShape shape(5, 3);
  const LinearizedSystem sys(FlowParams::zeros(shape), random_state(rng, shape));
  SolverOptions o;
  o.dense_limit = 10;
  EXPECT_THROW(frechet_expm_apply(sys, 1.0, Matrix::Zero(15, 15), Vector::Zero(15), o), Error);
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(55);
  const GraphShape shape(3, 3);
  const double horizon = 1.5;
  for (int trial = 0; trial < 3; ++trial) {
    const FlowParams p = random_params(rng, shape, 0.6);
    const AssignmentState s0 = random_state(rng, shape);
    const Vector g = random_vector(rng, 9);
    auto f = [&](const Matrix& omega, const Vector& s) {
      const LinearizedSystem sys(FlowParams{shape, omega}, AssignmentState{shape, s});
      return g.dot(solve_dense(sys, horizon).mean);
    };
    const SolutionGradient grad = solve_ldaf_backward(LinearizedSystem(p, s0), horizon, g);
    const double h = 1e-6;
    for (int dir = 0; dir < 4; ++dir) {
      const Matrix e = random_matrix(rng, 9, 9);
      const double fd = (f(p.omega + h * e, s0.values) - f(p.omega - h * e, s0.values)) / (2 * h);
      const double an = (grad.omega.array() * e.array()).sum();
      EXPECT_NEAR(an, fd, 1e-7 * std::max(1.0, std::abs(fd)));
      const Vector ds = random_vector(rng, 9, 0.01);
      const double fs = (f(p.omega, s0.values + h * ds) - f(p.omega, s0.values - h * ds)) / (2 * h);
      EXPECT_NEAR(grad.state.dot(ds), fs, 1e-7 * std::max(1.0, std::abs(fs)));
    }
  }
}

}  // namespace
}  // namespace ldaf::flow
