#pragma once

// Expected empirical risk of the stochastic classifier. Per datum, the
// classification-node logits are P (m_hat + H z) + shift with z ~ N(0, I_{c-1});
// substituting z = Phi^-1(u) turns the expectation into an integral over the
// unit cube, evaluated with one point set shared by all data.

#include <cstdint>
#include <span>
#include <vector>

#include "ldaf/pushforward.hpp"
#include "ldaf/types.hpp"

namespace ldaf::quadrature {

using pushforward::MarginalGradient;
using pushforward::MarginalMoments;

enum class LossKind { CrossEntropy, ZeroOne };
enum class Method { QMC, MC };

/// 01 loss counts argmax ties as errors.
double loss_value(LossKind loss, const Vector& logits, int label);

/// Gradient of the cross-entropy loss with respect to the logits.
Vector cross_entropy_grad(const Vector& logits, int label);

/// P (m_hat + H z) + shift for a standard-normal point z.
Vector logits_at(const MarginalMoments& mom, const Vector& z);
/// Same, for a unit-cube point u (z = Phi^-1(u) componentwise).
Vector standardized_logits(const MarginalMoments& mom, const Vector& u);

/// A point set already mapped through Phi^-1, n_points x (c - 1).
struct PointSet {
  Method method = Method::QMC;
  RowMatrix normals;

  [[nodiscard]] int size() const noexcept { return static_cast<int>(normals.rows()); }
  [[nodiscard]] int dim() const noexcept { return static_cast<int>(normals.cols()); }
};

/// Centered Sobol net: points 0 .. n-1 with every coordinate moved by half a
/// cell, 2^-(m+1) for 2^m >= n. No coordinate touches the cube boundary.
PointSet qmc_points(int dim, int n_points);

/// Centered net after a digital shift of the integer coordinates; each
/// replicate is an unbiased randomized-QMC rule.
PointSet shifted_qmc_points(int dim, int n_points, const std::vector<std::uint32_t>& shift);

/// i.i.d. uniform points from a seeded generator, mapped through Phi^-1.
PointSet mc_points(int dim, int n_points, std::uint64_t seed);

struct RiskEstimate {
  double value = 0.0;
  int n_points = 0;
  Method method = Method::QMC;
  /// Standard error over randomized replicates (QMC) or of the sample mean
  /// (MC); zero when not requested.
  double error_estimate = 0.0;
  /// Per-datum risks, in input order.
  std::vector<double> per_datum;
};

struct RiskOptions {
  LossKind loss = LossKind::ZeroOne;
  int n_points = 8192;
  /// Number of digitally shifted replicates used for error_estimate (QMC).
  int replicates = 0;
  std::uint64_t replicate_seed = 0;
  int threads = 1;
};

/// Risk of every datum under one point set; (1/m) sum_k (1/n) sum_j loss.
RiskEstimate risk_on_points(std::span<const MarginalMoments> batch, std::span<const int> labels,
                            LossKind loss, const PointSet& points, int threads = 1);

/// QMC expected empirical risk.
RiskEstimate expected_risk(std::span<const MarginalMoments> batch, std::span<const int> labels,
                           const RiskOptions& options);

/// Plain Monte Carlo estimate with i.i.d. points, streamed in chunks so very
/// large point counts do not need to be stored.
RiskEstimate mc_expected_risk(std::span<const MarginalMoments> batch, std::span<const int> labels,
                              LossKind loss, long long n_points, std::uint64_t seed,
                              int threads = 1);

/// Gradient of the cross-entropy integrand at one normal point, scaled by
/// `weight`, added into `out`.
void integrand_grad(const MarginalMoments& mom, const Vector& z, int label, double weight,
                    MarginalGradient& out);

/// Gradient of upstream * risk_on_points(...) with respect to every datum's
/// moments. Only the lower triangle of each chol gradient is populated.
std::vector<MarginalGradient> expected_risk_grad(std::span<const MarginalMoments> batch,
                                                 std::span<const int> labels, LossKind loss,
                                                 const PointSet& points, double upstream = 1.0,
                                                 int threads = 1);

}  // namespace ldaf::quadrature
