#include "ldaf/quadrature.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "ldaf/error.hpp"
#include "ldaf/linalg.hpp"
#include "ldaf/normal.hpp"
#include "ldaf/parallel.hpp"
#include "ldaf/sobol.hpp"

namespace ldaf::quadrature {

namespace {

// Points are processed in fixed blocks so that partial sums, and hence the
// rounding, do not depend on the number of threads.
constexpr int kBlock = 1024;
constexpr long long kMcChunk = 1 << 16;
constexpr double kTwoPow32 = 4294967296.0;

void check_batch(std::span<const MarginalMoments> batch, std::span<const int> labels, int dim) {
  require(!batch.empty(), ErrorKind::InvalidArgument, "expected risk: empty batch");
  require(batch.size() == labels.size(), ErrorKind::ShapeMismatch,
          "expected risk: one label per datum required");
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& mom = batch[k];
    const int c = static_cast<int>(mom.logits_shift.size());
    require(c >= 2 && mom.mean_hat.size() == c - 1 && mom.chol.rows() == c - 1 &&
                mom.chol.cols() == c - 1,
            ErrorKind::ShapeMismatch, "expected risk: inconsistent marginal moments");
    require(c - 1 == dim, ErrorKind::ShapeMismatch,
            "expected risk: point dimension must equal c - 1");
    require(labels[k] >= 0 && labels[k] < c, ErrorKind::InvalidArgument,
            "expected risk: label out of range");
  }
}

// One datum's loss as a function of a standard-normal point, without allocations.
class Integrand {
 public:
  Integrand(const MarginalMoments& mom, int label, LossKind loss)
      : mom_(mom), label_(label), loss_(loss), c_(static_cast<int>(mom.logits_shift.size())) {
    base_ = mom.logits_shift;
    base_.head(c_ - 1) += mom.mean_hat;
    base_(c_ - 1) -= mom.mean_hat.sum();
    logits_.resize(c_);
  }

  double at(const double* z) {
    logits_ = base_;
    double tail = 0.0;
    for (int r = 0; r < c_ - 1; ++r) {
      double y = 0.0;
      for (int s = 0; s <= r; ++s) y += mom_.chol(r, s) * z[s];
      logits_(r) += y;
      tail += y;
    }
    logits_(c_ - 1) -= tail;
    return loss_value(loss_, logits_, label_);
  }

 private:
  const MarginalMoments& mom_;
  int label_;
  LossKind loss_;
  int c_;
  Vector base_;
  Vector logits_;
};

// Per-datum sums over every point; per-point batch means in `point_means`.
std::vector<double> datum_sums(std::span<const MarginalMoments> batch, std::span<const int> labels,
                               LossKind loss, const RowMatrix& normals, int threads,
                               std::vector<double>* point_means) {
  const long long n = normals.rows();
  const std::size_t m = batch.size();
  const long long blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<std::size_t>(blocks) * m, 0.0);
  if (point_means) point_means->assign(static_cast<std::size_t>(n), 0.0);
  parallel_for(blocks, threads, [&](long long blk) {
    const long long j0 = blk * kBlock;
    const long long j1 = std::min(n, j0 + kBlock);
    std::vector<linalg::CompensatedSum> per_point(point_means ? j1 - j0 : 0);
    for (std::size_t k = 0; k < m; ++k) {
      Integrand f(batch[k], labels[k], loss);
      linalg::CompensatedSum acc;
      for (long long j = j0; j < j1; ++j) {
        const double v = f.at(normals.row(j).data());
        acc.add(v);
        if (point_means) per_point[j - j0].add(v);
      }
      partial[static_cast<std::size_t>(blk) * m + k] = acc.value();
    }
    if (point_means) {
      for (long long j = j0; j < j1; ++j) {
        (*point_means)[j] = per_point[j - j0].value() / static_cast<double>(m);
      }
    }
  });
  std::vector<double> sums(m);
  for (std::size_t k = 0; k < m; ++k) {
    linalg::CompensatedSum acc;
    for (long long blk = 0; blk < blocks; ++blk) acc.add(partial[blk * m + k]);
    sums[k] = acc.value();
  }
  return sums;
}

double batch_mean(const std::vector<double>& per_datum) {
  linalg::CompensatedSum acc;
  for (double v : per_datum) acc.add(v);
  return acc.value() / static_cast<double>(per_datum.size());
}

PointSet centered_net(int dim, int n_points, const std::vector<std::uint32_t>* shift) {
  require(n_points >= 1, ErrorKind::InvalidArgument, "qmc: n_points must be positive");
  const int m = std::bit_width(static_cast<unsigned>(n_points - 1));
  const double cell = std::ldexp(1.0, -m);
  SobolStream stream(dim, 0);
  PointSet ps{Method::QMC, RowMatrix(n_points, dim)};
  std::vector<std::uint32_t> x(static_cast<std::size_t>(dim));
  for (int i = 0; i < n_points; ++i) {
    stream.next(x.data());
    for (int d = 0; d < dim; ++d) {
      double u;
      if (shift) {
        u = (static_cast<double>(x[d] ^ (*shift)[d]) + 0.5) / kTwoPow32;
      } else {
        // The first 2^m points only use the top m bits.
        u = (static_cast<double>(m == 0 ? 0u : x[d] >> (32 - m)) + 0.5) * cell;
      }
      ps.normals(i, d) = gauss_icdf(u);
    }
  }
  return ps;
}

// Cross-entropy integrand gradient at one normal point z:
// logits = P (m_hat + H z) + shift, g = softmax(logits) - e_label,
// d/d shift = g, d/d m_hat = P^T g, d/d H = (P^T g) z^T on the lower triangle.
class GradKernel {
 public:
  GradKernel(const MarginalMoments& mom, int label)
      : mom_(mom), label_(label), c_(static_cast<int>(mom.logits_shift.size())) {
    base_ = mom.logits_shift;
    base_.head(c_ - 1) += mom.mean_hat;
    base_(c_ - 1) -= mom.mean_hat.sum();
    g_.resize(c_);
  }

  void accumulate(const double* z, double weight, MarginalGradient& out) {
    double tail = 0.0;
    for (int r = 0; r < c_ - 1; ++r) {
      double y = 0.0;
      for (int s = 0; s <= r; ++s) y += mom_.chol(r, s) * z[s];
      g_(r) = base_(r) + y;
      tail += y;
    }
    g_(c_ - 1) = base_(c_ - 1) - tail;
    const double mx = g_.maxCoeff();
    double total = 0.0;
    for (int j = 0; j < c_; ++j) {
      g_(j) = std::exp(g_(j) - mx);
      total += g_(j);
    }
    for (int j = 0; j < c_; ++j) g_(j) /= total;
    g_(label_) -= 1.0;
    const double last = g_(c_ - 1);
    for (int r = 0; r < c_ - 1; ++r) {
      const double gm = weight * (g_(r) - last);
      out.mean_hat(r) += gm;
      for (int s = 0; s <= r; ++s) out.chol(r, s) += gm * z[s];
    }
    for (int j = 0; j < c_; ++j) out.logits_shift(j) += weight * g_(j);
  }

 private:
  const MarginalMoments& mom_;
  int label_;
  int c_;
  Vector base_;
  Vector g_;
};

double uniform_open(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

double loss_value(LossKind loss, const Vector& logits, int label) {
  const Eigen::Index c = logits.size();
  if (loss == LossKind::ZeroOne) {
    const double target = logits(label);
    for (Eigen::Index j = 0; j < c; ++j) {
      if (j != label && logits(j) >= target) return 1.0;
    }
    return std::isnan(target) ? 1.0 : 0.0;
  }
  const double mx = logits.maxCoeff();
  double s = 0.0;
  for (Eigen::Index j = 0; j < c; ++j) s += std::exp(logits(j) - mx);
  return std::max(0.0, mx + std::log(s) - logits(label));
}

Vector cross_entropy_grad(const Vector& logits, int label) {
  Vector g = (logits.array() - logits.maxCoeff()).exp();
  g /= g.sum();
  g(label) -= 1.0;
  return g;
}

Vector logits_at(const MarginalMoments& mom, const Vector& z) {
  const Vector y = mom.mean_hat + mom.chol.triangularView<Eigen::Lower>() * z;
  return manifold::basis_embed(y) + mom.logits_shift;
}

Vector standardized_logits(const MarginalMoments& mom, const Vector& u) {
  Vector z(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) z(i) = gauss_icdf(u(i));
  return logits_at(mom, z);
}

PointSet qmc_points(int dim, int n_points) { return centered_net(dim, n_points, nullptr); }

PointSet shifted_qmc_points(int dim, int n_points, const std::vector<std::uint32_t>& shift) {
  require(static_cast<int>(shift.size()) == dim, ErrorKind::ShapeMismatch,
          "qmc: shift must have one word per dimension");
  return centered_net(dim, n_points, &shift);
}

PointSet mc_points(int dim, int n_points, std::uint64_t seed) {
  require(n_points >= 1 && dim >= 1, ErrorKind::InvalidArgument, "mc: invalid point count");
  std::mt19937_64 rng(seed);
  PointSet ps{Method::MC, RowMatrix(n_points, dim)};
  for (int i = 0; i < n_points; ++i) {
    for (int d = 0; d < dim; ++d) ps.normals(i, d) = gauss_icdf(uniform_open(rng));
  }
  return ps;
}

RiskEstimate risk_on_points(std::span<const MarginalMoments> batch, std::span<const int> labels,
                            LossKind loss, const PointSet& points, int threads) {
  check_batch(batch, labels, points.dim());
  require(points.size() >= 1, ErrorKind::InvalidArgument, "expected risk: empty point set");
  RiskEstimate est;
  est.n_points = points.size();
  est.method = points.method;
  est.per_datum = datum_sums(batch, labels, loss, points.normals, threads, nullptr);
  for (double& v : est.per_datum) v /= static_cast<double>(points.size());
  est.value = batch_mean(est.per_datum);
  return est;
}

RiskEstimate expected_risk(std::span<const MarginalMoments> batch, std::span<const int> labels,
                           const RiskOptions& options) {
  require(!batch.empty(), ErrorKind::InvalidArgument, "expected risk: empty batch");
  const int dim = static_cast<int>(batch.front().mean_hat.size());
  RiskEstimate est =
      risk_on_points(batch, labels, options.loss, qmc_points(dim, options.n_points), options.threads);
  if (options.replicates >= 2) {
    std::mt19937_64 rng(options.replicate_seed);
    std::vector<double> means;
    for (int r = 0; r < options.replicates; ++r) {
      std::vector<std::uint32_t> shift(static_cast<std::size_t>(dim));
      for (auto& s : shift) s = static_cast<std::uint32_t>(rng() >> 32);
      means.push_back(risk_on_points(batch, labels, options.loss,
                                     shifted_qmc_points(dim, options.n_points, shift),
                                     options.threads)
                          .value);
    }
    double mean = 0.0;
    for (double v : means) mean += v;
    mean /= static_cast<double>(means.size());
    double var = 0.0;
    for (double v : means) var += (v - mean) * (v - mean);
    var /= static_cast<double>(means.size() - 1);
    est.error_estimate = std::sqrt(var / static_cast<double>(means.size()));
  }
  return est;
}

RiskEstimate mc_expected_risk(std::span<const MarginalMoments> batch, std::span<const int> labels,
                              LossKind loss, long long n_points, std::uint64_t seed, int threads) {
  require(n_points >= 1, ErrorKind::InvalidArgument, "mc: n_points must be positive");
  require(!batch.empty(), ErrorKind::InvalidArgument, "expected risk: empty batch");
  const int dim = static_cast<int>(batch.front().mean_hat.size());
  check_batch(batch, labels, dim);
  std::mt19937_64 rng(seed);
  std::vector<linalg::CompensatedSum> sums(batch.size());
  linalg::CompensatedSum point_sum, point_sq;
  RowMatrix normals;
  std::vector<double> point_means;
  for (long long done = 0; done < n_points;) {
    const long long chunk = std::min(kMcChunk, n_points - done);
    normals.resize(chunk, dim);
    for (long long i = 0; i < chunk; ++i) {
      for (int d = 0; d < dim; ++d) normals(i, d) = gauss_icdf(uniform_open(rng));
    }
    const std::vector<double> s = datum_sums(batch, labels, loss, normals, threads, &point_means);
    for (std::size_t k = 0; k < batch.size(); ++k) sums[k].add(s[k]);
    for (double v : point_means) {
      point_sum.add(v);
      point_sq.add(v * v);
    }
    done += chunk;
  }
  RiskEstimate est;
  est.n_points = static_cast<int>(std::min<long long>(n_points, std::numeric_limits<int>::max()));
  est.method = Method::MC;
  est.per_datum.resize(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    est.per_datum[k] = sums[k].value() / static_cast<double>(n_points);
  }
  est.value = batch_mean(est.per_datum);
  if (n_points > 1) {
    const double nn = static_cast<double>(n_points);
    const double mean = point_sum.value() / nn;
    const double var = std::max(0.0, (point_sq.value() - nn * mean * mean) / (nn - 1.0));
    est.error_estimate = std::sqrt(var / nn);
  }
  return est;
}

void integrand_grad(const MarginalMoments& mom, const Vector& z, int label, double weight,
                    MarginalGradient& out) {
  require(z.size() == mom.mean_hat.size(), ErrorKind::ShapeMismatch,
          "integrand_grad: point dimension must equal c - 1");
  GradKernel(mom, label).accumulate(z.data(), weight, out);
}

std::vector<MarginalGradient> expected_risk_grad(std::span<const MarginalMoments> batch,
                                                 std::span<const int> labels, LossKind loss,
                                                 const PointSet& points, double upstream,
                                                 int threads) {
  require(loss == LossKind::CrossEntropy, ErrorKind::InvalidArgument,
          "expected_risk_grad: the 01 loss is not differentiable; use the cross-entropy surrogate");
  check_batch(batch, labels, points.dim());
  const int c = points.dim() + 1;
  const double scale =
      upstream / (static_cast<double>(batch.size()) * static_cast<double>(points.size()));
  std::vector<MarginalGradient> grads(batch.size(), MarginalGradient::zeros(c));
  parallel_for(static_cast<long long>(batch.size()), threads, [&](long long k) {
    // Sum of integrand gradients over the shared points, then one scaling.
    MarginalGradient& acc = grads[k];
    GradKernel kernel(batch[k], labels[k]);
    for (int j = 0; j < points.size(); ++j) kernel.accumulate(points.normals.row(j).data(), 1.0, acc);
    acc.mean_hat *= scale;
    acc.chol *= scale;
    acc.logits_shift *= scale;
  });
  return grads;
}

}  // namespace ldaf::quadrature
