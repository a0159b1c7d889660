#include "ldaf/pacbayes.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "ldaf/error.hpp"
#include "ldaf/parallel.hpp"

namespace ldaf::pacbayes {

using pushforward::MarginalMoments;

void BoundInputs::validate() const {
  require(std::isfinite(emp_risk) && emp_risk >= 0.0, ErrorKind::InvalidArgument,
          "bound: empirical risk must be finite and non-negative");
  require(std::isfinite(kl) && kl >= 0.0, ErrorKind::InvalidArgument,
          "bound: KL must be finite and non-negative");
  require(m >= 1, ErrorKind::InvalidArgument, "bound: sample size must be positive");
  require(epsilon > 0.0, ErrorKind::InvalidArgument, "bound: epsilon must be positive");
  require(lambda > 0.0 && lambda < 2.0, ErrorKind::InvalidArgument,
          "bound: lambda must lie in (0, 2), got " + std::to_string(lambda));
}

double log_term(long long m, double epsilon) {
  return std::log(2.0 * std::sqrt(static_cast<double>(m)) / epsilon);
}

double bound_eval(const BoundInputs& in) {
  in.validate();
  const double half = 1.0 - in.lambda / 2.0;
  return in.emp_risk / half +
         (in.kl + log_term(in.m, in.epsilon)) / (static_cast<double>(in.m) * in.lambda * half);
}

BoundPartials bound_partials(const BoundInputs& in) {
  in.validate();
  const double half = 1.0 - in.lambda / 2.0;
  return {1.0 / half, 1.0 / (static_cast<double>(in.m) * in.lambda * half)};
}

double lambda_opt(double emp_risk, double kl, long long m, double epsilon) {
  BoundInputs{emp_risk, kl, m, epsilon, 1.0}.validate();
  const double complexity = kl + log_term(m, epsilon);
  require(complexity > 0.0, ErrorKind::InvalidArgument,
          "lambda_opt: KL plus log term must be positive");
  const double lambda =
      2.0 / (std::sqrt(2.0 * static_cast<double>(m) * emp_risk / complexity + 1.0) + 1.0);
  // Keep strictly inside (0, 2) even when the ratio overflows.
  return std::max(lambda, std::numeric_limits<double>::min());
}

namespace {

void check_pair(const LowRankCov& post, const LowRankCov& prior) {
  require(post.shape == prior.shape, ErrorKind::ShapeMismatch, "kl: covariance shapes differ");
  post.validate();
  prior.validate();
}

double logdet_factor(const LowRankCov& cov) {
  // det(D + q q^T) = det(D) (1 + q^T D^-1 q)
  return cov.d.array().log().sum() + std::log1p(cov.q.dot(cov.q.cwiseQuotient(cov.d)));
}

// Sherman-Morrison pieces of (D + q q^T)^-1 = D^-1 - alpha a a^T.
struct Inverse {
  Vector inv_d;
  Vector a;
  double alpha;

  explicit Inverse(const LowRankCov& cov)
      : inv_d(cov.d.cwiseInverse()), a(cov.q.cwiseQuotient(cov.d)),
        alpha(1.0 / (1.0 + cov.q.dot(a))) {}

  [[nodiscard]] Vector apply(const Vector& x) const {
    return inv_d.cwiseProduct(x) - (alpha * a.dot(x)) * a;
  }
  [[nodiscard]] Vector diag_of_square() const {
    return inv_d.array().square() - 2.0 * alpha * a.array().square() * inv_d.array() +
           alpha * alpha * a.squaredNorm() * a.array().square();
  }
};

Vector apply_factor(const LowRankCov& cov, const Vector& x) {
  return cov.d.cwiseProduct(x) + cov.q.dot(x) * cov.q;
}

}  // namespace

double kl_lowrank(const LowRankCov& post, const LowRankCov& prior) {
  check_pair(post, prior);
  const auto k = static_cast<double>(post.d.size());
  // X = Mp^-1 M = Diag(lam) + u q^T + a w^T.
  const Inverse inv(prior);
  const Vector lam = post.d.cwiseProduct(inv.inv_d);
  const Vector u = inv.apply(post.q);
  const Vector w = -inv.alpha * post.d.cwiseProduct(inv.a);
  const Vector& q = post.q;
  const Vector& a = inv.a;
  const double frob = lam.squaredNorm() + u.squaredNorm() * q.squaredNorm() +
                      a.squaredNorm() * w.squaredNorm() +
                      2.0 * (lam.array() * u.array() * q.array()).sum() +
                      2.0 * (lam.array() * a.array() * w.array()).sum() +
                      2.0 * u.dot(a) * q.dot(w);
  const double kl = 0.5 * (frob - k) + logdet_factor(prior) - logdet_factor(post);
  return std::max(0.0, kl);
}

CovGradient kl_lowrank_grad(const LowRankCov& post, const LowRankCov& prior) {
  check_pair(post, prior);
  // dKL = <G, dM>, G = (M Mp^-2 + Mp^-2 M) / 2 - M^-1, dM = Diag(dd) + dq q^T + q dq^T.
  const Inverse inv_p(prior);
  const Inverse inv(post);
  const Vector& q = post.q;
  const Vector pq = inv_p.apply(inv_p.apply(q));  // Mp^-2 q
  const Vector diag_m_p2 = post.d.cwiseProduct(inv_p.diag_of_square()) + q.cwiseProduct(pq);
  const Vector diag_inv = inv.inv_d - inv.alpha * inv.a.cwiseAbs2();
  CovGradient g;
  g.d = diag_m_p2 - diag_inv;
  const Vector gq = 0.5 * (apply_factor(post, pq) + inv_p.apply(inv_p.apply(apply_factor(post, q)))) -
                    inv.apply(q);
  g.q = 2.0 * gq;
  return g;
}

CovGradient kl_lowrank_hess_diag(const LowRankCov& post, const LowRankCov& prior) {
  check_pair(post, prior);
  // KL = tr(S M^2) / 2 - logdet M + const with S = Mp^-2. Along d_i, dM = e_i e_i^T;
  // along q_i, dM = e_i q^T + q e_i^T and d2M = 2 e_i e_i^T.
  const Inverse inv_p(prior);
  const Inverse inv(post);
  const Vector& q = post.q;
  const Vector s_diag = inv_p.diag_of_square();
  const Vector sq = inv_p.apply(inv_p.apply(q));
  const Vector inv_diag = inv.inv_d - inv.alpha * inv.a.cwiseAbs2();
  const Vector iq = inv.apply(q);
  const double q2 = q.squaredNorm();
  const double qsq = q.dot(sq);
  const double qiq = q.dot(iq);
  CovGradient h;
  h.d = s_diag + inv_diag.cwiseAbs2();
  h.q = (2.0 * q.cwiseProduct(sq) + q2 * s_diag + Vector::Constant(q.size(), qsq) +
         2.0 * (s_diag.cwiseProduct(post.d) + sq.cwiseProduct(q))) +
        (2.0 * iq.cwiseAbs2() + 2.0 * qiq * inv_diag - 2.0 * inv_diag);
  return h;
}

LowRankCov init_prior_cov(const manifold::GraphShape& shape, std::uint64_t seed, double min_d) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.1, 0.1);
  const int k = shape.coord_dim();
  LowRankCov cov{shape, Vector(k), Vector(k)};
  for (int i = 0; i < k; ++i) cov.d(i) = std::max(min_d, dist(rng));
  for (int i = 0; i < k; ++i) cov.q(i) = dist(rng);
  return cov;
}

void PosteriorOptions::validate() const {
  require(alternations >= 0 && epochs >= 0, ErrorKind::InvalidArgument,
          "posterior: alternations and epochs must be non-negative");
  require(lr >= 0.0 && std::isfinite(lr), ErrorKind::InvalidArgument,
          "posterior: learning rate must be non-negative");
  require(n_points >= 1, ErrorKind::InvalidArgument, "posterior: n_points must be positive");
  require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::InvalidArgument,
          "posterior: epsilon must lie in (0, 1)");
  require(min_d > 0.0, ErrorKind::InvalidArgument, "posterior: min_d must be positive");
}

namespace {

std::vector<MarginalMoments> all_moments(const LowRankCov& cov,
                                         std::span<const ClassNodeOperator> data, int threads) {
  std::vector<MarginalMoments> out(data.size());
  parallel_for(static_cast<long long>(data.size()), threads,
               [&](long long k) { out[k] = pushforward::push_marginal(data[k], cov); });
  return out;
}

void check_data(std::span<const ClassNodeOperator> data, std::span<const int> labels,
                const LowRankCov& cov) {
  require(!data.empty(), ErrorKind::InvalidArgument, "validation set is empty");
  require(data.size() == labels.size(), ErrorKind::ShapeMismatch,
          "one label per validation datum required");
  for (const auto& op : data) {
    require(op.shape == cov.shape, ErrorKind::ShapeMismatch,
            "validation operator and covariance shapes differ");
  }
}

constexpr int kMaxHalvings = 40;

}  // namespace

TraceEntry surrogate_bound(const LowRankCov& post, const LowRankCov& prior,
                           std::span<const ClassNodeOperator> data, std::span<const int> labels,
                           const quadrature::PointSet& points, long long m, double epsilon,
                           double lambda, int threads) {
  check_data(data, labels, post);
  const auto moments = all_moments(post, data, threads);
  TraceEntry e;
  e.surrogate_risk =
      quadrature::risk_on_points(moments, labels, quadrature::LossKind::CrossEntropy, points,
                                 threads)
          .value;
  e.kl = kl_lowrank(post, prior);
  e.lambda = lambda;
  e.bound = bound_eval({e.surrogate_risk, e.kl, m, epsilon, lambda});
  return e;
}

CovGradient surrogate_bound_grad(const LowRankCov& post, const LowRankCov& prior,
                                 std::span<const ClassNodeOperator> data,
                                 std::span<const int> labels, const quadrature::PointSet& points,
                                 long long m, double epsilon, double lambda, int threads) {
  check_data(data, labels, post);
  const BoundPartials dp = bound_partials({0.0, 0.0, m, epsilon, lambda});
  const auto moments = all_moments(post, data, threads);
  const auto upstream = quadrature::expected_risk_grad(
      moments, labels, quadrature::LossKind::CrossEntropy, points, dp.emp_risk, threads);
  const int k = post.shape.coord_dim();
  std::vector<CovGradient> per_datum(data.size());
  parallel_for(static_cast<long long>(data.size()), threads, [&](long long i) {
    per_datum[i] = pushforward::push_marginal_grad(data[i], post, moments[i], upstream[i]);
  });
  CovGradient g = CovGradient::zeros(k);
  for (const auto& gi : per_datum) g += gi;
  const CovGradient gk = kl_lowrank_grad(post, prior);
  g.d += dp.kl * gk.d;
  g.q += dp.kl * gk.q;
  return g;
}

PosteriorResult optimize_posterior(const LowRankCov& prior, std::span<const ClassNodeOperator> data,
                                   std::span<const int> labels, const PosteriorOptions& options) {
  options.validate();
  check_data(data, labels, prior);
  prior.validate();
  const long long m = static_cast<long long>(data.size());
  const int c = prior.shape.classes();
  const quadrature::PointSet points = quadrature::qmc_points(c - 1, options.n_points);

  PosteriorResult result{prior, 1.0, {}, false};
  LowRankCov post = prior;
  double best = INFINITY;
  int rises = 0;
  for (int t = 0; t <= options.alternations; ++t) {
    // (a) exact lambda update at the current posterior.
    TraceEntry e = surrogate_bound(post, prior, data, labels, points, m, options.epsilon, 1.0,
                                   options.threads);
    const double lambda = lambda_opt(e.surrogate_risk, e.kl, m, options.epsilon);
    e.lambda = lambda;
    e.bound = bound_eval({e.surrogate_risk, e.kl, m, options.epsilon, lambda});
    e.alternation = t;
    if (!result.trace.empty() && e.bound > result.trace.back().bound) {
      ++rises;
    } else {
      rises = 0;
    }
    result.trace.push_back(e);
    if (e.bound < best) {
      best = e.bound;
      result.posterior = post;
      result.lambda = lambda;
    }
    if (rises >= 3) {
      result.diverged = true;
      break;
    }
    if (t == options.alternations) break;
    // (b) gradient steps on the bound at fixed lambda. Coordinates where the
    // KL term is stiff (prior d at the clamp) get a semi-implicit step
    // -lr g / (1 + lr c h), h the KL Hessian diagonal and c its weight in the
    // bound; elsewhere this is plain gradient descent. The step is halved
    // until the bound does not increase.
    const double kl_weight = bound_partials({0.0, 0.0, m, options.epsilon, lambda}).kl;
    double current = e.bound;
    for (int epoch = 0; epoch < options.epochs && options.lr > 0.0; ++epoch) {
      const CovGradient g = surrogate_bound_grad(post, prior, data, labels, points, m,
                                                 options.epsilon, lambda, options.threads);
      require(g.d.allFinite() && g.q.allFinite(), ErrorKind::Numerical,
              "posterior: non-finite gradient at alternation " + std::to_string(t));
      const CovGradient h = kl_lowrank_hess_diag(post, prior);
      auto damped = [&](const Vector& grad, const Vector& curv, double step) -> Vector {
        return step * grad.array() / (1.0 + step * kl_weight * curv.array().max(0.0));
      };
      bool accepted = false;
      double step = options.lr;
      for (int halving = 0; halving < kMaxHalvings && !accepted; ++halving, step *= 0.5) {
        LowRankCov cand = post;
        cand.d = (post.d - damped(g.d, h.d, step)).cwiseMax(options.min_d);
        cand.q -= damped(g.q, h.q, step);
        if (!cand.q.allFinite()) continue;
        double b = INFINITY;
        try {
          b = surrogate_bound(cand, prior, data, labels, points, m, options.epsilon, lambda,
                              options.threads)
                  .bound;
        } catch (const Error& err) {
          // Overflowing KL or a failed Cholesky: treat as a rejected step.
          if (err.kind() != ErrorKind::Numerical && err.kind() != ErrorKind::InvalidArgument) throw;
        }
        if (b <= current) {
          post = std::move(cand);
          current = b;
          accepted = true;
        }
      }
      if (!accepted) break;
    }
  }
  return result;
}

Certificate certify(const LowRankCov& posterior, const LowRankCov& prior,
                    std::span<const ClassNodeOperator> data, std::span<const int> labels,
                    double epsilon, const CertifyOptions& options) {
  check_data(data, labels, posterior);
  require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::InvalidArgument,
          "certify: epsilon must lie in (0, 1)");
  const auto moments = all_moments(posterior, data, options.threads);
  quadrature::RiskOptions ro;
  ro.loss = quadrature::LossKind::ZeroOne;
  ro.n_points = options.n_points;
  ro.replicates = options.padding ? std::max(options.replicates, 2) : options.replicates;
  ro.replicate_seed = options.replicate_seed;
  ro.threads = options.threads;
  const quadrature::RiskEstimate risk = quadrature::expected_risk(moments, labels, ro);

  Certificate cert;
  cert.m = static_cast<long long>(data.size());
  cert.epsilon = epsilon;
  cert.n_points = options.n_points;
  cert.kl = kl_lowrank(posterior, prior);
  cert.emp_risk_01 = risk.value;
  cert.emp_risk_error = risk.error_estimate;
  cert.padded = options.padding;
  cert.risk_used =
      options.padding ? std::min(1.0, cert.emp_risk_01 + cert.emp_risk_error) : cert.emp_risk_01;
  cert.lambda_star = lambda_opt(cert.risk_used, cert.kl, cert.m, epsilon);
  cert.bound = bound_eval({cert.risk_used, cert.kl, cert.m, epsilon, cert.lambda_star});
  return cert;
}

}  // namespace ldaf::pacbayes
