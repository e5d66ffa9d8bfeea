#pragma once

// Fisher LDA, the label-free MILDA projection, sigmoid soft labels and
// two-component 1-D Gaussian mixture thresholding.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aad/core_io.hpp"
#include "aad/error.hpp"

namespace aad::classify {

namespace detail {

inline Eigen::MatrixXd population_covariance(const Eigen::MatrixXd& rows, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd centered = rows.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(rows.rows());
}

inline double ridge_for(const Eigen::MatrixXd& m) { return 1e-8 * m.trace() / static_cast<double>(m.rows()); }

}  // namespace detail

// --------------------------------------------------------------------------
// Supervised Fisher LDA

struct LdaState {
  Eigen::VectorXd mu_pos, mu_neg;
  Eigen::MatrixXd cov_pos, cov_neg;
  Eigen::VectorXd w;
  double threshold = 0.0;

  Eigen::VectorXd scores(const Eigen::MatrixXd& features) const { return features * w; }

  std::vector<bool> predict(const Eigen::MatrixXd& features) const {
    const Eigen::VectorXd y = scores(features);
    std::vector<bool> out(static_cast<std::size_t>(y.size()));
    for (Eigen::Index n = 0; n < y.size(); ++n) out[static_cast<std::size_t>(n)] = y(n) > threshold;
    return out;
  }
};

/// w = (S+ + S- + ridge I)^-1 (mu+ - mu-), T = w'(mu+ + mu-)/2.
inline LdaState fit_lda(const Eigen::MatrixXd& features, const std::vector<bool>& labels) {
  require(labels.size() == static_cast<std::size_t>(features.rows()), ErrorCode::ShapeMismatch,
          "one label per feature vector required");
  std::vector<Eigen::Index> pos, neg;
  for (std::size_t n = 0; n < labels.size(); ++n) (labels[n] ? pos : neg).push_back(static_cast<Eigen::Index>(n));
  require(!pos.empty() && !neg.empty(), ErrorCode::SingleClass, "LDA needs both classes");
  const Eigen::MatrixXd fp = features(pos, Eigen::all);
  const Eigen::MatrixXd fn = features(neg, Eigen::all);
  LdaState s;
  s.mu_pos = fp.colwise().mean().transpose();
  s.mu_neg = fn.colwise().mean().transpose();
  s.cov_pos = detail::population_covariance(fp, s.mu_pos);
  s.cov_neg = detail::population_covariance(fn, s.mu_neg);
  Eigen::MatrixXd within = s.cov_pos + s.cov_neg;
  const double ridge = std::max(detail::ridge_for(within), 1e-300);
  within.diagonal().array() += ridge;
  s.w = within.ldlt().solve(s.mu_pos - s.mu_neg);
  require(s.w.allFinite(), ErrorCode::DegenerateCovariance, "within-class scatter is singular");
  s.threshold = s.w.dot(s.mu_pos + s.mu_neg) / 2.0;
  return s;
}

/// Between-over-within ratio (w'(mu+ - mu-))^2 / w'(S+ + S-)w on labelled data.
inline double fisher_ratio(const Eigen::MatrixXd& features, const std::vector<bool>& labels, const Eigen::VectorXd& w) {
  std::vector<Eigen::Index> pos, neg;
  for (std::size_t n = 0; n < labels.size(); ++n) (labels[n] ? pos : neg).push_back(static_cast<Eigen::Index>(n));
  const Eigen::MatrixXd fp = features(pos, Eigen::all);
  const Eigen::MatrixXd fn = features(neg, Eigen::all);
  const Eigen::VectorXd mp = fp.colwise().mean().transpose(), mn = fn.colwise().mean().transpose();
  const Eigen::MatrixXd within = detail::population_covariance(fp, mp) + detail::population_covariance(fn, mn);
  const double between = w.dot(mp - mn);
  return between * between / w.dot(within * w);
}

// --------------------------------------------------------------------------
// MILDA

/// Label-free projection. delta is the unit leading eigenvector of the global
/// feature covariance; shifting features to rho - mean + delta makes the class
/// means proportional, after which w = cov^-1 delta matches Fisher LDA.
struct MildaState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::VectorXd delta;
  Eigen::VectorXd w;

  Eigen::VectorXd scores(const Eigen::MatrixXd& features) const { return features * w; }
  double score(const Eigen::VectorXd& rho) const { return w.dot(rho); }
};

namespace detail {

inline Eigen::VectorXd milda_weights(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::MatrixXd reg = cov;
  reg.diagonal().array() += std::max(ridge_for(cov), 1e-300);
  return reg.ldlt().solve(mean);
}

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> leading_direction(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, ErrorCode::ConvergenceFailure, "eigensolver failed on feature covariance");
  const Eigen::Index top = cov.rows() - 1;
  Eigen::VectorXd delta = eig.eigenvectors().col(top);
  delta.normalize();
  return {delta, milda_weights(delta, cov)};
}

}  // namespace detail

/// Plain MILDA rule on features taken as given: w = cov^-1 mean.
inline Eigen::VectorXd milda_projection(const Eigen::MatrixXd& features) {
  require(features.rows() >= features.cols() + 1, ErrorCode::DegenerateCovariance,
          "MILDA needs at least K+1 feature vectors");
  const Eigen::VectorXd mean = features.colwise().mean().transpose();
  return detail::milda_weights(mean, detail::population_covariance(features, mean));
}

/// Builds the state from first and second moments. The sign of delta is
/// chosen so that the projection correlates positively with rho_1.
inline MildaState milda_from_moments(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::Index K = cov.rows();
  require(K >= 1 && cov.cols() == K && mean.size() == K, ErrorCode::ShapeMismatch, "moment shapes disagree");
  require(cov.allFinite() && cov.trace() > 1e-300, ErrorCode::DegenerateCovariance,
          "feature covariance is degenerate");
  MildaState s;
  s.mean = mean;
  s.cov = cov;
  auto [delta, w] = detail::leading_direction(cov);
  s.delta = delta;
  s.w = w;
  // cov(y, rho_1) = w' cov e_1 must be positive.
  if ((cov * s.w)(0) < 0) {
    s.delta = -s.delta;
    s.w = -s.w;
  }
  return s;
}

/// Sign rule for batch fits: windows in the top decile by rho_1 must score
/// above the mean score.
inline MildaState fit_milda(const Eigen::MatrixXd& features) {
  const Eigen::Index N = features.rows(), K = features.cols();
  require(N >= K + 1, ErrorCode::DegenerateCovariance, "MILDA needs at least K+1 feature vectors");
  const Eigen::VectorXd mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd cov = detail::population_covariance(features, mean);
  require(cov.trace() > 1e-24 * std::max(1.0, mean.squaredNorm()), ErrorCode::DegenerateCovariance,
          "all feature vectors are identical");
  MildaState s = milda_from_moments(mean, cov);

  const Eigen::VectorXd y = features * s.w;
  const double ybar = y.mean();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  for (Eigen::Index n = 0; n < N; ++n) order[static_cast<std::size_t>(n)] = n;
  const auto top = static_cast<std::size_t>(std::max<Eigen::Index>(1, (N + 9) / 10));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](Eigen::Index a, Eigen::Index b) { return features(a, 0) > features(b, 0); });
  double lift = 0.0;
  for (std::size_t i = 0; i < top; ++i) lift += y(order[i]) - ybar;
  if (lift < 0) {
    s.delta = -s.delta;
    s.w = -s.w;
  }
  return s;
}

// --------------------------------------------------------------------------
// Scores and soft labels

struct ScoreVector {
  Eigen::VectorXd y;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation

  static ScoreVector from(Eigen::VectorXd values) {
    ScoreVector s;
    s.y = std::move(values);
    if (s.y.size() > 0) {
      s.mean = s.y.mean();
      s.stddev = std::sqrt((s.y.array() - s.mean).square().mean());
    }
    return s;
  }
};

/// p(n) = 1 / (1 + exp(-(y(n) - mean) / std)).
inline LabelVector soft_labels(const ScoreVector& scores) {
  const double scale = std::max(1.0, scores.y.cwiseAbs().maxCoeff());
  require(scores.stddev > 1e-14 * scale, ErrorCode::ZeroSpread, "all scores are equal");
  LabelVector out;
  out.p.resize(static_cast<std::size_t>(scores.y.size()));
  for (Eigen::Index n = 0; n < scores.y.size(); ++n)
    out.p[static_cast<std::size_t>(n)] = 1.0 / (1.0 + std::exp(-(scores.y(n) - scores.mean) / scores.stddev));
  return out;
}

// --------------------------------------------------------------------------
// Two-component Gaussian mixture on 1-D scores

struct GmmOptions {
  bool shared_variance = true;
  double tolerance = 1e-8;  // stop once the log-likelihood gain drops below this
  int max_iterations = 500;
  int max_restarts = 5;
  // Separate variances only: lower bound on each sigma as a fraction of the
  // total score spread, so one component cannot shrink onto a single point.
  double min_sigma_fraction = 1e-3;
  std::uint64_t seed = 0;
};

/// Components are ordered so that mu_pos >= mu_neg; q is the weight of the
/// upper (attended) component.
struct GmmState {
  double mu_pos = 0.0, mu_neg = 0.0;
  double sigma_pos = 1.0, sigma_neg = 1.0;
  double q = 0.5;
  bool shared_variance = true;
  double log_likelihood = 0.0;
  int iterations = 0;
  int restarts = 0;
  std::vector<double> log_likelihood_trace;

  double sigma() const { return shared_variance ? sigma_pos : std::sqrt(0.5 * (sigma_pos * sigma_pos + sigma_neg * sigma_neg)); }
  double threshold() const { return 0.5 * (mu_pos + mu_neg); }
};

inline double log_normal(double y, double mu, double sigma) {
  const double z = (y - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

namespace detail {

inline double log_add(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Posterior probability that y belongs to the upper component.
inline double responsibility(const GmmState& s, double y) {
  const double lp = std::log(s.q) + log_normal(y, s.mu_pos, s.sigma_pos);
  const double ln = std::log1p(-s.q) + log_normal(y, s.mu_neg, s.sigma_neg);
  return 1.0 / (1.0 + std::exp(ln - lp));
}

inline double mixture_log_likelihood(const GmmState& s, std::span<const double> y) {
  double ll = 0.0;
  for (double v : y)
    ll += detail::log_add(std::log(s.q) + log_normal(v, s.mu_pos, s.sigma_pos),
                          std::log1p(-s.q) + log_normal(v, s.mu_neg, s.sigma_neg));
  return ll;
}

/// EM for a two-component 1-D mixture. Initialization: means at the 25th and
/// 75th percentiles, sigma at half the interquartile range, q = 0.5. A
/// collapsing sigma triggers a jittered restart.
inline GmmState fit_gmm(std::span<const double> y, const GmmOptions& opts = {}) {
  const std::size_t N = y.size();
  require(N >= 4, ErrorCode::InvalidArgument, "GMM needs at least 4 scores");
  for (double v : y) require(std::isfinite(v), ErrorCode::NonFiniteData, "non-finite score");
  std::vector<double> sorted(y.begin(), y.end());
  const double q25 = detail::quantile(sorted, 0.25), q75 = detail::quantile(sorted, 0.75);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(N);
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(N);
  const double total_sd = std::sqrt(var);
  require(total_sd > 1e-12 * std::max(1.0, std::abs(mean)), ErrorCode::Collapse, "all scores are identical");
  const double floor = 1e-6 * total_sd;
  const double min_sigma = opts.min_sigma_fraction * total_sd;

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> jitter(0.0, 1.0);

  for (int restart = 0; restart <= opts.max_restarts; ++restart) {
    GmmState s;
    s.shared_variance = opts.shared_variance;
    s.restarts = restart;
    s.mu_neg = q25;
    s.mu_pos = q75;
    s.sigma_pos = s.sigma_neg = 0.5 * (q75 - q25);
    s.q = 0.5;
    if (restart > 0) {
      s.mu_neg = mean - total_sd * std::abs(jitter(rng));
      s.mu_pos = mean + total_sd * std::abs(jitter(rng));
      s.sigma_pos = s.sigma_neg = total_sd * (0.5 + std::abs(jitter(rng)));
    }
    bool collapsed = !(s.sigma_pos > floor);
    double prev = -std::numeric_limits<double>::infinity();
    std::vector<double> r(N);
    for (int it = 0; !collapsed && it < opts.max_iterations; ++it) {
      // E step (also yields the log-likelihood of the current parameters)
      double ll = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double lp = std::log(s.q) + log_normal(y[n], s.mu_pos, s.sigma_pos);
        const double ln = std::log1p(-s.q) + log_normal(y[n], s.mu_neg, s.sigma_neg);
        const double lt = detail::log_add(lp, ln);
        ll += lt;
        r[n] = std::exp(lp - lt);
      }
      s.log_likelihood_trace.push_back(ll);
      s.log_likelihood = ll;
      s.iterations = it;
      if (it > 0 && ll - prev < opts.tolerance) break;
      prev = ll;

      // M step
      double w_pos = 0.0, s_pos = 0.0, s_neg = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        w_pos += r[n];
        s_pos += r[n] * y[n];
        s_neg += (1.0 - r[n]) * y[n];
      }
      const double w_neg = static_cast<double>(N) - w_pos;
      if (w_pos > 1e-300) s.mu_pos = s_pos / w_pos;
      if (w_neg > 1e-300) s.mu_neg = s_neg / w_neg;
      double v_pos = 0.0, v_neg = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        v_pos += r[n] * (y[n] - s.mu_pos) * (y[n] - s.mu_pos);
        v_neg += (1.0 - r[n]) * (y[n] - s.mu_neg) * (y[n] - s.mu_neg);
      }
      if (opts.shared_variance) {
        s.sigma_pos = s.sigma_neg = std::sqrt((v_pos + v_neg) / static_cast<double>(N));
      } else {
        // clamping is the constrained maximizer, so EM stays monotone
        s.sigma_pos = std::max(min_sigma, w_pos > 1e-300 ? std::sqrt(v_pos / w_pos) : 0.0);
        s.sigma_neg = std::max(min_sigma, w_neg > 1e-300 ? std::sqrt(v_neg / w_neg) : 0.0);
      }
      s.q = std::clamp(w_pos / static_cast<double>(N), 1e-12, 1.0 - 1e-12);
      collapsed = !(s.sigma_pos > floor) || !(s.sigma_neg > floor);
    }
    if (collapsed) continue;
    if (s.mu_pos < s.mu_neg) {
      std::swap(s.mu_pos, s.mu_neg);
      std::swap(s.sigma_pos, s.sigma_neg);
      s.q = 1.0 - s.q;
    }
    return s;
  }
  fail(ErrorCode::Collapse, "mixture variance collapsed after " + std::to_string(opts.max_restarts) + " restarts");
}

/// Attended iff the upper component's density exceeds the lower one's
/// (equal priors). With a shared sigma this is y > (mu+ + mu-)/2; the
/// midpoint itself is labelled unattended.
inline std::vector<bool> gmm_label(const GmmState& s, std::span<const double> y) {
  std::vector<bool> out(y.size());
  for (std::size_t n = 0; n < y.size(); ++n) {
    if (s.shared_variance)
      out[n] = y[n] > s.threshold();
    else
      out[n] = log_normal(y[n], s.mu_pos, s.sigma_pos) > log_normal(y[n], s.mu_neg, s.sigma_neg);
  }
  return out;
}

}  // namespace aad::classify
