#pragma once

// Batch unsupervised decoding (iterated soft-label CCA + MILDA, GMM at the
// end), its online recursive counterpart, and supervised cross-validated
// baselines.

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aad/cca.hpp"
#include "aad/classify.hpp"
#include "aad/core_io.hpp"
#include "aad/linalg.hpp"

namespace aad::pipeline {

using cca::CcaModel;
using classify::GmmState;
using classify::MildaState;
using linalg::CcaMode;

// ---------------------------------------------------------------------------
// Per-window statistics shared by every refit on the same windows

/// Gram sums over all windows (optionally split by group) and each window's
/// cross-product X_n S_n'. Label weights only ever touch the cross terms, so
/// these are computed once per window set.
struct WindowStats {
  Eigen::MatrixXd sum_xx, sum_ss;
  std::vector<Eigen::MatrixXd> xs;
  std::vector<Eigen::MatrixXd> group_xx, group_ss;  // filled when groups are given
  LagConfig lags;

  std::size_t size() const { return xs.size(); }
};

inline WindowStats window_stats(const SegmentSet& segments, const std::vector<int>* groups = nullptr,
                                int n_groups = 0) {
  require(!segments.empty(), ErrorCode::InvalidArgument, "no windows");
  const Eigen::Index P = segments.eeg_rows(), Q = segments.envelope_rows();
  WindowStats st;
  st.lags = segments.lags();
  st.sum_xx.setZero(P, P);
  st.sum_ss.setZero(Q, Q);
  if (groups) {
    require(groups->size() == segments.size(), ErrorCode::ShapeMismatch, "one group per window required");
    st.group_xx.assign(static_cast<std::size_t>(n_groups), Eigen::MatrixXd::Zero(P, P));
    st.group_ss.assign(static_cast<std::size_t>(n_groups), Eigen::MatrixXd::Zero(Q, Q));
  }
  st.xs.resize(segments.size());
  Eigen::MatrixXd X, S;
  for (std::size_t n = 0; n < segments.size(); ++n) {
    segments.eeg_window(n, X);
    segments.envelope_window(n, S);
    st.xs[n].noalias() = X * S.transpose();
    if (groups) {
      const auto g = static_cast<std::size_t>((*groups)[n]);
      st.group_xx[g].selfadjointView<Eigen::Lower>().rankUpdate(X);
      st.group_ss[g].selfadjointView<Eigen::Lower>().rankUpdate(S);
    } else {
      st.sum_xx.selfadjointView<Eigen::Lower>().rankUpdate(X);
      st.sum_ss.selfadjointView<Eigen::Lower>().rankUpdate(S);
    }
  }
  if (groups)
    for (std::size_t g = 0; g < st.group_xx.size(); ++g) {
      st.group_xx[g].triangularView<Eigen::StrictlyUpper>() = st.group_xx[g].transpose();
      st.group_ss[g].triangularView<Eigen::StrictlyUpper>() = st.group_ss[g].transpose();
      st.sum_xx += st.group_xx[g];
      st.sum_ss += st.group_ss[g];
    }
  else {
    st.sum_xx.triangularView<Eigen::StrictlyUpper>() = st.sum_xx.transpose();
    st.sum_ss.triangularView<Eigen::StrictlyUpper>() = st.sum_ss.transpose();
  }
  return st;
}

/// Accumulator over all windows with the given soft labels.
inline linalg::CovarianceAccumulator weighted(const WindowStats& st, std::span<const double> p) {
  require(p.size() == st.size(), ErrorCode::ShapeMismatch, "one label per window required");
  auto acc = linalg::CovarianceAccumulator::zeros(st.sum_xx.rows(), st.sum_ss.rows());
  acc.sum_xx = st.sum_xx;
  acc.sum_ss = st.sum_ss;
  for (std::size_t n = 0; n < st.size(); ++n) {
    require(p[n] >= 0.0 && p[n] <= 1.0, ErrorCode::InvalidArgument, "soft labels must lie in [0,1]");
    linalg::add_cross(acc, st.xs[n], p[n]);
  }
  acc.n_segments = static_cast<double>(st.size());
  return acc;
}

// ---------------------------------------------------------------------------
// Batch unsupervised loop

enum class InitLabels { uniform_half, random, provided };

struct UnsupervisedConfig {
  int i_max = 10;
  int components = 2;  // K
  double ridge = 1e-6;
  InitLabels init_labels = InitLabels::uniform_half;
  std::vector<double> provided;  // used with InitLabels::provided
  bool final_discriminative = true;
  bool soft_labels = true;   // false: retrain on GMM hard labels instead of sigmoid labels
  double convergence_tol = 0.01;  // mean |p_new - p_old| that counts as converged
  std::uint64_t seed = 0;
  classify::GmmOptions gmm;

  void validate() const {
    require(i_max >= 1, ErrorCode::InvalidArgument, "i_max must be >= 1");
    require(components >= 1, ErrorCode::InvalidArgument, "K must be >= 1");
    require(ridge >= 0, ErrorCode::InvalidArgument, "ridge must be non-negative");
    require(convergence_tol >= 0, ErrorCode::InvalidArgument, "convergence tolerance must be non-negative");
  }
};

struct IterationSummary {
  int index = 0;  // 1-based
  CcaMode mode = CcaMode::normal;
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd scores;
  std::vector<double> p;        // labels produced by this iteration
  double mean_abs_change = 0.0;  // vs the labels it was trained on
};

struct DecodeResult {
  std::vector<double> scores;
  std::vector<double> p_soft;
  std::vector<bool> labels;
  std::vector<IterationSummary> iterations;
  GmmState gmm;
  CcaModel model;
  MildaState milda;
  cca::FeatureSet features;
  bool converged = false;
  int normal_iterations = 0;  // iterations run in normal mode
};

inline std::vector<double> initial_labels(const UnsupervisedConfig& cfg, std::size_t n) {
  switch (cfg.init_labels) {
    case InitLabels::uniform_half: return std::vector<double>(n, 0.5);
    case InitLabels::random: {
      std::mt19937_64 rng(cfg.seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> p(n);
      for (double& v : p) v = u(rng);
      return p;
    }
    case InitLabels::provided:
      require(cfg.provided.size() == n, ErrorCode::ShapeMismatch, "provided labels must cover every window");
      return LabelVector::from_soft(cfg.provided).p;
  }
  return std::vector<double>(n, 0.5);
}

inline std::vector<double> hard_gmm_labels(const Eigen::VectorXd& y, const classify::GmmOptions& opts) {
  std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
  const auto gmm = classify::fit_gmm(ys, opts);
  const auto hard = classify::gmm_label(gmm, ys);
  std::vector<double> p(hard.size());
  for (std::size_t n = 0; n < hard.size(); ++n) p[n] = hard[n] ? 1.0 : 0.0;
  return p;
}

inline DecodeResult run_batch(const SegmentSet& segments, const WindowStats& stats, const UnsupervisedConfig& cfg) {
  cfg.validate();
  const std::size_t N = segments.size();
  require(N >= static_cast<std::size_t>(2 * cfg.components), ErrorCode::InvalidArgument,
          "need at least 2K windows, got " + std::to_string(N));
  require(stats.size() == N, ErrorCode::ShapeMismatch, "window statistics do not match the segments");
  LagConfig lags = segments.lags();
  lags.components = cfg.components;
  cca::FitOptions fit_opts;
  fit_opts.ridge = cfg.ridge;

  DecodeResult out;
  std::vector<double> p = initial_labels(cfg, N);
  bool converged = false;
  for (int i = 1; i <= cfg.i_max; ++i) {
    const CcaMode mode =
        cfg.final_discriminative && (i == cfg.i_max || converged) ? CcaMode::discriminative : CcaMode::normal;
    out.model = cca::fit_from_accumulator(weighted(stats, p), lags, mode, fit_opts);
    out.features = cca::features(out.model, segments);
    out.milda = classify::fit_milda(out.features.rho);
    const auto scores = classify::ScoreVector::from(out.milda.scores(out.features.rho));
    std::vector<double> next =
        cfg.soft_labels ? classify::soft_labels(scores).p : hard_gmm_labels(scores.y, cfg.gmm);

    IterationSummary it;
    it.index = i;
    it.mode = mode;
    it.eigenvalues = out.model.eigenvalues;
    it.scores = scores.y;
    for (std::size_t n = 0; n < N; ++n) it.mean_abs_change += std::abs(next[n] - p[n]);
    it.mean_abs_change /= static_cast<double>(N);
    it.p = next;
    out.iterations.push_back(it);
    if (mode == CcaMode::normal) ++out.normal_iterations;

    p = std::move(next);
    if (mode == CcaMode::discriminative) break;
    if (it.mean_abs_change < cfg.convergence_tol) {
      converged = true;
      if (!cfg.final_discriminative) break;
    }
  }
  out.converged = converged;

  const Eigen::VectorXd& y = out.iterations.back().scores;
  out.scores.assign(y.data(), y.data() + y.size());
  out.p_soft = classify::soft_labels(classify::ScoreVector::from(y)).p;
  out.gmm = classify::fit_gmm(out.scores, cfg.gmm);
  out.labels = classify::gmm_label(out.gmm, out.scores);
  return out;
}

inline DecodeResult run_batch(const SegmentSet& segments, const UnsupervisedConfig& cfg) {
  return run_batch(segments, window_stats(segments), cfg);
}

// ---------------------------------------------------------------------------
// Supervised baselines

enum class Classifier { lda, milda };

/// Contiguous fold assignment of N windows into `folds` folds.
inline std::vector<int> contiguous_folds(std::size_t n, int folds) {
  require(folds >= 2 && static_cast<std::size_t>(folds) <= n, ErrorCode::InvalidArgument,
          "fold count must lie in [2, N]");
  std::vector<int> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<int>(i * static_cast<std::size_t>(folds) / n);
  return g;
}

/// Score of one window under a trained classifier, standardized so that
/// scores from different folds are comparable.
struct TrainedClassifier {
  Eigen::VectorXd w;
  double offset = 0.0;
  double scale = 1.0;

  double operator()(const Eigen::VectorXd& rho) const { return (w.dot(rho) - offset) / scale; }
};

inline TrainedClassifier train_classifier(Classifier kind, const Eigen::MatrixXd& rho, const std::vector<bool>& truth) {
  TrainedClassifier c;
  if (kind == Classifier::lda) {
    const auto lda = classify::fit_lda(rho, truth);
    c.w = lda.w;
    c.offset = lda.threshold;
    c.scale = std::sqrt(std::max(1e-300, lda.w.dot((lda.cov_pos + lda.cov_neg) * lda.w) / 2.0));
  } else {
    const auto m = classify::fit_milda(rho);
    c.w = m.w;
    c.offset = m.w.dot(m.mean);
    c.scale = std::sqrt(std::max(1e-300, m.w.dot(m.cov * m.w)));
  }
  return c;
}

struct CvResult {
  std::vector<double> scores;  // out-of-fold, pooled
  std::vector<int> fold;
};

/// K-fold supervised CCA (trained with the true hard labels) followed by LDA
/// or MILDA, both fitted on the training folds only.
inline CvResult supervised_cv(const SegmentSet& segments, const std::vector<bool>& truth, int folds,
                              Classifier classifier, CcaMode mode = CcaMode::normal, const cca::FitOptions& opts = {},
                              int components = 2) {
  const std::size_t N = segments.size();
  require(truth.size() == N, ErrorCode::ShapeMismatch, "one label per window required");
  CvResult out;
  out.fold = contiguous_folds(N, folds);
  out.scores.assign(N, 0.0);
  const WindowStats st = window_stats(segments, &out.fold, folds);
  LagConfig lags = segments.lags();
  lags.components = components;

  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t n = 0; n < N; ++n) (out.fold[n] == f ? test : train).push_back(n);
    if (test.empty()) continue;
    auto acc = linalg::CovarianceAccumulator::zeros(st.sum_xx.rows(), st.sum_ss.rows());
    acc.sum_xx = st.sum_xx - st.group_xx[static_cast<std::size_t>(f)];
    acc.sum_ss = st.sum_ss - st.group_ss[static_cast<std::size_t>(f)];
    std::vector<bool> train_truth;
    for (std::size_t n : train) {
      linalg::add_cross(acc, st.xs[n], truth[n] ? 1.0 : 0.0);
      train_truth.push_back(truth[n]);
    }
    acc.n_segments = static_cast<double>(train.size());
    const CcaModel model = cca::fit_from_accumulator(acc, lags, mode, opts);
    const auto feats = cca::features(model, segments);
    Eigen::MatrixXd train_rho(static_cast<Eigen::Index>(train.size()), feats.rho.cols());
    for (std::size_t i = 0; i < train.size(); ++i)
      train_rho.row(static_cast<Eigen::Index>(i)) = feats.rho.row(static_cast<Eigen::Index>(train[i]));
    const auto clf = train_classifier(classifier, train_rho, train_truth);
    for (std::size_t n : test) out.scores[n] = clf(feats.rho.row(static_cast<Eigen::Index>(n)).transpose());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Online recursive mode

struct OnlineConfig {
  double alpha = 0.95;          // forgetting factor
  std::size_t refit_period = 10;  // U
  int components = 2;
  double ridge = 1e-6;
  CcaMode mode = CcaMode::normal;
  classify::GmmOptions gmm;

  void validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::InvalidArgument, "alpha must lie in [0,1]");
    require(refit_period >= 1, ErrorCode::InvalidArgument, "refit period must be >= 1");
    require(components >= 1, ErrorCode::InvalidArgument, "K must be >= 1");
  }
};

struct OnlineOutput {
  bool label = false;
  double p = 0.5;
  double score = 0.0;
  bool provisional = false;  // emitted before the first filters existed
};

/// Decayed first and second moments of the feature vectors.
struct MomentStats {
  double weight = 0.0;
  Eigen::VectorXd sum;
  Eigen::MatrixXd sum_outer;

  void decay(double a) {
    weight *= a;
    sum *= a;
    sum_outer *= a;
  }
  void add(const Eigen::VectorXd& v) {
    if (sum.size() == 0) {
      sum = Eigen::VectorXd::Zero(v.size());
      sum_outer = Eigen::MatrixXd::Zero(v.size(), v.size());
    }
    weight += 1.0;
    sum += v;
    sum_outer.noalias() += v * v.transpose();
  }
  Eigen::VectorXd mean() const { return sum / weight; }
  Eigen::MatrixXd covariance() const {
    const Eigen::VectorXd m = mean();
    return sum_outer / weight - m * m.transpose();
  }
};

/// Decayed sufficient statistics of the two-component mixture.
struct GmmStats {
  double n = 0, r = 0, ry = 0, ry2 = 0, sy = 0, sy2 = 0;  // r: upper, s: lower component

  void decay(double a) {
    n *= a;
    r *= a;
    ry *= a;
    ry2 *= a;
    sy *= a;
    sy2 *= a;
  }
  void add(double y, double resp) {
    n += 1;
    r += resp;
    ry += resp * y;
    ry2 += resp * y * y;
    sy += (1 - resp) * y;
    sy2 += (1 - resp) * y * y;
  }
};

struct OnlineState {
  OnlineConfig cfg;
  linalg::CovarianceAccumulator acc;
  MomentStats milda_stats;
  GmmStats gmm_stats;
  std::optional<CcaModel> model;
  std::optional<MildaState> milda;
  std::optional<GmmState> gmm;
  std::size_t seen = 0;
  std::size_t since_refit = 0;
  std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> cold;  // buffered until the first fit
  LagConfig lags;

  static OnlineState create(const OnlineConfig& cfg, Eigen::Index eeg_rows, const LagConfig& lags) {
    cfg.validate();
    OnlineState s;
    s.cfg = cfg;
    s.lags = lags;
    s.lags.components = cfg.components;
    s.acc = linalg::CovarianceAccumulator::zeros(eeg_rows, lags.envelope_lags);
    return s;
  }
};

namespace detail {

inline GmmState gmm_from_stats(const GmmStats& st, const GmmState& prev) {
  GmmState g = prev;
  const double s = st.n - st.r;
  if (st.r > 1e-12) g.mu_pos = st.ry / st.r;
  if (s > 1e-12) g.mu_neg = st.sy / s;
  const double var = (st.ry2 - 2 * g.mu_pos * st.ry + g.mu_pos * g.mu_pos * st.r + st.sy2 - 2 * g.mu_neg * st.sy +
                      g.mu_neg * g.mu_neg * s) /
                     st.n;
  if (var > 0 && std::isfinite(var)) g.sigma_pos = g.sigma_neg = std::sqrt(var);
  g.q = std::clamp(st.r / st.n, 1e-6, 1 - 1e-6);
  if (g.mu_pos < g.mu_neg) {
    std::swap(g.mu_pos, g.mu_neg);
    g.q = 1 - g.q;
  }
  return g;
}

inline void refit_filters(OnlineState& st) {
  st.model = cca::fit_from_accumulator(st.acc, st.lags, st.cfg.mode, cca::FitOptions{st.cfg.ridge, 3});
}

}  // namespace detail

/// Soft label of a score under the decayed score distribution.
inline double online_soft_label(const OnlineState& st, double y) {
  const double mean = st.milda->w.dot(st.milda_stats.mean());
  const double sd = std::sqrt(std::max(1e-300, st.milda->w.dot(st.milda_stats.covariance() * st.milda->w)));
  return 1.0 / (1.0 + std::exp(-(y - mean) / sd));
}

/// Classify-then-update for one segment.
inline OnlineOutput online_step(OnlineState& st, const Eigen::MatrixXd& X, const Eigen::MatrixXd& S) {
  const double a = st.cfg.alpha;
  OnlineOutput out;
  ++st.seen;

  if (!st.model) {
    // Cold start: buffer with neutral labels until U segments are in.
    out.provisional = true;
    linalg::decay(st.acc, a);
    linalg::accumulate(st.acc, X, S, 0.5);
    st.cold.emplace_back(X, S);
    if (st.cold.size() < st.cfg.refit_period) return out;

    detail::refit_filters(st);
    Eigen::MatrixXd rho(static_cast<Eigen::Index>(st.cold.size()), st.cfg.components);
    for (std::size_t i = 0; i < st.cold.size(); ++i)
      rho.row(static_cast<Eigen::Index>(i)) = cca::window_features(*st.model, st.cold[i].first, st.cold[i].second).transpose();
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      st.milda_stats.decay(a);
      st.milda_stats.add(rho.row(i).transpose());
    }
    try {
      st.milda = classify::milda_from_moments(st.milda_stats.mean(), st.milda_stats.covariance());
    } catch (const Error&) {
      // heavy forgetting leaves too little mass; use the buffer unweighted
      const Eigen::VectorXd m = rho.colwise().mean().transpose();
      st.milda = classify::milda_from_moments(m, classify::detail::population_covariance(rho, m));
    }
    const Eigen::VectorXd y = st.milda->scores(rho);
    std::vector<double> ys(y.data(), y.data() + y.size());
    if (ys.size() >= 4) {
      try {
        st.gmm = classify::fit_gmm(ys, st.cfg.gmm);
      } catch (const Error&) {
      }
    }
    if (!st.gmm) {
      GmmState g;
      g.mu_pos = y.maxCoeff();
      g.mu_neg = y.minCoeff();
      g.sigma_pos = g.sigma_neg = std::max(1e-12, std::sqrt((y.array() - y.mean()).square().mean()));
      st.gmm = g;
    }
    for (double v : ys) {
      st.gmm_stats.decay(a);
      st.gmm_stats.add(v, classify::responsibility(*st.gmm, v));
    }
    st.cold.clear();
    st.since_refit = 0;
    out.score = ys.back();
    out.p = online_soft_label(st, out.score);
    out.label = classify::gmm_label(*st.gmm, std::span<const double>(&out.score, 1))[0];
    return out;
  }

  const Eigen::VectorXd rho = cca::window_features(*st.model, X, S);
  out.score = st.milda->score(rho);
  out.p = online_soft_label(st, out.score);
  out.label = classify::gmm_label(*st.gmm, std::span<const double>(&out.score, 1))[0];

  linalg::decay(st.acc, a);
  linalg::accumulate(st.acc, X, S, out.p);
  st.milda_stats.decay(a);
  st.milda_stats.add(rho);
  st.gmm_stats.decay(a);
  st.gmm_stats.add(out.score, classify::responsibility(*st.gmm, out.score));

  if (++st.since_refit >= st.cfg.refit_period) {
    st.since_refit = 0;
    try {
      detail::refit_filters(st);
    } catch (const Error& e) {
      // the decayed window can lose all mass in one class; keep the filters
      if (e.code() != ErrorCode::NoPositiveMass && e.code() != ErrorCode::DegenerateLabels &&
          e.code() != ErrorCode::NotPositiveDefinite)
        throw;
    }
    try {
      const Eigen::MatrixXd cov = st.milda_stats.covariance();
      MildaState next = classify::milda_from_moments(st.milda_stats.mean(), cov);
      // keep the orientation of the running decoder rather than re-deriving it
      if (next.w.dot(cov * st.milda->w) < 0) {
        next.w = -next.w;
        next.delta = -next.delta;
      }
      st.milda = std::move(next);
    } catch (const Error&) {
      // keep the previous projection when the moments are degenerate (e.g. alpha = 0)
    }
    st.gmm = detail::gmm_from_stats(st.gmm_stats, *st.gmm);
  }
  return out;
}

/// Runs a whole segment set through the online decoder in order.
inline std::vector<OnlineOutput> run_online(const SegmentSet& segments, OnlineState& st) {
  std::vector<OnlineOutput> out;
  out.reserve(segments.size());
  Eigen::MatrixXd X, S;
  for (std::size_t n = 0; n < segments.size(); ++n) {
    segments.eeg_window(n, X);
    segments.envelope_window(n, S);
    out.push_back(online_step(st, X, S));
  }
  return out;
}

}  // namespace aad::pipeline
