#pragma once

// Synthetic EEG following x(t) = alpha(t) (A*s)(t) + (B*s)(t) + n(t), with a
// known attention profile, plus noise calibration against a target
// supervised AUC.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "aad/core_io.hpp"
#include "aad/dsp.hpp"
#include "aad/metrics.hpp"
#include "aad/pipeline.hpp"

namespace aad::synth {

struct AttentionSpan {
  double start = 0.0;  // seconds
  double end = 0.0;
  double alpha = 1.0;
};

struct SynthConfig {
  int channels = 24;
  double fs = 64.0;
  double duration = 3600.0;  // seconds
  // Forward-model kernels (C x taps). Drawn from the seed when left empty.
  Eigen::MatrixXd A, B;
  int kernel_taps = 16;
  int response_delay = 2;     // samples between stimulus and the first kernel tap
  double b_ratio = 3.0;       // ||B*s|| / ||A*s||, B decorrelated from A
  double noise_power = 900.0; // per-channel noise power relative to the mean power of A*s
  double noise_spatial = 0.3; // strength of the random spatial mixing of the noise
  double noise_corner = 5.0;  // Hz, one-pole colouring of the noise
  double envelope_corner = 8.0;  // Hz, low-pass applied before rectification
  std::vector<AttentionSpan> attention_profile;  // generated when empty
  double block_seconds = 60.0;
  double attended_fraction = 0.75;
  double alpha_attended = 1.0;
  double alpha_unattended = 0.0;
  double drift = 0.0;  // std of a slow within-span modulation of alpha
  double tau = 10.0;   // window length used for labels_true
  std::uint64_t seed = 0;
};

struct SynthDataset {
  SignalBuffer eeg;
  SignalBuffer envelope;              // band-limited, zero-mean
  Eigen::RowVectorXd envelope_positive;  // the positive envelope before high-passing
  Eigen::RowVectorXd alpha_trace;
  std::vector<AttentionSpan> profile;
  Eigen::MatrixXd A, B;
  Eigen::MatrixXd noise_mixing;
  double alpha_threshold = 0.5;  // samples with alpha above this count as attended
  std::vector<bool> labels_true;  // on the tau grid of the config

  std::vector<bool> window_labels(double tau) const {
    const auto width = static_cast<Eigen::Index>(std::llround(tau * eeg.fs));
    std::vector<bool> out;
    for (Eigen::Index t0 = 0; t0 + width <= alpha_trace.size(); t0 += width) {
      Eigen::Index att = 0;
      for (Eigen::Index t = t0; t < t0 + width; ++t) att += alpha_trace(t) > alpha_threshold;
      out.push_back(2 * att > width);
    }
    return out;
  }

  SegmentSet segments(const LagConfig& lags, double tau) const {
    return segment(eeg, envelope, lags, tau).with_labels(window_labels(tau));
  }
};

namespace detail {

// Independent streams per purpose so that e.g. the noise level never shifts
// the envelope draw.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

// Random smooth FIR kernels: white taps smoothed twice with [1 2 1]/4 and
// tapered by a Hann window.
inline Eigen::MatrixXd smooth_kernels(std::mt19937_64& rng, int C, int taps) {
  Eigen::MatrixXd k = gaussian(rng, C, taps);
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::MatrixXd s = k;
    for (int j = 0; j < taps; ++j) {
      s.col(j) = 0.5 * k.col(j);
      if (j > 0) s.col(j) += 0.25 * k.col(j - 1);
      if (j + 1 < taps) s.col(j) += 0.25 * k.col(j + 1);
    }
    k = s;
  }
  for (int j = 0; j < taps; ++j) k.col(j) *= std::sin(std::numbers::pi * (j + 1) / (taps + 1));
  return k;
}

// y_c(t) = sum_j K(c, j) s(t - delay - j)
inline Eigen::MatrixXd convolve(const Eigen::MatrixXd& K, const Eigen::RowVectorXd& s, int delay) {
  const Eigen::Index T = s.size();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(K.rows(), T);
  for (Eigen::Index j = 0; j < K.cols(); ++j) {
    const Eigen::Index lag = delay + j;
    if (lag >= T) break;
    y.rightCols(T - lag).noalias() += K.col(j) * s.head(T - lag);
  }
  return y;
}

}  // namespace detail

/// Default profile: blocks of block_seconds, a rounded attended_fraction of
/// them attended, order shuffled by the seed. Both classes are kept when
/// there are at least two blocks.
inline std::vector<AttentionSpan> default_profile(const SynthConfig& cfg) {
  const auto blocks = static_cast<int>(std::ceil(cfg.duration / cfg.block_seconds - 1e-9));
  int attended = static_cast<int>(std::lround(cfg.attended_fraction * blocks));
  if (blocks >= 2) attended = std::clamp(attended, 1, blocks - 1);
  std::vector<bool> flags(static_cast<std::size_t>(blocks), false);
  for (int i = 0; i < attended; ++i) flags[static_cast<std::size_t>(i)] = true;
  auto rng = detail::stream(cfg.seed, 1);
  std::shuffle(flags.begin(), flags.end(), rng);
  std::vector<AttentionSpan> spans;
  for (int i = 0; i < blocks; ++i)
    spans.push_back({i * cfg.block_seconds, std::min(cfg.duration, (i + 1) * cfg.block_seconds),
                     flags[static_cast<std::size_t>(i)] ? cfg.alpha_attended : cfg.alpha_unattended});
  return spans;
}

inline void validate_profile(const std::vector<AttentionSpan>& spans, double duration) {
  require(!spans.empty(), ErrorCode::InvalidProfile, "attention profile is empty");
  double cursor = 0.0;
  for (const auto& s : spans) {
    require(s.alpha >= 0.0 && s.alpha <= 1.0, ErrorCode::InvalidProfile, "span alpha must lie in [0,1]");
    require(s.end > s.start, ErrorCode::InvalidProfile, "span end must follow its start");
    require(std::abs(s.start - cursor) < 1e-9, ErrorCode::InvalidProfile,
            s.start < cursor ? "spans overlap" : "spans leave a gap");
    cursor = s.end;
  }
  require(std::abs(cursor - duration) < 1e-9, ErrorCode::InvalidProfile, "spans do not cover the duration");
}

/// Positive envelope: rectified band-limited noise, smoothed. Unit mean.
inline Eigen::RowVectorXd positive_envelope(std::mt19937_64& rng, Eigen::Index T, double fs, double corner) {
  Eigen::RowVectorXd w = detail::gaussian(rng, 1, T);
  const auto lp = dsp::butterworth(2, std::min(corner, 0.4 * fs), fs, false);
  Eigen::RowVectorXd g = dsp::filtfilt(lp, w);
  Eigen::RowVectorXd env = dsp::smooth_positive(g.cwiseAbs(), std::min(10.0, 0.4 * fs), fs);
  const double m = env.mean();
  return m > 0 ? (env / m).eval() : env;
}

inline SynthDataset generate(const SynthConfig& cfg) {
  require(cfg.channels >= 1 && cfg.fs > 0 && cfg.duration > 0, ErrorCode::InvalidArgument,
          "channels, fs and duration must be positive");
  require(cfg.noise_power >= 0 && std::isfinite(cfg.noise_power), ErrorCode::InvalidArgument,
          "noise_power must be non-negative");
  require(cfg.kernel_taps >= 1 && cfg.response_delay >= 0, ErrorCode::InvalidArgument, "invalid kernel shape");
  const auto T = static_cast<Eigen::Index>(std::llround(cfg.duration * cfg.fs));
  require(T >= 8, ErrorCode::InvalidArgument, "duration too short");
  const int C = cfg.channels;

  SynthDataset ds;
  ds.profile = cfg.attention_profile.empty() ? default_profile(cfg) : cfg.attention_profile;
  validate_profile(ds.profile, cfg.duration);
  ds.alpha_threshold = 0.5 * (cfg.alpha_attended + cfg.alpha_unattended);

  ds.alpha_trace.resize(T);
  for (const auto& s : ds.profile) {
    const auto a = static_cast<Eigen::Index>(std::llround(s.start * cfg.fs));
    const auto b = std::min(T, static_cast<Eigen::Index>(std::llround(s.end * cfg.fs)));
    if (b > a) ds.alpha_trace.segment(a, b - a).setConstant(s.alpha);
  }
  if (cfg.drift > 0) {
    auto rng = detail::stream(cfg.seed, 5);
    const auto slow = dsp::butterworth(2, std::min(0.05, 0.4 * cfg.fs), cfg.fs, false);
    Eigen::RowVectorXd d = dsp::filtfilt(slow, detail::gaussian(rng, 1, T));
    const double sd = std::sqrt(d.squaredNorm() / static_cast<double>(T));
    if (sd > 0) d /= sd;
    ds.alpha_trace = (ds.alpha_trace + cfg.drift * d).cwiseMax(0.0).cwiseMin(1.0);
  }

  auto env_rng = detail::stream(cfg.seed, 2);
  ds.envelope_positive = positive_envelope(env_rng, T, cfg.fs, cfg.envelope_corner);
  const double hp_corner = std::min(0.5, 0.2 * cfg.fs);
  Eigen::RowVectorXd s = dsp::filtfilt(dsp::butterworth(2, hp_corner, cfg.fs, true), ds.envelope_positive,
                                       std::min<Eigen::Index>(T - 1, static_cast<Eigen::Index>(3 * cfg.fs / hp_corner)));
  const double s_rms = std::sqrt(s.squaredNorm() / static_cast<double>(T));
  if (s_rms > 0) s /= s_rms;

  auto ker_rng = detail::stream(cfg.seed, 3);
  ds.A = cfg.A.size() ? cfg.A : detail::smooth_kernels(ker_rng, C, cfg.kernel_taps);
  Eigen::MatrixXd B = cfg.B.size() ? cfg.B : detail::smooth_kernels(ker_rng, C, cfg.kernel_taps);
  require(ds.A.rows() == C && B.rows() == C, ErrorCode::ShapeMismatch, "kernels must have one row per channel");
  const Eigen::MatrixXd ra = detail::convolve(ds.A, s, cfg.response_delay);
  Eigen::MatrixXd rb = detail::convolve(B, s, cfg.response_delay);
  if (!cfg.B.size()) {
    // Drawn kernels: make the attention-independent response uncorrelated
    // with the attention-driven one over the recording, then set its size.
    const double ra2 = ra.squaredNorm();
    if (ra2 > 0) {
      const double c = (ra.array() * rb.array()).sum() / ra2;
      B -= c * ds.A;
      rb -= c * ra;
    }
    const double na = ra.norm(), nb = rb.norm();
    const double k = nb > 0 ? cfg.b_ratio * na / nb : 0.0;
    B *= k;
    rb *= k;
  }
  ds.B = B;

  auto noise_rng = detail::stream(cfg.seed, 4);
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(C, C) +
                      cfg.noise_spatial * detail::gaussian(noise_rng, C, C) / std::sqrt(static_cast<double>(C));
  for (int c = 0; c < C; ++c) M.row(c).normalize();
  ds.noise_mixing = M;
  Eigen::MatrixXd n = detail::gaussian(noise_rng, C, T);
  const double a = std::exp(-2.0 * std::numbers::pi * cfg.noise_corner / cfg.fs);
  // one-pole colouring, rescaled to unit stationary variance
  const double unit = std::sqrt(1.0 - a * a) / (1.0 - a);
  n.col(0) *= (1.0 - a) / std::sqrt(1.0 - a * a);
  for (Eigen::Index t = 1; t < T; ++t) n.col(t) = (1.0 - a) * n.col(t) + a * n.col(t - 1);
  n *= unit;
  n = M * n;
  const double ref = ra.squaredNorm() / static_cast<double>(C * T);
  n *= std::sqrt(cfg.noise_power * (ref > 0 ? ref : 1.0));

  ds.eeg.data = ra.array().rowwise() * ds.alpha_trace.array();
  ds.eeg.data += rb + n;
  ds.eeg.fs = cfg.fs;
  ds.eeg.kind = SignalKind::eeg;
  ds.envelope.data = s;
  ds.envelope.fs = cfg.fs;
  ds.envelope.kind = SignalKind::envelope;
  ds.labels_true = ds.window_labels(cfg.tau);
  return ds;
}

/// Lag-embedded noise covariance implied by the noise model alone (A = B = 0):
/// block (l1, l2) of channel pair (c1, c2) is noise_power * a^|l1-l2| (M M')_{c1 c2}.
inline Eigen::MatrixXd analytic_noise_covariance(const SynthConfig& cfg, const Eigen::MatrixXd& mixing,
                                                 const LagConfig& lags) {
  const double a = std::exp(-2.0 * std::numbers::pi * cfg.noise_corner / cfg.fs);
  const Eigen::MatrixXd mm = cfg.noise_power * mixing * mixing.transpose();
  const int C = cfg.channels, L = lags.eeg_lags;
  Eigen::MatrixXd R(C * L, C * L);
  for (int c1 = 0; c1 < C; ++c1)
    for (int l1 = 0; l1 < L; ++l1)
      for (int c2 = 0; c2 < C; ++c2)
        for (int l2 = 0; l2 < L; ++l2) R(c1 * L + l1, c2 * L + l2) = mm(c1, c2) * std::pow(a, std::abs(l1 - l2));
  return R;
}

// ---------------------------------------------------------------------------
// Noise calibration

struct CalibrationOptions {
  LagConfig lags;
  int folds = 10;
  double noise_min = 1.0;
  double noise_max = 1e7;
  int max_evaluations = 40;
};

/// Pooled out-of-fold AUC of supervised normal CCA + LDA on the config's data.
inline double supervised_auc(const SynthConfig& cfg, const CalibrationOptions& opts = {}) {
  const SynthDataset ds = generate(cfg);
  const SegmentSet seg = ds.segments(opts.lags, cfg.tau);
  const auto& truth = *seg.labels_true();
  const int folds = std::min<int>(opts.folds, static_cast<int>(seg.size()));
  const auto cv = pipeline::supervised_cv(seg, truth, folds, pipeline::Classifier::lda, linalg::CcaMode::normal, {},
                                          opts.lags.components);
  return eval::auc_fast(cv.scores, truth);
}

struct CalibrationResult {
  SynthConfig config;
  double auc = 0.0;
  int evaluations = 0;
};

/// Log-scale bisection of noise_power until the supervised AUC is within tol
/// of the target. AUC falls as noise rises; Unreachable when even the
/// quietest allowed setting stays below target - tol.
inline CalibrationResult calibrate_snr_detailed(const SynthConfig& cfg, double target_auc, double tol,
                                                const CalibrationOptions& opts = {}) {
  require(target_auc > 0.5 && target_auc < 1.0, ErrorCode::InvalidArgument, "target AUC must lie in (0.5, 1)");
  require(tol > 0, ErrorCode::InvalidArgument, "tolerance must be positive");
  CalibrationResult res;
  res.config = cfg;
  auto eval_at = [&](double noise) {
    SynthConfig c = cfg;
    c.noise_power = noise;
    ++res.evaluations;
    return supervised_auc(c, opts);
  };
  {
    // AUC moves in steps of 1/(2 n1 n0) (ties count half); a band that
    // holds no step can never be hit, whatever the noise.
    const SynthDataset ds = generate(cfg);
    const auto labels = ds.window_labels(cfg.tau);
    const auto n1 = static_cast<double>(std::count(labels.begin(), labels.end(), true));
    const double n0 = static_cast<double>(labels.size()) - n1;
    require(n1 > 0 && n0 > 0, ErrorCode::Unreachable, "the attention profile yields a single class");
    const double steps = 2.0 * n1 * n0;
    require(std::floor((target_auc + tol) * steps) >= std::ceil((target_auc - tol) * steps), ErrorCode::Unreachable,
            "no AUC value attainable with " + std::to_string(labels.size()) + " windows lies within " +
                std::to_string(tol) + " of " + std::to_string(target_auc));
  }
  res.auc = eval_at(cfg.noise_power);
  if (std::abs(res.auc - target_auc) <= tol) return res;

  double lo = std::log(opts.noise_min), hi = std::log(opts.noise_max);
  const double auc_quiet = eval_at(opts.noise_min);
  if (auc_quiet < target_auc - tol)
    fail(ErrorCode::Unreachable, "supervised AUC " + std::to_string(auc_quiet) + " at the lowest noise setting is below " +
                                     std::to_string(target_auc) + " - " + std::to_string(tol));
  if (std::abs(auc_quiet - target_auc) <= tol) {
    res.config.noise_power = opts.noise_min;
    res.auc = auc_quiet;
    return res;
  }
  const double auc_loud = eval_at(opts.noise_max);
  if (auc_loud > target_auc + tol)
    fail(ErrorCode::Unreachable, "supervised AUC stays above the target even at the highest noise setting");
  while (res.evaluations < opts.max_evaluations) {
    const double mid = 0.5 * (lo + hi);
    const double auc = eval_at(std::exp(mid));
    if (std::abs(auc - target_auc) <= tol) {
      res.config.noise_power = std::exp(mid);
      res.auc = auc;
      return res;
    }
    (auc > target_auc ? lo : hi) = mid;
  }
  fail(ErrorCode::Unreachable, "bisection did not reach the target within " + std::to_string(opts.max_evaluations) +
                                   " evaluations");
}

inline SynthConfig calibrate_snr(const SynthConfig& cfg, double target_auc, double tol,
                                 const CalibrationOptions& opts = {}) {
  return calibrate_snr_detailed(cfg, target_auc, tol, opts).config;
}

}  // namespace aad::synth
