#pragma once

// Envelope extraction, zero-phase band-limiting, rational resampling and
// channel PCA.

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "aad/core_io.hpp"
#include "aad/error.hpp"

namespace aad::dsp {

struct PreprocConfig {
  int n_bands = 15;
  double power_exponent = 0.6;
  double band_lo = 0.5;   // Hz
  double band_hi = 32.0;  // Hz
  double fs_out = 64.0;   // Hz
  int filter_order = 4;   // Butterworth order of each band edge
  double envelope_cutoff = 32.0;  // Hz, subband envelope smoothing
  double erb_lo = 150.0;
  double erb_hi = 4000.0;

  void validate() const {
    require(n_bands >= 1, ErrorCode::InvalidArgument, "n_bands must be >= 1");
    require(power_exponent > 0, ErrorCode::InvalidArgument, "power_exponent must be positive");
    require(filter_order >= 1 && filter_order <= 12, ErrorCode::InvalidArgument, "filter_order must be in [1, 12]");
    require(band_lo > 0 && band_lo < band_hi && band_hi <= fs_out / 2, ErrorCode::InvalidBand,
            "need 0 < band_lo < band_hi <= fs_out/2");
    require(envelope_cutoff > 0, ErrorCode::InvalidArgument, "envelope_cutoff must be positive");
    require(erb_lo > 0 && erb_lo < erb_hi, ErrorCode::InvalidBand, "need 0 < erb_lo < erb_hi");
  }
};

// ---------------------------------------------------------------------------
// Second-order sections, transposed direct form II

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

using Sos = std::vector<Biquad>;

namespace detail {

inline Biquad normalized(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

// Q factors of the conjugate pole pairs of an analog Butterworth prototype.
inline std::vector<double> butterworth_q(int order) {
  std::vector<double> q;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order);
    q.push_back(1.0 / (2.0 * std::sin(theta)));
  }
  return q;
}

}  // namespace detail

/// Butterworth low-pass (highpass=false) or high-pass via the bilinear
/// transform with prewarping.
inline Sos butterworth(int order, double fc, double fs, bool highpass) {
  require(order >= 1, ErrorCode::InvalidArgument, "filter order must be >= 1");
  require(fc > 0 && fc < fs / 2, ErrorCode::InvalidBand, "cutoff must lie strictly inside (0, fs/2)");
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double cw = std::cos(w0), sw = std::sin(w0);
  Sos sos;
  for (double q : detail::butterworth_q(order)) {
    const double alpha = sw / (2.0 * q);
    if (highpass)
      sos.push_back(detail::normalized((1 + cw) / 2, -(1 + cw), (1 + cw) / 2, 1 + alpha, -2 * cw, 1 - alpha));
    else
      sos.push_back(detail::normalized((1 - cw) / 2, 1 - cw, (1 - cw) / 2, 1 + alpha, -2 * cw, 1 - alpha));
  }
  if (order % 2 == 1) {
    const double k = std::tan(w0 / 2);
    const double a1 = (k - 1) / (k + 1);
    if (highpass)
      sos.push_back({1 / (1 + k), -1 / (1 + k), 0, a1, 0});
    else
      sos.push_back({k / (1 + k), k / (1 + k), 0, a1, 0});
  }
  return sos;
}

/// Two cascaded constant-peak-gain resonators: a 4th-order bandpass.
inline Sos resonator_bandpass(double fc, double q, double fs) {
  require(fc > 0 && fc < fs / 2, ErrorCode::InvalidBand, "centre frequency must lie inside (0, fs/2)");
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const Biquad bq = detail::normalized(alpha, 0, -alpha, 1 + alpha, -2 * std::cos(w0), 1 - alpha);
  return {bq, bq};
}

inline void sosfilt(const Sos& sos, std::vector<double>& x, const std::vector<std::pair<double, double>>* init = nullptr) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const Biquad& f = sos[s];
    double z1 = init ? (*init)[s].first : 0.0, z2 = init ? (*init)[s].second : 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = f.b0 * in + z1;
      z1 = f.b1 * in - f.a1 * out + z2;
      z2 = f.b2 * in - f.a2 * out;
      v = out;
    }
  }
}

/// Per-section state that makes a constant input x0 produce its steady-state
/// output from the first sample on.
inline std::vector<std::pair<double, double>> steady_state(const Sos& sos, double x0) {
  std::vector<std::pair<double, double>> zi;
  double in = x0;
  for (const Biquad& f : sos) {
    const double out = in * f.dc_gain();
    const double z2 = f.b2 * in - f.a2 * out;
    const double z1 = f.b1 * in - f.a1 * out + z2;
    zi.emplace_back(z1, z2);
    in = out;
  }
  return zi;
}

/// Zero-phase forward-backward filtering with odd-extension padding and
/// steady-state initial conditions. Linear in x.
inline Eigen::RowVectorXd filtfilt(const Sos& sos, const Eigen::RowVectorXd& x, Eigen::Index pad = -1) {
  const Eigen::Index n = x.size();
  if (n == 0 || sos.empty()) return x;
  if (pad < 0) pad = 3 * (2 * static_cast<Eigen::Index>(sos.size()) + 1);
  pad = std::min(pad, n - 1);
  std::vector<double> buf(static_cast<std::size_t>(n + 2 * pad));
  for (Eigen::Index i = 0; i < pad; ++i) buf[static_cast<std::size_t>(i)] = 2 * x(0) - x(pad - i);
  for (Eigen::Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(pad + i)] = x(i);
  for (Eigen::Index i = 0; i < pad; ++i) buf[static_cast<std::size_t>(pad + n + i)] = 2 * x(n - 1) - x(n - 2 - i);

  auto zi = steady_state(sos, buf.front());
  sosfilt(sos, buf, &zi);
  std::reverse(buf.begin(), buf.end());
  zi = steady_state(sos, buf.front());
  sosfilt(sos, buf, &zi);
  std::reverse(buf.begin(), buf.end());
  Eigen::RowVectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = buf[static_cast<std::size_t>(pad + i)];
  return out;
}

// ---------------------------------------------------------------------------
// Rational resampling

namespace detail {

inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

}  // namespace detail

/// Kaiser-windowed sinc low-pass prototype for an up/down polyphase
/// resampler; cutoff at 0.9 of the lower Nyquist rate.
inline std::vector<double> resampling_kernel(int up, int down, int half_periods = 10, double beta = 5.0) {
  const int m = std::max(up, down);
  const double fc = 0.9 / m;  // relative to the upsampled Nyquist rate
  const int half = half_periods * m;
  std::vector<double> h(static_cast<std::size_t>(2 * half + 1));
  const double i0b = detail::bessel_i0(beta);
  for (int k = -half; k <= half; ++k) {
    const double t = static_cast<double>(k);
    const double sinc = k == 0 ? fc : std::sin(std::numbers::pi * fc * t) / (std::numbers::pi * t);
    const double r = t / half;
    const double win = detail::bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[static_cast<std::size_t>(k + half)] = sinc * win;
  }
  // Unit DC gain per polyphase branch after multiplying by `up`.
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  for (double& v : h) v *= 1.0 / sum;
  return h;
}

inline Eigen::RowVectorXd resample_poly(const Eigen::RowVectorXd& x, int up, int down) {
  require(up >= 1 && down >= 1, ErrorCode::InvalidArgument, "resampling factors must be >= 1");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return x;
  const auto h = resampling_kernel(up, down);
  const auto half = static_cast<Eigen::Index>(h.size() / 2);
  const Eigen::Index n_in = x.size();
  const Eigen::Index n_out = (n_in * up + down - 1) / down;
  Eigen::RowVectorXd y(n_out);
  for (Eigen::Index m = 0; m < n_out; ++m) {
    // position on the upsampled grid, kernel centred there
    const Eigen::Index pos = m * down;
    const Eigen::Index j_lo = std::max<Eigen::Index>(0, (pos - half + up - 1) / up);
    const Eigen::Index j_hi = std::min<Eigen::Index>(n_in - 1, (pos + half) / up);
    double acc = 0.0;
    for (Eigen::Index j = j_lo; j <= j_hi; ++j) acc += x(j) * h[static_cast<std::size_t>(pos - j * up + half)];
    y(m) = acc * up;
  }
  return y;
}

inline std::pair<int, int> rational_ratio(double fs_in, double fs_out) {
  const auto a = std::llround(fs_in), b = std::llround(fs_out);
  require(a > 0 && b > 0 && std::abs(fs_in - static_cast<double>(a)) < 1e-6 &&
              std::abs(fs_out - static_cast<double>(b)) < 1e-6,
          ErrorCode::InvalidArgument, "sampling rates must be integral in Hz");
  const auto g = std::gcd(a, b);
  return {static_cast<int>(b / g), static_cast<int>(a / g)};
}

/// Resamples to fs_out, then applies a zero-phase Butterworth bandpass
/// [lo, hi]. lo = 0 skips the high-pass; the low-pass is skipped when hi sits
/// at (or within 5% of) the output Nyquist edge, where the resampler already
/// band-limits. hi may equal the Nyquist rate.
inline SignalBuffer bandpass_resample(const SignalBuffer& sig, double lo, double hi, double fs_out, int order = 4) {
  sig.validate();
  require(lo >= 0 && lo < hi && hi <= std::min(sig.fs, 2.0 * fs_out) / 2.0, ErrorCode::InvalidBand,
          "band [" + std::to_string(lo) + ", " + std::to_string(hi) + "] Hz invalid for " + std::to_string(sig.fs) +
              " -> " + std::to_string(fs_out) + " Hz");
  const auto [up, down] = rational_ratio(sig.fs, fs_out);
  const double nyq = fs_out / 2.0;
  const Sos hp = lo > 0 ? butterworth(order, lo, fs_out, true) : Sos{};
  const Sos lp = hi < 0.95 * nyq ? butterworth(order, hi, fs_out, false) : Sos{};

  SignalBuffer out;
  out.fs = fs_out;
  out.kind = sig.kind;
  out.channel_names = sig.channel_names;
  for (Eigen::Index c = 0; c < sig.channels(); ++c) {
    Eigen::RowVectorXd row = resample_poly(sig.data.row(c), up, down);
    if (!hp.empty()) row = filtfilt(hp, row, std::min<Eigen::Index>(row.size() - 1, static_cast<Eigen::Index>(3 * fs_out / lo)));
    if (!lp.empty()) row = filtfilt(lp, row);
    if (c == 0) out.data.resize(sig.channels(), row.size());
    out.data.row(c) = row;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Envelope extraction

inline double erb_rate(double f) { return 21.4 * std::log10(1.0 + 0.00437 * f); }
inline double erb_rate_inverse(double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437; }
inline double erb_bandwidth(double f) { return 24.7 * (4.37 * f / 1000.0 + 1.0); }

inline std::vector<double> erb_centres(int n, double lo, double hi) {
  std::vector<double> fc;
  const double a = erb_rate(lo), b = erb_rate(hi);
  for (int i = 0; i < n; ++i) fc.push_back(erb_rate_inverse(n == 1 ? (a + b) / 2 : a + (b - a) * i / (n - 1)));
  return fc;
}

/// Forward-backward one-pole smoother. Both passes have non-negative impulse
/// responses, so non-negative input stays non-negative.
inline Eigen::RowVectorXd smooth_positive(const Eigen::RowVectorXd& x, double fc, double fs) {
  const double a = std::exp(-2.0 * std::numbers::pi * fc / fs);
  Eigen::RowVectorXd y = x;
  for (int pass = 0; pass < 2; ++pass) {
    double state = y.size() > 0 ? y(0) : 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = state = (1 - a) * y(i) + a * state;
    double back = y.size() > 0 ? y(y.size() - 1) : 0.0;
    for (Eigen::Index i = y.size() - 1; i >= 0; --i) y(i) = back = (1 - a) * y(i) + a * back;
  }
  return y;
}

inline void check_audio(const SignalBuffer& audio) {
  audio.validate();
  require(audio.channels() == 1, ErrorCode::NotMono, "audio must be mono, got " + std::to_string(audio.channels()) + " channels");
  require(audio.fs >= 8000, ErrorCode::RateTooLow, "audio rate " + std::to_string(audio.fs) + " Hz is below 8000 Hz");
}

/// Equal-weight sum of power-compressed subband envelopes at the audio rate,
/// before the final bandpass.
inline Eigen::RowVectorXd subband_envelope(const SignalBuffer& audio, const PreprocConfig& cfg) {
  check_audio(audio);
  require(cfg.power_exponent > 0 && cfg.n_bands >= 1, ErrorCode::InvalidArgument, "invalid envelope settings");
  const double top = std::min(cfg.erb_hi, 0.45 * audio.fs);
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(audio.samples());
  for (double fc : erb_centres(cfg.n_bands, cfg.erb_lo, top)) {
    const Sos bp = resonator_bandpass(fc, fc / erb_bandwidth(fc), audio.fs);
    std::vector<double> y(audio.data.row(0).begin(), audio.data.row(0).end());
    sosfilt(bp, y);
    Eigen::RowVectorXd band(audio.samples());
    for (Eigen::Index i = 0; i < band.size(); ++i) band(i) = std::pow(std::abs(y[static_cast<std::size_t>(i)]), cfg.power_exponent);
    sum += smooth_positive(band, cfg.envelope_cutoff, audio.fs);
  }
  return sum;
}

inline SignalBuffer extract_envelope(const SignalBuffer& audio, const PreprocConfig& cfg = {}) {
  cfg.validate();
  SignalBuffer env;
  env.data = subband_envelope(audio, cfg);
  env.fs = audio.fs;
  env.kind = SignalKind::envelope;
  env = bandpass_resample(env, cfg.band_lo, cfg.band_hi, cfg.fs_out, cfg.filter_order);
  env.kind = SignalKind::envelope;
  return env;
}

/// EEG conditioning: artifact hook, then bandpass and resample.
inline SignalBuffer remove_artifacts(const SignalBuffer& eeg) { return eeg; }

inline SignalBuffer preprocess_eeg(const SignalBuffer& eeg, const PreprocConfig& cfg = {}) {
  cfg.validate();
  SignalBuffer out = bandpass_resample(remove_artifacts(eeg), cfg.band_lo, cfg.band_hi, cfg.fs_out, cfg.filter_order);
  out.kind = SignalKind::eeg;
  return out;
}

// ---------------------------------------------------------------------------
// PCA over channels

struct PcaBasis {
  Eigen::MatrixXd components;           // C x C', orthonormal columns
  Eigen::VectorXd explained_variance;   // C', non-increasing
  Eigen::VectorXd mean;                 // C
  double total_variance = 0.0;
};

inline PcaBasis fit_pca(const SignalBuffer& eeg, Eigen::Index keep) {
  eeg.validate();
  const Eigen::Index C = eeg.channels(), T = eeg.samples();
  require(keep >= 1 && keep <= C, ErrorCode::InvalidArgument, "component count must lie in [1, C]");
  require(T > C, ErrorCode::RankDeficient, "need more samples than channels");
  PcaBasis basis;
  basis.mean = eeg.data.rowwise().mean();
  const Eigen::MatrixXd centered = eeg.data.colwise() - basis.mean;
  Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(T);
  cov = 0.5 * (cov + cov.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, ErrorCode::ConvergenceFailure, "channel covariance eigensolver failed");
  const auto& vals = eig.eigenvalues();
  require(vals.minCoeff() >= -1e-10 * std::max(1.0, vals.cwiseAbs().maxCoeff()), ErrorCode::RankDeficient,
          "channel covariance is not positive semidefinite");
  basis.total_variance = vals.sum();
  basis.components.resize(C, keep);
  basis.explained_variance.resize(keep);
  for (Eigen::Index k = 0; k < keep; ++k) {
    basis.components.col(k) = eig.eigenvectors().col(C - 1 - k);
    basis.explained_variance(k) = std::max(0.0, vals(C - 1 - k));
  }
  return basis;
}

inline SignalBuffer apply_pca(const SignalBuffer& eeg, const PcaBasis& basis) {
  require(eeg.channels() == basis.components.rows(), ErrorCode::ShapeMismatch, "channel count differs from PCA basis");
  SignalBuffer out;
  out.data = basis.components.transpose() * (eeg.data.colwise() - basis.mean);
  out.fs = eeg.fs;
  out.kind = eeg.kind;
  return out;
}

inline SignalBuffer invert_pca(const SignalBuffer& reduced, const PcaBasis& basis) {
  require(reduced.channels() == basis.components.cols(), ErrorCode::ShapeMismatch, "component count differs from PCA basis");
  SignalBuffer out;
  out.data = (basis.components * reduced.data).colwise() + basis.mean;
  out.fs = reduced.fs;
  out.kind = reduced.kind;
  return out;
}

}  // namespace aad::dsp
