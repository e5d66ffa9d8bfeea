#pragma once

// Signal containers, the AAD1 tensor file format and decision-window
// segmentation into lagged EEG / envelope embeddings.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aad/error.hpp"
#include "json.hpp"

namespace aad {

enum class SignalKind { eeg, envelope, audio };

inline std::string_view to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::eeg: return "eeg";
    case SignalKind::envelope: return "envelope";
    case SignalKind::audio: return "audio";
  }
  return "eeg";
}

inline SignalKind signal_kind_from_string(std::string_view s) {
  if (s == "eeg") return SignalKind::eeg;
  if (s == "envelope") return SignalKind::envelope;
  if (s == "audio") return SignalKind::audio;
  fail(ErrorCode::InvalidArgument, "unknown signal kind '" + std::string(s) + "'");
}

/// Multichannel sampled signal, one row per channel.
struct SignalBuffer {
  Eigen::MatrixXd data;  // C x T
  double fs = 0.0;
  SignalKind kind = SignalKind::eeg;
  std::vector<std::string> channel_names;

  Eigen::Index channels() const { return data.rows(); }
  Eigen::Index samples() const { return data.cols(); }
  double duration() const { return fs > 0 ? static_cast<double>(samples()) / fs : 0.0; }

  void validate() const {
    require(channels() >= 1 && samples() >= 1, ErrorCode::ShapeMismatch,
            "signal must have at least one channel and one sample");
    require(fs > 0 && std::isfinite(fs), ErrorCode::InvalidArgument,
            "sampling rate must be positive");
    require(data.allFinite(), ErrorCode::NonFiniteData, "signal contains non-finite samples");
    require(channel_names.empty() ||
                channel_names.size() == static_cast<std::size_t>(channels()),
            ErrorCode::ShapeMismatch, "channel_names length differs from channel count");
  }

  std::vector<std::string> names_or_default() const {
    if (!channel_names.empty()) return channel_names;
    std::vector<std::string> names;
    for (Eigen::Index c = 0; c < channels(); ++c) names.push_back("ch" + std::to_string(c + 1));
    return names;
  }
};

inline SignalBuffer make_signal(Eigen::MatrixXd data, double fs, SignalKind kind) {
  SignalBuffer buf{std::move(data), fs, kind, {}};
  buf.validate();
  return buf;
}

/// Per-window probability of attention; hard labels are p > 0.5.
struct LabelVector {
  std::vector<double> p;

  static LabelVector from_soft(std::vector<double> values) {
    for (double v : values)
      require(v >= 0.0 && v <= 1.0 && std::isfinite(v), ErrorCode::InvalidArgument,
              "soft labels must lie in [0,1]");
    return LabelVector{std::move(values)};
  }

  static LabelVector from_hard(const std::vector<bool>& labels) {
    LabelVector out;
    out.p.reserve(labels.size());
    for (bool b : labels) out.p.push_back(b ? 1.0 : 0.0);
    return out;
  }

  static LabelVector constant(std::size_t n, double value) {
    return from_soft(std::vector<double>(n, value));
  }

  std::size_t size() const { return p.size(); }

  std::vector<bool> hard() const {
    std::vector<bool> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.5;
    return out;
  }
};

// ---------------------------------------------------------------------------
// AAD1 tensor files
//
// Layout (all little-endian):
//   "AAD1" | u32 ndim | ndim x u32 dims | prod(dims) x f32 payload (row-major)
// Metadata (fs, kind, channel_names) lives in a JSON sidecar "<path>.json".

inline constexpr std::array<char, 4> kTensorMagic{'A', 'A', 'D', '1'};

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace detail

inline std::string encode_tensor(const Tensor& t) {
  require(t.values.size() == t.element_count(), ErrorCode::ShapeMismatch,
          "tensor payload does not match dims");
  std::string out(kTensorMagic.begin(), kTensorMagic.end());
  out.reserve(8 + 4 * t.dims.size() + 4 * t.values.size());
  detail::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) detail::put_u32(out, d);
  for (float v : t.values) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(v));
    detail::put_u32(out, bits);
  }
  return out;
}

inline Tensor decode_tensor(const std::string& bytes, const std::string& origin) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  require(bytes.size() >= 4 && std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin()),
          ErrorCode::BadMagic, origin + ": magic is not AAD1");
  require(bytes.size() >= 8, ErrorCode::TruncatedPayload, origin + ": header truncated");
  Tensor t;
  const std::uint32_t ndim = detail::get_u32(p + 4);
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(ndim);
  require(bytes.size() >= header, ErrorCode::TruncatedPayload, origin + ": dims truncated");
  t.dims.resize(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims[i] = detail::get_u32(p + 8 + 4 * i);
  const std::size_t n = t.element_count();
  const std::size_t expected = header + 4 * n;
  require(bytes.size() >= expected, ErrorCode::TruncatedPayload,
          origin + ": payload has " + std::to_string(bytes.size() - header) + " bytes, expected " +
              std::to_string(4 * n));
  require(bytes.size() == expected, ErrorCode::ShapeMismatch,
          origin + ": trailing bytes after payload");
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = detail::get_u32(p + header + 4 * i);
    std::memcpy(&t.values[i], &bits, sizeof(bits));
  }
  return t;
}

inline Tensor read_tensor_file(const std::filesystem::path& path) {
  return decode_tensor(detail::read_all(path), path.string());
}

inline void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
  detail::write_all(path, encode_tensor(t));
}

/// Matrix <-> tensor helpers used for model checkpoints.
inline Tensor tensor_from_matrix(const Eigen::MatrixXd& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      require(std::isfinite(m(r, c)) && std::abs(m(r, c)) <= std::numeric_limits<float>::max(),
              ErrorCode::NonFiniteData, "matrix value not representable as finite float32");
      t.values.push_back(static_cast<float>(m(r, c)));
    }
  return t;
}

inline Eigen::MatrixXd matrix_from_tensor(const Tensor& t) {
  Eigen::Index rows = 1, cols = 1;
  if (t.dims.size() == 1) {
    cols = t.dims[0];
  } else if (t.dims.size() == 2) {
    rows = t.dims[0];
    cols = t.dims[1];
  } else {
    fail(ErrorCode::ShapeMismatch, "expected a 1-D or 2-D tensor, got ndim=" + std::to_string(t.dims.size()));
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = static_cast<double>(t.values[static_cast<std::size_t>(r * cols + c)]);
  return m;
}

/// Writes the buffer as float32. Values are rounded to single precision, so
/// read_tensor(write_tensor(b)) == b holds exactly for float-representable data.
inline void write_tensor(const SignalBuffer& buf, const std::filesystem::path& path,
                         const nlohmann::json& extra_metadata = nlohmann::json::object()) {
  buf.validate();
  write_tensor_file(path, tensor_from_matrix(buf.data));
  nlohmann::json meta = extra_metadata;
  meta["fs"] = buf.fs;
  meta["kind"] = std::string(to_string(buf.kind));
  meta["channel_names"] = buf.names_or_default();
  detail::write_all(sidecar_path(path), meta.dump(2) + "\n");
}

inline SignalBuffer read_tensor(const std::filesystem::path& path) {
  Tensor t = read_tensor_file(path);
  const auto side = sidecar_path(path);
  require(std::filesystem::exists(side), ErrorCode::MissingSidecar,
          path.string() + ": sidecar " + side.string() + " not found");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_all(side));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoFailure, side.string() + ": invalid JSON (" + e.what() + ")");
  }
  SignalBuffer buf;
  buf.data = matrix_from_tensor(t);
  require(meta.contains("fs") && meta["fs"].is_number(), ErrorCode::MissingSidecar,
          side.string() + ": missing numeric 'fs'");
  buf.fs = meta["fs"].get<double>();
  buf.kind = signal_kind_from_string(meta.value("kind", std::string("eeg")));
  if (meta.contains("channel_names"))
    buf.channel_names = meta["channel_names"].get<std::vector<std::string>>();
  buf.validate();
  return buf;
}

/// CSV fallback: header `t,ch1..chC`, one row per sample. The sampling rate is
/// recovered from the time column.
inline SignalBuffer read_csv_signal(const std::filesystem::path& path, SignalKind kind) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::TruncatedPayload,
          path.string() + ": empty CSV");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      cells.push_back(cell);
    }
    return cells;
  };
  auto header = split(line);
  require(header.size() >= 2 && header[0] == "t", ErrorCode::ShapeMismatch,
          path.string() + ": header must be t,ch1..chC");
  const std::size_t channels = header.size() - 1;
  std::vector<double> times;
  std::vector<std::vector<double>> cols(channels);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    require(cells.size() == header.size(), ErrorCode::ShapeMismatch,
            path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    try {
      times.push_back(std::stod(cells[0]));
      for (std::size_t c = 0; c < channels; ++c) cols[c].push_back(std::stod(cells[c + 1]));
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": not a number");
    }
  }
  require(times.size() >= 2, ErrorCode::TruncatedPayload, path.string() + ": need at least two samples");
  const double span = times.back() - times.front();
  require(span > 0, ErrorCode::InvalidArgument, path.string() + ": time column must increase");
  SignalBuffer buf;
  buf.fs = static_cast<double>(times.size() - 1) / span;
  // decimal time stamps leave rounding noise; snap to whole Hz when that close
  if (std::abs(buf.fs - std::round(buf.fs)) < 1e-6 * buf.fs) buf.fs = std::round(buf.fs);
  buf.kind = kind;
  buf.data.resize(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(times.size()));
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < times.size(); ++t)
      buf.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = cols[c][t];
  buf.channel_names.assign(header.begin() + 1, header.end());
  buf.validate();
  return buf;
}

// ---------------------------------------------------------------------------
// Lagged embeddings

/// Lag configuration in samples. Defaults: 250 ms of lags and a 200 ms EEG
/// delay at 64 Hz, two components.
struct LagConfig {
  int eeg_lags = 17;       // L_x
  int envelope_lags = 17;  // L_s
  int delay = 13;          // S
  int components = 2;      // K

  void validate(Eigen::Index channels) const {
    require(eeg_lags >= 1 && envelope_lags >= 1, ErrorCode::InvalidArgument, "lag counts must be >= 1");
    require(delay >= 0, ErrorCode::InvalidArgument, "delay must be >= 0");
    require(components >= 1, ErrorCode::InvalidArgument, "component count must be >= 1");
    require(components <= envelope_lags, ErrorCode::InvalidArgument, "K must not exceed L_s");
    require(channels <= 0 || components <= channels * eeg_lags, ErrorCode::InvalidArgument,
            "K must not exceed C*L_x");
  }
};

/// Row (c*L_x + l, t) of an EEG embedding holds x_c(t - l + S); row (l, t) of
/// an envelope embedding holds s(t - l). Samples outside the recording read as 0.
inline void embed_eeg(const Eigen::MatrixXd& eeg, const LagConfig& cfg, Eigen::Index t0,
                      Eigen::Index width, Eigen::MatrixXd& out) {
  const Eigen::Index C = eeg.rows(), T = eeg.cols(), L = cfg.eeg_lags;
  out.resize(C * L, width);
  for (Eigen::Index c = 0; c < C; ++c) {
    for (Eigen::Index l = 0; l < L; ++l) {
      const Eigen::Index shift = cfg.delay - l;
      const Eigen::Index first = t0 + shift;
      const Eigen::Index lo = std::clamp<Eigen::Index>(-first, 0, width);
      const Eigen::Index hi = std::clamp<Eigen::Index>(T - first, 0, width);
      auto row = out.row(c * L + l);
      if (lo > 0) row.head(lo).setZero();
      if (hi > lo) row.segment(lo, hi - lo) = eeg.row(c).segment(first + lo, hi - lo);
      if (hi < width) row.tail(width - std::max(hi, lo)).setZero();
    }
  }
}

inline void embed_envelope(const Eigen::RowVectorXd& env, const LagConfig& cfg, Eigen::Index t0,
                           Eigen::Index width, Eigen::MatrixXd& out) {
  const Eigen::Index T = env.size(), L = cfg.envelope_lags;
  out.resize(L, width);
  for (Eigen::Index l = 0; l < L; ++l) {
    const Eigen::Index first = t0 - l;
    const Eigen::Index lo = std::clamp<Eigen::Index>(-first, 0, width);
    const Eigen::Index hi = std::clamp<Eigen::Index>(T - first, 0, width);
    auto row = out.row(l);
    if (lo > 0) row.head(lo).setZero();
    if (hi > lo) row.segment(lo, hi - lo) = env.segment(first + lo, hi - lo);
    if (hi < width) row.tail(width - std::max(hi, lo)).setZero();
  }
}

/// N decision windows of paired lagged embeddings (X_n, S_n).
///
/// Windows built by segment() are views into the continuous recording and
/// are materialized on demand; windows built from explicit matrices are
/// stored as given. Either way the set is immutable and cheap to copy.
class SegmentSet {
 public:
  SegmentSet() = default;

  static SegmentSet from_signals(const SignalBuffer& eeg, const SignalBuffer& env, const LagConfig& cfg,
                                 Eigen::Index window_samples, Eigen::Index hop_samples) {
    auto src = std::make_shared<Source>();
    src->eeg = eeg.data;
    src->env = env.data.row(0);
    SegmentSet set;
    set.source_ = std::move(src);
    set.cfg_ = cfg;
    set.fs_ = eeg.fs;
    set.width_ = window_samples;
    set.eeg_rows_ = eeg.channels() * cfg.eeg_lags;
    const Eigen::Index T = eeg.samples();
    for (Eigen::Index start = 0; start + window_samples <= T; start += hop_samples)
      set.index_.push_back(static_cast<std::size_t>(start));
    return set;
  }

  static SegmentSet from_matrices(std::vector<Eigen::MatrixXd> X, std::vector<Eigen::MatrixXd> S, double fs,
                                  const LagConfig& cfg = {}) {
    require(X.size() == S.size() && !X.empty(), ErrorCode::ShapeMismatch,
            "X and S must hold the same non-zero number of windows");
    for (std::size_t n = 0; n < X.size(); ++n) {
      require(X[n].rows() == X[0].rows() && X[n].cols() == X[0].cols(), ErrorCode::ShapeMismatch,
              "every X_n must have identical shape");
      require(S[n].rows() == S[0].rows() && S[n].cols() == S[0].cols(), ErrorCode::ShapeMismatch,
              "every S_n must have identical shape");
      require(X[n].cols() == S[n].cols(), ErrorCode::ShapeMismatch, "X_n and S_n differ in column count");
    }
    auto src = std::make_shared<Source>();
    SegmentSet set;
    set.cfg_ = cfg;
    set.cfg_.envelope_lags = static_cast<int>(S[0].rows());
    set.fs_ = fs;
    set.width_ = X[0].cols();
    set.eeg_rows_ = X[0].rows();
    src->X = std::move(X);
    src->S = std::move(S);
    for (std::size_t n = 0; n < src->X.size(); ++n) set.index_.push_back(n);
    set.source_ = std::move(src);
    return set;
  }

  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }
  Eigen::Index window_samples() const { return width_; }
  Eigen::Index eeg_rows() const { return eeg_rows_; }
  Eigen::Index envelope_rows() const { return cfg_.envelope_lags; }
  double fs() const { return fs_; }
  const LagConfig& lags() const { return cfg_; }
  bool is_continuous() const { return source_ && source_->X.empty(); }

  // Underlying recording of a continuous set (null otherwise).
  const Eigen::MatrixXd* continuous_eeg() const { return is_continuous() ? &source_->eeg : nullptr; }
  const Eigen::RowVectorXd* continuous_envelope() const { return is_continuous() ? &source_->env : nullptr; }

  /// First envelope sample index covered by window n (continuous sets only).
  std::size_t start_sample(std::size_t n) const { return index_.at(n); }

  void eeg_window(std::size_t n, Eigen::MatrixXd& out) const {
    if (is_continuous())
      embed_eeg(source_->eeg, cfg_, static_cast<Eigen::Index>(index_.at(n)), width_, out);
    else
      out = source_->X.at(index_.at(n));
  }
  void envelope_window(std::size_t n, Eigen::MatrixXd& out) const {
    if (is_continuous())
      embed_envelope(source_->env, cfg_, static_cast<Eigen::Index>(index_.at(n)), width_, out);
    else
      out = source_->S.at(index_.at(n));
  }
  Eigen::MatrixXd eeg_window(std::size_t n) const {
    Eigen::MatrixXd out;
    eeg_window(n, out);
    return out;
  }
  Eigen::MatrixXd envelope_window(std::size_t n) const {
    Eigen::MatrixXd out;
    envelope_window(n, out);
    return out;
  }

  const std::optional<std::vector<bool>>& labels_true() const { return labels_; }

  SegmentSet with_labels(std::vector<bool> labels) const {
    require(labels.size() == size(), ErrorCode::ShapeMismatch, "label count differs from window count");
    SegmentSet out = *this;
    out.labels_ = std::move(labels);
    return out;
  }

  SegmentSet subset(std::span<const std::size_t> windows) const {
    SegmentSet out = *this;
    out.index_.clear();
    if (labels_) out.labels_->clear();
    for (std::size_t n : windows) {
      out.index_.push_back(index_.at(n));
      if (labels_) out.labels_->push_back((*labels_)[n]);
    }
    return out;
  }

 private:
  struct Source {
    Eigen::MatrixXd eeg;
    Eigen::RowVectorXd env;
    std::vector<Eigen::MatrixXd> X, S;
  };

  std::shared_ptr<const Source> source_;
  std::vector<std::size_t> index_;
  LagConfig cfg_;
  double fs_ = 0.0;
  Eigen::Index width_ = 0;
  Eigen::Index eeg_rows_ = 0;
  std::optional<std::vector<bool>> labels_;
};

/// Cuts EEG and envelope into decision windows of `tau` seconds on the
/// recording's grid. The trailing partial window is dropped. Lags reach into
/// neighbouring windows; only lags falling outside the recording read zero.
/// `hop` defaults to tau (non-overlapping windows).
inline SegmentSet segment(const SignalBuffer& eeg, const SignalBuffer& env, const LagConfig& cfg, double tau,
                          std::optional<double> hop = std::nullopt) {
  eeg.validate();
  env.validate();
  require(eeg.fs == env.fs, ErrorCode::RateMismatch,
          "EEG at " + std::to_string(eeg.fs) + " Hz, envelope at " + std::to_string(env.fs) + " Hz");
  require(env.channels() == 1, ErrorCode::ShapeMismatch, "envelope must have a single channel");
  require(eeg.samples() == env.samples(), ErrorCode::ShapeMismatch, "EEG and envelope differ in duration");
  cfg.validate(eeg.channels());
  require(tau > 0, ErrorCode::WindowTooShort, "window length must be positive");
  const auto width = static_cast<Eigen::Index>(std::llround(tau * eeg.fs));
  require(width >= cfg.eeg_lags + cfg.delay, ErrorCode::WindowTooShort,
          "window of " + std::to_string(width) + " samples cannot hold L_x + S = " +
              std::to_string(cfg.eeg_lags + cfg.delay));
  const auto step = hop ? static_cast<Eigen::Index>(std::llround(*hop * eeg.fs)) : width;
  require(step >= 1, ErrorCode::InvalidArgument, "hop must be at least one sample");
  SegmentSet set = SegmentSet::from_signals(eeg, env, cfg, width, step);
  require(!set.empty(), ErrorCode::WindowTooShort, "recording shorter than one window");
  return set;
}

}  // namespace aad
