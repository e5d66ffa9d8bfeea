#pragma once

// Soft-label CCA (normal and discriminative) and per-window correlation
// features.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "aad/core_io.hpp"
#include "aad/linalg.hpp"

namespace aad::cca {

using linalg::CcaMode;

/// K decoder / encoder pairs. Row k of `decoders` is d_k, row k of
/// `encoders` is e_k; both are normalized so that d_k' R_xx d_k = 1 and
/// e_k' R_ss e_k = 1 on the training covariances.
struct CcaModel {
  LagConfig cfg;
  Eigen::MatrixXd decoders;     // K x (C*L_x)
  Eigen::MatrixXd encoders;     // K x L_s
  Eigen::VectorXd eigenvalues;  // K, non-increasing (squared canonical correlations)
  double ridge = 0.0;           // ridge actually used, after any automatic raise

  Eigen::Index components() const { return decoders.rows(); }
};

struct FitOptions {
  double ridge = 1e-6;
  int max_ridge_retries = 3;
};

/// Solves R_xs R_ss^-1 R_xs' d = lambda R_xx d for the top K decoders and
/// derives e_k ∝ R_ss^-1 R_xs' d_k.
inline CcaModel solve(const linalg::Covariances& cov, const LagConfig& cfg, Eigen::Index K) {
  const Eigen::MatrixXd RssInvRsx = linalg::spd_solve(cov.Rss, cov.Rxs.transpose());  // L_s x rows
  const Eigen::MatrixXd A = cov.Rxs * RssInvRsx;
  const auto half = linalg::gevd_topk(A, cov.Rxx, K);

  CcaModel model;
  model.cfg = cfg;
  model.eigenvalues = half.eigenvalues;
  model.decoders = half.vectors.transpose();
  model.encoders.resize(K, cov.Rss.rows());

  std::optional<linalg::GevdHalf> encoder_side;
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::VectorXd e = RssInvRsx * half.vectors.col(k);
    const double norm2 = e.dot(cov.Rss * e);
    if (norm2 > 1e-24 * std::max(1.0, half.eigenvalues.cwiseAbs().maxCoeff())) {
      model.encoders.row(k) = (e / std::sqrt(norm2)).transpose();
    } else {
      // R_xs' d_k vanishes (e.g. a zero cross-covariance); fall back to the
      // encoder-side problem R_sx R_xx^-1 R_xs e = lambda R_ss e.
      if (!encoder_side) {
        const Eigen::MatrixXd B = cov.Rxs.transpose() * linalg::spd_solve(cov.Rxx, cov.Rxs);
        encoder_side = linalg::gevd_topk(B, cov.Rss, K);
      }
      model.encoders.row(k) = encoder_side->vectors.col(k).transpose();
    }
    // Sign convention: d_k' R_xs e_k >= 0.
    if (model.decoders.row(k).dot(cov.Rxs * model.encoders.row(k).transpose()) < 0)
      model.encoders.row(k) *= -1.0;
  }
  return model;
}

/// Fits from a filled accumulator, raising the ridge by a decade (up to
/// `max_ridge_retries` times) when R_xx or R_ss is not numerically positive definite.
inline CcaModel fit_from_accumulator(const linalg::CovarianceAccumulator& acc, const LagConfig& cfg, CcaMode mode,
                                     const FitOptions& opts = {}) {
  if (mode == CcaMode::discriminative)
    require(acc.weight_pos > 0 && acc.weight_neg > 0, ErrorCode::DegenerateLabels,
            "discriminative CCA needs mass in both classes");
  const Eigen::Index K = cfg.components;
  require(K <= acc.env_rows() && K <= acc.eeg_rows(), ErrorCode::InvalidArgument,
          "K exceeds the embedding dimensions");
  double ridge = opts.ridge;
  for (int attempt = 0;; ++attempt) {
    try {
      CcaModel model = solve(linalg::finalize(acc, mode, ridge), cfg, K);
      model.ridge = ridge;
      return model;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotPositiveDefinite || attempt >= opts.max_ridge_retries) throw;
      ridge = std::max(ridge, 1e-12) * 10.0;
    }
  }
}

/// Accumulates every window with its soft label and fits.
inline CcaModel fit(const SegmentSet& segments, const LabelVector& labels, CcaMode mode,
                    const FitOptions& opts = {}) {
  require(labels.size() == segments.size(), ErrorCode::ShapeMismatch, "one label per window required");
  auto acc = linalg::CovarianceAccumulator::zeros(segments.eeg_rows(), segments.envelope_rows());
  Eigen::MatrixXd X, S;
  for (std::size_t n = 0; n < segments.size(); ++n) {
    segments.eeg_window(n, X);
    segments.envelope_window(n, S);
    linalg::accumulate(acc, X, S, labels.p[n]);
  }
  return fit_from_accumulator(acc, segments.lags(), mode, opts);
}

/// Correlation features for a set of windows; windows whose projected energy
/// underflows get rho = 0 and are flagged.
struct FeatureSet {
  Eigen::MatrixXd rho;              // N x K
  std::vector<bool> zero_variance;  // per window

  std::size_t size() const { return static_cast<std::size_t>(rho.rows()); }
};

namespace detail {

inline double correlation_or_zero(double uv, double uu, double vv, bool& degenerate) {
  const double denom = std::sqrt(uu) * std::sqrt(vv);
  if (!(denom > 1e-150)) {
    degenerate = true;
    return 0.0;
  }
  return std::clamp(uv / denom, -1.0, 1.0);
}

}  // namespace detail

inline Eigen::VectorXd window_features(const CcaModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& S,
                                       bool* zero_variance = nullptr) {
  require(X.rows() == model.decoders.cols() && S.rows() == model.encoders.cols() && X.cols() == S.cols(),
          ErrorCode::ShapeMismatch, "window shape does not match the model");
  const Eigen::MatrixXd u = model.decoders * X;  // K x tau
  const Eigen::MatrixXd v = model.encoders * S;
  const Eigen::Index K = model.components();
  Eigen::VectorXd rho(K);
  bool degenerate = false;
  for (Eigen::Index k = 0; k < K; ++k)
    rho(k) = detail::correlation_or_zero(u.row(k).dot(v.row(k)), u.row(k).squaredNorm(), v.row(k).squaredNorm(), degenerate);
  if (zero_variance) *zero_variance = degenerate;
  return rho;
}

namespace detail {

// Filters the whole recording once: u_k(t) = d_k' x(t), v_k(t) = e_k' s(t)
// with the same zero-outside convention as the explicit embeddings.
inline FeatureSet continuous_features(const CcaModel& model, const SegmentSet& segments) {
  const Eigen::MatrixXd& eeg = *segments.continuous_eeg();
  const Eigen::RowVectorXd& env = *segments.continuous_envelope();
  const LagConfig& cfg = segments.lags();
  const Eigen::Index K = model.components(), C = eeg.rows(), T = eeg.cols(), L = cfg.eeg_lags;
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(K, T), v = Eigen::MatrixXd::Zero(K, T);
  for (Eigen::Index l = 0; l < L; ++l) {
    const Eigen::Index shift = cfg.delay - l;  // u(t) += d_{c,l} x_c(t + shift)
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift), hi = std::min(T, T - shift);
    if (hi <= lo) continue;
    Eigen::MatrixXd w(K, C);
    for (Eigen::Index c = 0; c < C; ++c) w.col(c) = model.decoders.col(c * L + l);
    u.middleCols(lo, hi - lo).noalias() += w * eeg.middleCols(lo + shift, hi - lo);
  }
  for (Eigen::Index l = 0; l < model.encoders.cols(); ++l) {
    if (l >= T) break;
    v.rightCols(T - l).noalias() += model.encoders.col(l) * env.head(T - l);
  }
  FeatureSet out;
  out.rho.resize(static_cast<Eigen::Index>(segments.size()), K);
  out.zero_variance.assign(segments.size(), false);
  const Eigen::Index width = segments.window_samples();
  for (std::size_t n = 0; n < segments.size(); ++n) {
    const auto t0 = static_cast<Eigen::Index>(segments.start_sample(n));
    bool flag = false;
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto uk = u.row(k).segment(t0, width);
      const auto vk = v.row(k).segment(t0, width);
      out.rho(static_cast<Eigen::Index>(n), k) =
          correlation_or_zero(uk.dot(vk), uk.squaredNorm(), vk.squaredNorm(), flag);
    }
    out.zero_variance[n] = flag;
  }
  return out;
}

}  // namespace detail

inline FeatureSet features(const CcaModel& model, const SegmentSet& segments) {
  require(segments.eeg_rows() == model.decoders.cols() && segments.envelope_rows() == model.encoders.cols(),
          ErrorCode::ShapeMismatch, "segment shape does not match the model");
  if (segments.is_continuous()) return detail::continuous_features(model, segments);
  FeatureSet out;
  out.rho.resize(static_cast<Eigen::Index>(segments.size()), model.components());
  out.zero_variance.assign(segments.size(), false);
  Eigen::MatrixXd X, S;
  for (std::size_t n = 0; n < segments.size(); ++n) {
    segments.eeg_window(n, X);
    segments.envelope_window(n, S);
    bool flag = false;
    out.rho.row(static_cast<Eigen::Index>(n)) = window_features(model, X, S, &flag).transpose();
    out.zero_variance[n] = flag;
  }
  return out;
}

/// d_k' R_xs e_k / sqrt(d_k' R_xx d_k * e_k' R_ss e_k) for each component.
inline Eigen::VectorXd covariance_correlations(const CcaModel& model, const linalg::Covariances& cov) {
  Eigen::VectorXd out(model.components());
  for (Eigen::Index k = 0; k < model.components(); ++k) {
    const Eigen::VectorXd d = model.decoders.row(k).transpose();
    const Eigen::VectorXd e = model.encoders.row(k).transpose();
    out(k) = d.dot(cov.Rxs * e) / std::sqrt(d.dot(cov.Rxx * d) * e.dot(cov.Rss * e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: decoders.ten, encoders.ten, eigenvalues.ten plus model.json.
// Payloads are float32, so a reloaded model matches to single precision.

inline void save_model(const CcaModel& model, const std::filesystem::path& dir,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  write_tensor_file(dir / "decoders.ten", tensor_from_matrix(model.decoders));
  write_tensor_file(dir / "encoders.ten", tensor_from_matrix(model.encoders));
  write_tensor_file(dir / "eigenvalues.ten", tensor_from_matrix(model.eigenvalues.transpose()));
  nlohmann::json j = extra;
  j["eeg_lags"] = model.cfg.eeg_lags;
  j["envelope_lags"] = model.cfg.envelope_lags;
  j["delay"] = model.cfg.delay;
  j["components"] = model.components();
  j["ridge"] = model.ridge;
  aad::detail::write_all(dir / "model.json", j.dump(2) + "\n");
}

inline CcaModel load_model(const std::filesystem::path& dir) {
  const auto meta_path = dir / "model.json";
  require(std::filesystem::exists(meta_path), ErrorCode::IoFailure, meta_path.string() + " not found");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(aad::detail::read_all(meta_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoFailure, meta_path.string() + ": invalid JSON (" + e.what() + ")");
  }
  CcaModel m;
  m.cfg.eeg_lags = j.at("eeg_lags").get<int>();
  m.cfg.envelope_lags = j.at("envelope_lags").get<int>();
  m.cfg.delay = j.at("delay").get<int>();
  m.cfg.components = j.at("components").get<int>();
  m.ridge = j.value("ridge", 0.0);
  m.decoders = matrix_from_tensor(read_tensor_file(dir / "decoders.ten"));
  m.encoders = matrix_from_tensor(read_tensor_file(dir / "encoders.ten"));
  m.eigenvalues = matrix_from_tensor(read_tensor_file(dir / "eigenvalues.ten")).row(0).transpose();
  require(m.decoders.rows() == m.cfg.components && m.encoders.rows() == m.cfg.components &&
              m.eigenvalues.size() == m.cfg.components && m.encoders.cols() == m.cfg.envelope_lags,
          ErrorCode::ShapeMismatch, dir.string() + ": checkpoint shapes disagree with model.json");
  return m;
}

}  // namespace aad::cca
