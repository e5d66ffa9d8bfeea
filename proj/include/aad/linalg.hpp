#pragma once

// Segment-weighted covariance accumulation and the symmetric-definite
// generalized eigensolver behind the CCA decoders.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aad/error.hpp"

namespace aad::linalg {

enum class CcaMode { normal, discriminative };

inline std::string_view to_string(CcaMode mode) {
  return mode == CcaMode::normal ? "normal" : "discriminative";
}

/// Running sums over segments. R_xx and R_ss always use every segment; the
/// cross terms are split by the segment's attention probability p_n.
struct CovarianceAccumulator {
  Eigen::MatrixXd sum_xx;      // (C*L_x)^2
  Eigen::MatrixXd sum_ss;      // L_s^2
  Eigen::MatrixXd sum_xs_pos;  // (C*L_x) x L_s, weighted by p_n
  Eigen::MatrixXd sum_xs_neg;  // (C*L_x) x L_s, weighted by 1 - p_n
  double weight_pos = 0.0;
  double weight_neg = 0.0;
  double n_segments = 0.0;  // fractional once decayed

  static CovarianceAccumulator zeros(Eigen::Index eeg_rows, Eigen::Index env_rows) {
    CovarianceAccumulator acc;
    acc.sum_xx.setZero(eeg_rows, eeg_rows);
    acc.sum_ss.setZero(env_rows, env_rows);
    acc.sum_xs_pos.setZero(eeg_rows, env_rows);
    acc.sum_xs_neg.setZero(eeg_rows, env_rows);
    return acc;
  }

  Eigen::Index eeg_rows() const { return sum_xx.rows(); }
  Eigen::Index env_rows() const { return sum_ss.rows(); }
};

/// sum += M M^T, computed on the lower triangle and mirrored so the result is
/// exactly symmetric.
inline void add_gram(Eigen::MatrixXd& sum, const Eigen::MatrixXd& m) {
  sum.selfadjointView<Eigen::Lower>().rankUpdate(m);
  sum.triangularView<Eigen::StrictlyUpper>() = sum.transpose();
}

inline void add_cross(CovarianceAccumulator& acc, const Eigen::MatrixXd& xs, double p) {
  acc.sum_xs_pos.noalias() += p * xs;
  acc.sum_xs_neg.noalias() += (1.0 - p) * xs;
  acc.weight_pos += p;
  acc.weight_neg += 1.0 - p;
}

inline void accumulate(CovarianceAccumulator& acc, const Eigen::MatrixXd& X, const Eigen::MatrixXd& S, double p) {
  require(X.rows() == acc.eeg_rows() && S.rows() == acc.env_rows() && X.cols() == S.cols(),
          ErrorCode::ShapeMismatch,
          "segment shapes (" + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) + ", " +
              std::to_string(S.rows()) + "x" + std::to_string(S.cols()) + ") do not match accumulator");
  require(p >= 0.0 && p <= 1.0, ErrorCode::InvalidArgument, "segment weight must lie in [0,1]");
  add_gram(acc.sum_xx, X);
  add_gram(acc.sum_ss, S);
  const Eigen::MatrixXd xs = X * S.transpose();
  add_cross(acc, xs, p);
  acc.n_segments += 1.0;
}

inline void merge(CovarianceAccumulator& into, const CovarianceAccumulator& other) {
  require(into.eeg_rows() == other.eeg_rows() && into.env_rows() == other.env_rows(), ErrorCode::ShapeMismatch,
          "cannot merge accumulators of different shapes");
  into.sum_xx += other.sum_xx;
  into.sum_ss += other.sum_ss;
  into.sum_xs_pos += other.sum_xs_pos;
  into.sum_xs_neg += other.sum_xs_neg;
  into.weight_pos += other.weight_pos;
  into.weight_neg += other.weight_neg;
  into.n_segments += other.n_segments;
}

/// Forgetting step X' = alpha * X of the recursive update.
inline void decay(CovarianceAccumulator& acc, double alpha) {
  acc.sum_xx *= alpha;
  acc.sum_ss *= alpha;
  acc.sum_xs_pos *= alpha;
  acc.sum_xs_neg *= alpha;
  acc.weight_pos *= alpha;
  acc.weight_neg *= alpha;
  acc.n_segments *= alpha;
}

struct Covariances {
  Eigen::MatrixXd Rxx;
  Eigen::MatrixXd Rss;
  Eigen::MatrixXd Rxs;
};

inline Eigen::MatrixXd add_ridge(Eigen::MatrixXd m, double ridge) {
  if (ridge > 0 && m.rows() > 0) {
    const double shift = ridge * m.diagonal().mean();
    m.diagonal().array() += shift;
  }
  return m;
}

/// Normal mode: R_xs = sum_pos / W_pos. Discriminative mode:
/// R_xs = (sum_pos - sum_neg) / W_pos, a single 1/sum(p) prefactor over both
/// terms. Auto-covariances are averaged over segments and ridged by
/// ridge * mean(diag).
inline Covariances finalize(const CovarianceAccumulator& acc, CcaMode mode, double ridge) {
  require(ridge >= 0, ErrorCode::InvalidArgument, "ridge must be non-negative");
  require(acc.weight_pos > 0, ErrorCode::NoPositiveMass, "no segment carries attended weight");
  if (mode == CcaMode::discriminative)
    require(acc.weight_neg > 0, ErrorCode::NoPositiveMass, "discriminative mode needs unattended weight");
  require(acc.n_segments > 0, ErrorCode::NoPositiveMass, "accumulator is empty");
  Covariances out;
  out.Rxx = add_ridge(acc.sum_xx / acc.n_segments, ridge);
  out.Rss = add_ridge(acc.sum_ss / acc.n_segments, ridge);
  if (mode == CcaMode::normal)
    out.Rxs = acc.sum_xs_pos / acc.weight_pos;
  else
    out.Rxs = (acc.sum_xs_pos - acc.sum_xs_neg) / acc.weight_pos;
  return out;
}

/// Top-K eigenpairs of A v = lambda B v.
struct GevdHalf {
  Eigen::VectorXd eigenvalues;  // non-increasing
  Eigen::MatrixXd vectors;      // one B-orthonormal column per eigenvalue
};

/// Cholesky reduction B = L L^T, symmetric eigensolve of L^-1 A L^-T and
/// back-transformation v = L^-T u. A is symmetrized first. Ties keep the
/// order the symmetric solver produced them in.
inline GevdHalf gevd_topk(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, Eigen::Index K) {
  const Eigen::Index n = A.rows();
  require(A.cols() == n && B.rows() == n && B.cols() == n, ErrorCode::ShapeMismatch,
          "gevd_topk needs square A and B of equal size");
  require(K >= 1 && K <= n, ErrorCode::InvalidArgument, "K must lie in [1, n]");
  require(A.allFinite() && B.allFinite(), ErrorCode::NonFiniteData, "non-finite matrix passed to gevd_topk");

  const Eigen::MatrixXd Bs = 0.5 * (B + B.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(Bs);
  require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite, "Cholesky factorization of B failed");
  const auto L = llt.matrixL();

  // C = L^-1 A_sym L^-T
  Eigen::MatrixXd C = 0.5 * (A + A.transpose());
  L.solveInPlace(C);
  C.transposeInPlace();
  L.solveInPlace(C);
  C = 0.5 * (C + C.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
  require(eig.info() == Eigen::Success, ErrorCode::ConvergenceFailure, "symmetric eigensolver did not converge");

  // Solver returns ascending values; stable sort to descending.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto& vals = eig.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return vals(a) > vals(b); });

  GevdHalf out;
  out.eigenvalues.resize(K);
  Eigen::MatrixXd U(n, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    out.eigenvalues(k) = vals(order[static_cast<std::size_t>(k)]);
    U.col(k) = eig.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  }
  llt.matrixU().solveInPlace(U);
  out.vectors = std::move(U);
  return out;
}

/// Symmetric positive-definite solve, used wherever R^-1 y is needed.
inline Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& R, const Eigen::MatrixXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (R + R.transpose()));
  require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite, "matrix is not positive definite");
  return llt.solve(rhs);
}

}  // namespace aad::linalg
