#pragma once

// Classification metrics, ROC/AUC and the paired Wilcoxon signed-rank test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "aad/error.hpp"

namespace aad::eval {

namespace detail {

// Doubled mid-ranks (1-based) so tied groups stay integral: a group covering
// ranks a..b gets a+b.
inline std::vector<std::int64_t> doubled_midranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<std::int64_t> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const auto r = static_cast<std::int64_t>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace detail

/// Rank-statistic AUC (Mann-Whitney U / n+ n-), ties counted as 1/2.
inline double auc_fast(std::span<const double> scores, const std::vector<bool>& truth) {
  require(scores.size() == truth.size(), ErrorCode::ShapeMismatch, "scores and labels differ in length");
  const auto ranks = detail::doubled_midranks(scores);
  std::int64_t n_pos = 0, rank_sum2 = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i]) {
      ++n_pos;
      rank_sum2 += ranks[i];
    }
  const auto n_neg = static_cast<std::int64_t>(truth.size()) - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorCode::SingleClassTruth, "AUC needs both classes in the ground truth");
  const std::int64_t u2 = rank_sum2 - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / static_cast<double>(2 * n_pos * n_neg);
}

inline double auc_fast(const std::vector<double>& scores, const std::vector<bool>& truth) {
  return auc_fast(std::span<const double>(scores), truth);
}

struct RocCurve {
  std::vector<double> thresholds;  // predicted positive iff score >= threshold
  std::vector<double> tpr, fpr;
  double auc = 0.0;
};

inline RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& truth) {
  require(scores.size() == truth.size(), ErrorCode::ShapeMismatch, "scores and labels differ in length");
  const auto n_pos = static_cast<double>(std::count(truth.begin(), truth.end(), true));
  const double n_neg = static_cast<double>(truth.size()) - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorCode::SingleClassTruth, "ROC needs both classes in the ground truth");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocCurve roc;
  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  roc.tpr.push_back(0.0);
  roc.fpr.push_back(0.0);
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (truth[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    roc.thresholds.push_back(s);
    roc.tpr.push_back(tp / n_pos);
    roc.fpr.push_back(fp / n_neg);
  }
  for (std::size_t i = 1; i < roc.tpr.size(); ++i)
    roc.auc += (roc.fpr[i] - roc.fpr[i - 1]) * (roc.tpr[i] + roc.tpr[i - 1]) / 2.0;
  return roc;
}

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<RocCurve> roc;  // empty when the truth holds a single class
  double auc() const { return roc ? roc->auc : std::numeric_limits<double>::quiet_NaN(); }
};

/// Attended is the positive class. Precision/recall/F1 are 0 when undefined.
inline Metrics metrics(std::span<const double> scores, const std::vector<bool>& predicted,
                       const std::vector<bool>& truth) {
  require(scores.size() == truth.size() && predicted.size() == truth.size(), ErrorCode::ShapeMismatch,
          "scores, predictions and truth differ in length");
  require(!truth.empty(), ErrorCode::InvalidArgument, "no windows to score");
  double tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    correct += predicted[i] == truth[i];
    tp += predicted[i] && truth[i];
    fp += predicted[i] && !truth[i];
    fn += !predicted[i] && truth[i];
  }
  Metrics m;
  m.accuracy = correct / static_cast<double>(truth.size());
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  const bool both = std::find(truth.begin(), truth.end(), true) != truth.end() &&
                    std::find(truth.begin(), truth.end(), false) != truth.end();
  if (both) m.roc = roc_curve(scores, truth);
  return m;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;  // rank sum of positive differences
  std::size_t n = 0;    // non-zero differences
  bool exact = false;
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Two-sided paired test on a - b. Zero differences are discarded; if none
/// remain the p-value is 1. Exact null distribution (ties handled through
/// mid-ranks) for up to 25 non-zero differences, tie-corrected normal
/// approximation with continuity correction above.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::ShapeMismatch, "paired samples differ in length");
  require(a.size() >= 5, ErrorCode::InvalidArgument, "need at least 5 pairs");
  std::vector<double> mag;
  std::vector<bool> positive;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    require(std::isfinite(d), ErrorCode::NonFiniteData, "non-finite paired sample");
    if (d == 0.0) continue;
    mag.push_back(std::abs(d));
    positive.push_back(d > 0);
  }
  WilcoxonResult res;
  res.n = mag.size();
  if (mag.empty()) return res;
  const auto r2 = detail::doubled_midranks(mag);
  std::int64_t w2 = 0, total2 = 0;
  for (std::size_t i = 0; i < r2.size(); ++i) {
    total2 += r2[i];
    if (positive[i]) w2 += r2[i];
  }
  res.w_plus = static_cast<double>(w2) / 2.0;
  const std::int64_t w2_min = std::min(w2, total2 - w2);

  if (res.n <= 25) {
    res.exact = true;
    // count[s] = number of sign patterns whose doubled positive-rank sum is s
    std::vector<double> count(static_cast<std::size_t>(total2 + 1), 0.0);
    count[0] = 1.0;
    std::int64_t reach = 0;
    for (std::int64_t r : r2) {
      for (std::int64_t s = reach; s >= 0; --s)
        if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
      reach += r;
    }
    double tail = 0.0;
    for (std::int64_t s = 0; s <= w2_min; ++s) tail += count[static_cast<std::size_t>(s)];
    res.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(res.n)));
    return res;
  }

  const double n = static_cast<double>(res.n);
  const double mean = n * (n + 1) / 4.0;
  double tie = 0.0;
  std::vector<std::int64_t> sorted = r2;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie += t * t * t - t;
    i = j;
  }
  const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie / 48.0;
  const double dev = std::max(0.0, std::abs(res.w_plus - mean) - 0.5);
  res.p_value = var > 0 ? std::min(1.0, 2.0 * normal_cdf(-dev / std::sqrt(var))) : 1.0;
  return res;
}

}  // namespace aad::eval
