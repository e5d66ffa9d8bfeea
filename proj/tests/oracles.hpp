#pragma once

// Slow reference implementations used as independent oracles.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Cyclic Jacobi rotations on a symmetric matrix. Returns eigenvalues in
// descending order with matching eigenvector columns.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> jacobi_eigen(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  Eigen::VectorXd vals(n);
  Eigen::MatrixXd vecs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vals(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    vecs.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return {vals, vecs};
}

// Top canonical correlation of (Rxx, Rss, Rxs) by alternating power
// iteration: d <- Rxx^-1 Rxs e, e <- Rss^-1 Rxs' d, each renormalized.
inline double alternating_top_correlation(const Eigen::MatrixXd& Rxx, const Eigen::MatrixXd& Rss,
                                          const Eigen::MatrixXd& Rxs, int iterations = 5000) {
  const Eigen::LDLT<Eigen::MatrixXd> xx(Rxx), ss(Rss);
  Eigen::VectorXd e = Eigen::VectorXd::Ones(Rss.rows());
  e /= std::sqrt(e.dot(Rss * e));
  Eigen::VectorXd d;
  double rho = 0.0;
  for (int it = 0; it < iterations; ++it) {
    d = xx.solve(Rxs * e);
    d /= std::sqrt(d.dot(Rxx * d));
    e = ss.solve(Rxs.transpose() * d);
    e /= std::sqrt(e.dot(Rss * e));
    const double next = d.dot(Rxs * e);
    if (std::abs(next - rho) < 1e-14 * std::abs(next)) {
      rho = next;
      break;
    }
    rho = next;
  }
  return rho;
}

// O(N^2) Mann-Whitney count with ties as one half.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

// Two-sided Wilcoxon signed-rank p by enumerating all 2^n sign patterns of
// the mid-ranked absolute differences (zeros dropped).
inline double wilcoxon_enumerated(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  const std::size_t n = d.size();
  if (n == 0) return 1.0;
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      less += std::abs(d[j]) < std::abs(d[i]);
      equal += std::abs(d[j]) == std::abs(d[i]);
    }
    rank[i] = less + (equal + 1) / 2.0;
  }
  double total = 0, w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (d[i] > 0) w += rank[i];
  }
  const double observed = std::min(w, total - w);
  double extreme = 0;
  const std::size_t patterns = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < patterns; ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) s += rank[i];
    if (std::min(s, total - s) <= observed + 1e-9) extreme += 1;
  }
  return std::min(1.0, extreme / static_cast<double>(patterns));
}

// Naive DFT magnitude at bin k.
inline double dft_magnitude(const Eigen::RowVectorXd& x, Eigen::Index k) {
  std::complex<double> acc = 0.0;
  const double n = static_cast<double>(x.size());
  for (Eigen::Index t = 0; t < x.size(); ++t)
    acc += x(t) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / n);
  return std::abs(acc);
}

}  // namespace oracle
