#include "common.hpp"
#include "oracles.hpp"

using namespace aad;
using namespace aad::eval;

TEST(Auc, SmallCases) {
  EXPECT_EQ(auc_fast(std::vector<double>{1, 2, 3}, {false, false, true}), 1.0);
  EXPECT_EQ(auc_fast(std::vector<double>{1, 1}, {false, true}), 0.5);
  EXPECT_EQ(auc_fast(std::vector<double>{3, 2, 1}, {false, false, true}), 0.0);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 9), size(2, 60);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<bool> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = level(rng) * 0.25;
      y[static_cast<std::size_t>(i)] = coin(rng);
    }
    y[0] = true;
    y[1] = false;
    EXPECT_EQ(auc_fast(s, y), oracle::pairwise_auc(s, y));
  }
}

TEST(Auc, NullDistribution) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<double> s(10000);
  std::vector<bool> y(10000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = g(rng);
    y[i] = i % 2;
  }
  const double a = auc_fast(s, y);
  EXPECT_GT(a, 0.47);
  EXPECT_LT(a, 0.53);
}

TEST(Auc, RankInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<double> s(200), t(200);
  std::vector<bool> y(200);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = g(rng);
    t[i] = std::exp(3 * s[i]) + 1;
    y[i] = s[i] + g(rng) > 0;
  }
  EXPECT_EQ(auc_fast(s, y), auc_fast(t, y));
}

TEST(Auc, SingleClassTruth) {
  EXPECT_AAD_ERROR(auc_fast(std::vector<double>{1, 2}, {true, true}), ErrorCode::SingleClassTruth);
}

TEST(Roc, TrapezoidEqualsRankAuc) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> level(0, 5);
  std::vector<double> s(300);
  std::vector<bool> y(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = level(rng);
    y[i] = (level(rng) + s[i]) > 5;
  }
  const auto roc = roc_curve(s, y);
  EXPECT_NEAR(roc.auc, auc_fast(s, y), 1e-12);
  EXPECT_EQ(roc.tpr.back(), 1.0);
  EXPECT_EQ(roc.fpr.back(), 1.0);
}

TEST(Metrics, PerfectScores) {
  const std::vector<double> s{0, 1, 0, 1};
  const std::vector<bool> y{false, true, false, true};
  const auto m = metrics(s, y, y);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.auc(), 1.0);
}

TEST(Metrics, F1IsHarmonicMean) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.6);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<bool> y(80), p(80);
    std::vector<double> s(80);
    for (std::size_t i = 0; i < 80; ++i) {
      y[i] = coin(rng);
      p[i] = coin(rng);
      s[i] = g(rng);
    }
    y[0] = true;
    y[1] = false;
    const auto m = metrics(s, p, y);
    double tp = 0, fp = 0, fn = 0, wrong = 0;
    for (std::size_t i = 0; i < 80; ++i) {
      tp += p[i] && y[i];
      fp += p[i] && !y[i];
      fn += !p[i] && y[i];
      wrong += p[i] != y[i];
    }
    const double prec = tp / (tp + fp), rec = tp / (tp + fn);
    EXPECT_NEAR(m.f1, 2 * prec * rec / (prec + rec), 1e-12);
    EXPECT_NEAR(m.accuracy + wrong / 80.0, 1.0, 1e-12);
    EXPECT_GE(m.f1, 0.0);
    EXPECT_LE(m.f1, 1.0);
  }
}

TEST(Wilcoxon, ExactMatchesEnumeration) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> level(-6, 6), size(5, 12);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = size(rng);
    std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      a[static_cast<std::size_t>(i)] = level(rng);
      b[static_cast<std::size_t>(i)] = level(rng) * 0.5;
    }
    const auto r = wilcoxon_signed_rank(a, b);
    EXPECT_NEAR(r.p_value, oracle::wilcoxon_enumerated(a, b), 1e-12);
  }
}

TEST(Wilcoxon, TextbookTenPairs) {
  // differences 1..10 with ranks 1,2,5 negative: W- = 8
  std::vector<double> a, b;
  for (int d = 1; d <= 10; ++d) {
    a.push_back((d == 1 || d == 2 || d == 5) ? -d : d);
    b.push_back(0);
  }
  const auto r = wilcoxon_signed_rank(a, b);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.w_plus, 47);
  // 2 * #{subsets of 1..10 with sum <= 8} / 1024 = 2 * 25 / 1024
  EXPECT_NEAR(r.p_value, 50.0 / 1024.0, 1e-12);
}

TEST(Wilcoxon, ZeroDifferencesGiveOne) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const auto r = wilcoxon_signed_rank(a, a);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_EQ(r.n, 0u);
}

TEST(Wilcoxon, Antisymmetric) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int n : {8, 40}) {
    std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      a[static_cast<std::size_t>(i)] = g(rng) + 0.3;
      b[static_cast<std::size_t>(i)] = g(rng);
    }
    EXPECT_NEAR(wilcoxon_signed_rank(a, b).p_value, wilcoxon_signed_rank(b, a).p_value, 1e-15);
  }
}

TEST(Wilcoxon, NormalApproximationCloseToExactAtBoundary) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<double> a(26), b(26, 0.0);
  for (auto& v : a) v = g(rng) + 0.4;
  const auto approx = wilcoxon_signed_rank(a, b);
  EXPECT_FALSE(approx.exact);
  std::vector<double> a25(a.begin(), a.begin() + 25), b25(25, 0.0);
  const auto exact = wilcoxon_signed_rank(a25, b25);
  EXPECT_TRUE(exact.exact);
  EXPECT_GT(approx.p_value, 0.0);
  EXPECT_LT(std::abs(std::log(approx.p_value / exact.p_value)), 1.5);
}

TEST(Wilcoxon, TooFewPairs) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_AAD_ERROR(wilcoxon_signed_rank(a, a), ErrorCode::InvalidArgument);
}
