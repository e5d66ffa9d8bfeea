#include "common.hpp"

using namespace aad;
using namespace aad::classify;

namespace {

// rho(n) = alpha(n) a + b + isotropic noise, with b = c a so the class means
// are proportional.
struct Features {
  Eigen::MatrixXd rho;
  std::vector<bool> labels;
};

Features proportional_features(std::mt19937_64& rng, int K, int N, double q = 0.7) {
  std::normal_distribution<double> g;
  std::bernoulli_distribution attended(q);
  Eigen::VectorXd a(K);
  for (int k = 0; k < K; ++k) a(k) = 0.1 + std::abs(g(rng)) * 0.1;
  const Eigen::VectorXd b = 0.5 * a;
  Features f;
  f.rho.resize(N, K);
  for (int n = 0; n < N; ++n) {
    const bool att = attended(rng);
    f.labels.push_back(att);
    for (int k = 0; k < K; ++k) f.rho(n, k) = (att ? a(k) : 0.0) + b(k) + 0.05 * g(rng);
  }
  return f;
}

double cosine(const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return x.dot(y) / (x.norm() * y.norm()); }

}  // namespace

TEST(Lda, IsotropicClassesGiveMeanDifference) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Eigen::MatrixXd f(4000, 3);
  std::vector<bool> y;
  const Eigen::RowVectorXd mp(Eigen::RowVector3d(1, 2, 0)), mn(Eigen::RowVector3d(0, 0, 1));
  for (int n = 0; n < 4000; ++n) {
    y.push_back(n % 2 == 0);
    for (int k = 0; k < 3; ++k) f(n, k) = g(rng);
    f.row(n) += y.back() ? mp : mn;
  }
  const auto lda = fit_lda(f, y);
  EXPECT_GT(cosine(lda.w, (mp - mn).transpose()), 0.995);
}

TEST(Lda, ClosedFormTwoByTwo) {
  // equal class covariances diag(1,100), mean difference (1,1) -> w ∝ (1/2, 1/200)
  // each class: (+-1, 0), (0, +-10) around its mean, so both covariances are diag(0.5, 50)
  Eigen::MatrixXd f(8, 2);
  f << 1, 0, -1, 0, 0, 10, 0, -10, 2, 1, 0, 1, 1, 11, 1, -9;
  std::vector<bool> y{false, false, false, false, true, true, true, true};
  auto lda = fit_lda(f, y);
  const Eigen::Vector2d expected(0.5, 0.005);
  EXPECT_GT(cosine(lda.w, expected), 1 - 1e-9);
}

TEST(Lda, FlippedLabelsNegate) {
  std::mt19937_64 rng(2);
  auto f = proportional_features(rng, 3, 300);
  std::vector<bool> flipped;
  for (bool b : f.labels) flipped.push_back(!b);
  const auto a = fit_lda(f.rho, f.labels), b = fit_lda(f.rho, flipped);
  EXPECT_LT((a.w + b.w).norm(), 1e-12 * a.w.norm());
  const auto pa = a.predict(f.rho), pb = b.predict(f.rho);
  for (std::size_t n = 0; n < pa.size(); ++n) EXPECT_NE(pa[n], pb[n]);
}

TEST(Lda, SingleClass) {
  EXPECT_AAD_ERROR(fit_lda(Eigen::MatrixXd::Ones(5, 2), std::vector<bool>(5, true)), ErrorCode::SingleClass);
}

TEST(Milda, MatchesLdaWhenMeansAreProportional) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto f = proportional_features(rng, 2 + static_cast<int>(seed % 3), 2000);
    const auto lda = fit_lda(f.rho, f.labels);
    const auto milda = fit_milda(f.rho);
    EXPECT_GE(std::abs(cosine(milda.w, lda.w)), 0.99) << "seed " << seed;
  }
}

TEST(Milda, RecoversPlantedDirection) {
  const Eigen::Vector3d planted = Eigen::Vector3d(1, 2, -1).normalized();
  const Eigen::Matrix3d cov = Eigen::Matrix3d::Identity() + 4.0 * planted * planted.transpose();
  const auto s = milda_from_moments(Eigen::Vector3d::Zero(), cov);
  EXPECT_LT(std::acos(std::min(1.0, std::abs(s.delta.dot(planted)))), 1e-6);
}

TEST(Milda, IdenticalFeaturesAreDegenerate) {
  EXPECT_AAD_ERROR(fit_milda(Eigen::MatrixXd::Constant(10, 2, 0.3)), ErrorCode::DegenerateCovariance);
}

TEST(Milda, SignFollowsFirstFeature) {
  std::mt19937_64 rng(3);
  const auto f = proportional_features(rng, 2, 1000);
  const auto s = fit_milda(f.rho);
  const Eigen::VectorXd y = s.scores(f.rho);
  double num = 0;
  for (Eigen::Index n = 0; n < y.size(); ++n) num += (y(n) - y.mean()) * (f.rho(n, 0) - f.rho.col(0).mean());
  EXPECT_GT(num, 0);
}

// The plain rule w = cov^-1 mean gives identical scores after any invertible
// linear map of the feature space. The delta-shifted fit is only rotation
// invariant: the leading eigenvector depends on the basis.
TEST(MildaProperty, PlainRuleInvariantUnderLinearMaps) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = proportional_features(rng, 3, 600);
    Eigen::MatrixXd M = testutil::randn(rng, 3, 3);
    while (std::abs(M.determinant()) < 0.2) M = testutil::randn(rng, 3, 3);
    const Eigen::MatrixXd mapped = f.rho * M.transpose();
    const Eigen::VectorXd y0 = f.rho * milda_projection(f.rho);
    const Eigen::VectorXd y1 = mapped * milda_projection(mapped);
    EXPECT_LT((y1 - y0).norm(), 1e-6 * y0.norm());
  }
}

TEST(MildaProperty, FitInvariantUnderRotations) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = proportional_features(rng, 3, 600);
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(testutil::randn(rng, 3, 3)).householderQ();
    const Eigen::MatrixXd rotated = f.rho * Q.transpose();
    const Eigen::VectorXd y0 = fit_milda(f.rho).scores(f.rho);
    const Eigen::VectorXd y1 = fit_milda(rotated).scores(rotated);
    const double a0 = eval::auc_fast(std::vector<double>(y0.data(), y0.data() + y0.size()), f.labels);
    const double a1 = eval::auc_fast(std::vector<double>(y1.data(), y1.data() + y1.size()), f.labels);
    EXPECT_NEAR(std::max(a1, 1 - a1), std::max(a0, 1 - a0), 1e-9);
  }
}

TEST(SoftLabels, KnownValues) {
  Eigen::VectorXd y(2);
  y << -1, 1;
  const auto p = soft_labels(ScoreVector::from(y)).p;
  EXPECT_NEAR(p[1], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(p[0], 1.0 - p[1], 1e-12);
  Eigen::VectorXd z(3);
  z << 0, 2, 4;
  EXPECT_NEAR(soft_labels(ScoreVector::from(z)).p[1], 0.5, 1e-15);
}

TEST(SoftLabels, AffineInvariant) {
  std::mt19937_64 rng(5);
  const Eigen::VectorXd y = testutil::randn(rng, 50, 1);
  const auto a = soft_labels(ScoreVector::from(y)).p;
  const auto b = soft_labels(ScoreVector::from((3.0 * y.array() + 7.0).matrix())).p;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(SoftLabels, ZeroSpread) {
  EXPECT_AAD_ERROR(soft_labels(ScoreVector::from(Eigen::VectorXd::Constant(4, 2.0))), ErrorCode::ZeroSpread);
}

TEST(Gmm, RecoversSeparatedComponents) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  std::vector<double> y;
  std::vector<bool> truth;
  for (int i = 0; i < 500; ++i) {
    y.push_back(g(rng));
    truth.push_back(false);
    y.push_back(6 + g(rng));
    truth.push_back(true);
  }
  const auto s = fit_gmm(y);
  EXPECT_NEAR(s.mu_pos, 6.0, 0.3);
  EXPECT_NEAR(s.mu_neg, 0.0, 0.3);  // 5% of the separation
  EXPECT_NEAR(s.q, 0.5, 0.05);
  const auto lab = gmm_label(s, y);
  int correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += lab[i] == truth[i];
  EXPECT_GE(correct, 990);
}

TEST(Gmm, LogLikelihoodNeverDecreases) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> y;
    const double sep = 4 * u(rng), w = u(rng);
    for (int i = 0; i < 60; ++i) y.push_back((u(rng) < w ? sep : 0.0) + g(rng) * (0.5 + u(rng)));
    GmmOptions opts;
    opts.shared_variance = trial % 2 == 0;
    opts.tolerance = 0;
    const auto s = fit_gmm(y, opts);
    for (std::size_t i = 1; i < s.log_likelihood_trace.size(); ++i)
      EXPECT_GE(s.log_likelihood_trace[i], s.log_likelihood_trace[i - 1] - 1e-9 * std::abs(s.log_likelihood_trace[i - 1]));
  }
}

TEST(Gmm, TightClusterCollapses) {
  EXPECT_AAD_ERROR(fit_gmm(std::vector<double>(20, 1.5)), ErrorCode::Collapse);
}

TEST(GmmLabel, MidpointRule) {
  GmmState s;
  s.mu_neg = 0;
  s.mu_pos = 2;
  s.sigma_pos = s.sigma_neg = 1;
  const std::vector<double> y{1.1, 1.0, 0.9};
  const auto lab = gmm_label(s, y);
  EXPECT_TRUE(lab[0]);
  EXPECT_FALSE(lab[1]);
  EXPECT_FALSE(lab[2]);
}

TEST(GmmLabel, SharedSigmaEqualsLikelihoodRatio) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-5, 5);
  GmmState s;
  s.mu_neg = -0.7;
  s.mu_pos = 1.9;
  s.sigma_pos = s.sigma_neg = 1.3;
  std::vector<double> y(2000);
  for (auto& v : y) v = u(rng);
  const auto lab = gmm_label(s, y);
  for (std::size_t i = 0; i < y.size(); ++i)
    EXPECT_EQ(lab[i], log_normal(y[i], s.mu_pos, s.sigma_pos) > log_normal(y[i], s.mu_neg, s.sigma_neg));
}
