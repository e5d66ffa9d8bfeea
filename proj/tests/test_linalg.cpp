#include "common.hpp"
#include "oracles.hpp"

using namespace aad;
using aad::linalg::CcaMode;
using namespace aad::linalg;

TEST(Gevd, DiagonalIdentity) {
  Eigen::MatrixXd A(2, 2);
  A << 1, 0, 0, 3;
  const auto r = gevd_topk(A, Eigen::MatrixXd::Identity(2, 2), 2);
  EXPECT_NEAR(r.eigenvalues(0), 3, 1e-12);
  EXPECT_NEAR(r.eigenvalues(1), 1, 1e-12);
  EXPECT_NEAR(std::abs(r.vectors(1, 0)), 1, 1e-12);
  EXPECT_NEAR(std::abs(r.vectors(0, 1)), 1, 1e-12);
}

TEST(Gevd, EqualMatricesGiveUnitEigenvalues) {
  Eigen::MatrixXd A(2, 2);
  A << 2, 0, 0, 1;
  const auto r = gevd_topk(A, A, 2);
  EXPECT_NEAR(r.eigenvalues(0), 1, 1e-12);
  EXPECT_NEAR(r.eigenvalues(1), 1, 1e-12);
  const Eigen::MatrixXd G = r.vectors.transpose() * A * r.vectors;
  EXPECT_LT((G - Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-12);
}

TEST(Gevd, ResidualAndOrthonormality) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd A = testutil::random_symmetric(rng, 20);
    const Eigen::MatrixXd B = testutil::random_spd(rng, 20);
    const auto r = gevd_topk(A, B, 20);
    for (Eigen::Index k = 0; k < 20; ++k) {
      const Eigen::VectorXd v = r.vectors.col(k);
      const double lam = r.eigenvalues(k);
      EXPECT_LE((A * v - lam * B * v).norm(), 1e-8 * (A.norm() + std::abs(lam) * B.norm()));
      if (k > 0) {
        EXPECT_GE(r.eigenvalues(k - 1), lam);
      }
    }
    const Eigen::MatrixXd G = r.vectors.transpose() * B * r.vectors;
    EXPECT_LT((G - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

// Eigenvalues of A v = lambda B v equal those of the symmetric matrix
// B^-1/2 A B^-1/2, computed here by Jacobi rotations.
TEST(Gevd, EigenvaluesMatchJacobiOracle) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd A = testutil::random_symmetric(rng, 12);
    const Eigen::MatrixXd B = testutil::random_spd(rng, 12);
    const auto [bv, bV] = oracle::jacobi_eigen(B);
    const Eigen::MatrixXd Bmh = bV * bv.cwiseSqrt().cwiseInverse().asDiagonal() * bV.transpose();
    const auto [vals, vecs] = oracle::jacobi_eigen(Bmh * A * Bmh);
    const auto r = gevd_topk(A, B, 4);
    for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(r.eigenvalues(k), vals(k), 1e-9 * vals.cwiseAbs().maxCoeff());
  }
}

TEST(Gevd, AsymmetricInputIsSymmetrized) {
  std::mt19937_64 rng(23);
  const Eigen::MatrixXd A = testutil::random_symmetric(rng, 6);
  Eigen::MatrixXd skewed = A;
  skewed(0, 1) += 0.5;
  skewed(1, 0) -= 0.5;
  const Eigen::MatrixXd B = testutil::random_spd(rng, 6);
  EXPECT_LT((gevd_topk(skewed, B, 3).eigenvalues - gevd_topk(A, B, 3).eigenvalues).norm(), 1e-10);
}

TEST(Gevd, IndefiniteBRejected) {
  Eigen::MatrixXd B(2, 2);
  B << 1, 0, 0, -1;
  EXPECT_AAD_ERROR(gevd_topk(Eigen::MatrixXd::Identity(2, 2), B, 1), ErrorCode::NotPositiveDefinite);
}

namespace {

struct Windows {
  std::vector<Eigen::MatrixXd> X, S;
};

Windows random_windows(std::mt19937_64& rng, int n, Eigen::Index rows = 6, Eigen::Index lags = 3) {
  Windows w;
  for (int i = 0; i < n; ++i) {
    w.X.push_back(testutil::randn(rng, rows, 50));
    w.S.push_back(testutil::randn(rng, lags, 50));
  }
  return w;
}

}  // namespace

TEST(Accumulator, FullWeightLeavesNegativeSum) {
  std::mt19937_64 rng(31);
  auto w = random_windows(rng, 1);
  auto acc = CovarianceAccumulator::zeros(6, 3);
  accumulate(acc, w.X[0], w.S[0], 1.0);
  EXPECT_TRUE(acc.sum_xs_neg.isZero());
}

TEST(Accumulator, HalfWeightSplitsEvenly) {
  std::mt19937_64 rng(32);
  auto w = random_windows(rng, 1);
  auto acc = CovarianceAccumulator::zeros(6, 3);
  accumulate(acc, w.X[0], w.S[0], 0.5);
  const Eigen::MatrixXd half = 0.5 * w.X[0] * w.S[0].transpose();
  EXPECT_LT((acc.sum_xs_pos - half).norm(), 1e-12);
  EXPECT_LT((acc.sum_xs_neg - half).norm(), 1e-12);
}

TEST(Accumulator, OrderIndependentAndMergeable) {
  std::mt19937_64 rng(33);
  auto w = random_windows(rng, 10);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(10);
  for (auto& v : p) v = u(rng);
  auto whole = CovarianceAccumulator::zeros(6, 3), rev = whole, left = whole, right = whole;
  for (int i = 0; i < 10; ++i) accumulate(whole, w.X[i], w.S[i], p[i]);
  for (int i = 9; i >= 0; --i) accumulate(rev, w.X[i], w.S[i], p[i]);
  for (int i = 0; i < 10; ++i) accumulate(i < 4 ? left : right, w.X[i], w.S[i], p[i]);
  merge(left, right);
  for (const auto* other : {&rev, &left}) {
    EXPECT_LT((other->sum_xx - whole.sum_xx).norm(), 1e-10 * whole.sum_xx.norm());
    EXPECT_LT((other->sum_xs_pos - whole.sum_xs_pos).norm(), 1e-10 * whole.sum_xs_pos.norm());
    EXPECT_LT((other->sum_xs_neg - whole.sum_xs_neg).norm(), 1e-10 * whole.sum_xs_neg.norm());
    EXPECT_NEAR(other->weight_pos, whole.weight_pos, 1e-12);
  }
}

TEST(Finalize, AllPositiveModesAgree) {
  std::mt19937_64 rng(34);
  auto w = random_windows(rng, 5);
  auto acc = CovarianceAccumulator::zeros(6, 3);
  for (int i = 0; i < 5; ++i) accumulate(acc, w.X[i], w.S[i], 1.0);
  acc.weight_neg = 1e-300;  // discriminative mode needs some unattended mass
  const auto n = finalize(acc, CcaMode::normal, 0);
  const auto d = finalize(acc, CcaMode::discriminative, 0);
  EXPECT_LT((n.Rxs - d.Rxs).norm(), 1e-12 * n.Rxs.norm());
}

TEST(Finalize, UniformLabelsAverageTheClassCrossCovariances) {
  std::mt19937_64 rng(35);
  auto w = random_windows(rng, 40);
  std::uniform_real_distribution<double> u(0, 1);
  auto acc = CovarianceAccumulator::zeros(6, 3);
  Eigen::MatrixXd pos = Eigen::MatrixXd::Zero(6, 3), neg = pos;
  for (int i = 0; i < 40; ++i) {
    accumulate(acc, w.X[i], w.S[i], 0.5);
    (i % 2 ? pos : neg) += w.X[i] * w.S[i].transpose();
  }
  const auto cov = finalize(acc, CcaMode::normal, 0);
  EXPECT_LT((cov.Rxs - 0.5 * (pos / 20 + neg / 20)).norm(), 1e-10 * cov.Rxs.norm());
}

TEST(Finalize, RidgeShiftsSpectrum) {
  std::mt19937_64 rng(36);
  auto w = random_windows(rng, 3);
  auto acc = CovarianceAccumulator::zeros(6, 3);
  for (int i = 0; i < 3; ++i) accumulate(acc, w.X[i], w.S[i], 1.0);
  const auto a = finalize(acc, CcaMode::normal, 0);
  const auto b = finalize(acc, CcaMode::normal, 0.01);
  const double shift = 0.01 * a.Rxx.diagonal().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a.Rxx), eb(b.Rxx);
  EXPECT_LT((eb.eigenvalues() - ea.eigenvalues() - Eigen::VectorXd::Constant(6, shift)).norm(), 1e-10);
  EXPECT_GE(eb.eigenvalues().minCoeff(), shift - 1e-12);
}

TEST(Finalize, Errors) {
  auto acc = CovarianceAccumulator::zeros(2, 2);
  EXPECT_AAD_ERROR(finalize(acc, CcaMode::normal, 0), ErrorCode::NoPositiveMass);
  EXPECT_AAD_ERROR(finalize(acc, CcaMode::normal, -1), ErrorCode::InvalidArgument);
  accumulate(acc, Eigen::MatrixXd::Ones(2, 3), Eigen::MatrixXd::Ones(2, 3), 1.0);
  EXPECT_AAD_ERROR(finalize(acc, CcaMode::discriminative, 0), ErrorCode::NoPositiveMass);
}

TEST(Decay, ZeroAlphaKeepsOnlyNewest) {
  std::mt19937_64 rng(37);
  auto w = random_windows(rng, 2);
  auto acc = CovarianceAccumulator::zeros(6, 3), only = acc;
  accumulate(acc, w.X[0], w.S[0], 0.3);
  decay(acc, 0.0);
  accumulate(acc, w.X[1], w.S[1], 0.7);
  accumulate(only, w.X[1], w.S[1], 0.7);
  EXPECT_EQ(acc.sum_xx, only.sum_xx);
  EXPECT_EQ(acc.sum_xs_pos, only.sum_xs_pos);
  EXPECT_EQ(acc.n_segments, 1.0);
}
