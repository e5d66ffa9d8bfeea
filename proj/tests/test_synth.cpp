#include <algorithm>
#include <cmath>

#include "common.hpp"

using namespace aad;
using aad::linalg::CcaMode;

TEST(Synth, SameSeedSameData) {
  const auto c = testutil::small_config(21, 120.0);
  const auto a = synth::generate(c);
  const auto b = synth::generate(c);
  EXPECT_EQ(a.eeg.data, b.eeg.data);
  EXPECT_EQ(a.envelope.data, b.envelope.data);
  EXPECT_EQ(a.labels_true, b.labels_true);
  auto c2 = c;
  c2.seed = 22;
  EXPECT_NE(synth::generate(c2).eeg.data, a.eeg.data);
}

TEST(Synth, NoiseLevelDoesNotMoveOtherDraws) {
  auto c = testutil::small_config(23, 120.0);
  const auto a = synth::generate(c);
  c.noise_power = 5.0;
  const auto b = synth::generate(c);
  EXPECT_EQ(a.envelope.data, b.envelope.data);
  EXPECT_EQ(a.A, b.A);
  EXPECT_EQ(a.labels_true, b.labels_true);
}

TEST(Synth, ShapesAndLabels) {
  auto c = testutil::small_config(24, 300.0);
  const auto ds = synth::generate(c);
  EXPECT_EQ(ds.eeg.channels(), 8);
  EXPECT_EQ(ds.eeg.samples(), 300 * 64);
  EXPECT_EQ(ds.envelope.channels(), 1);
  EXPECT_EQ(ds.labels_true.size(), 30u);
  const auto attended = std::count(ds.labels_true.begin(), ds.labels_true.end(), true);
  EXPECT_GT(attended, 0);
  EXPECT_LT(attended, 30);
  EXPECT_NEAR(ds.envelope.data.row(0).mean(), 0.0, 0.05);
}

// Noise-free, always attended, no attention-independent response: the EEG is
// a filtered copy of the envelope and the top canonical correlation is ~1.
TEST(Synth, NoiselessAttendedDataIsAlmostPerfectlyCorrelated) {
  auto c = testutil::small_config(25, 300.0);
  c.noise_power = 0.0;
  c.b_ratio = 0.0;
  c.attention_profile = {{0.0, 300.0, 1.0}};
  const auto ds = synth::generate(c);
  const auto seg = ds.segments(LagConfig{}, 10.0);
  const auto model = cca::fit(seg, LabelVector::constant(seg.size(), 1.0), CcaMode::normal);
  const auto f = cca::features(model, seg);
  EXPECT_GE(f.rho.col(0).mean(), 0.99);
}

// Filters come from a label-free fit so the comparison does not see the truth.
TEST(Synth, AttendedWindowsCorrelateMoreStrongly) {
  std::vector<double> gap;
  for (int s = 0; s < 10; ++s) {
    const auto ds = synth::generate(testutil::small_config(260 + s, 1200.0));
    const auto seg = ds.segments(LagConfig{}, 10.0);
    const auto model = cca::fit(seg, LabelVector::constant(seg.size(), 0.5), CcaMode::normal);
    const auto f = cca::features(model, seg);
    double att = 0, un = 0;
    int na = 0, nu = 0;
    for (std::size_t n = 0; n < seg.size(); ++n) {
      (ds.labels_true[n] ? att : un) += f.rho(static_cast<Eigen::Index>(n), 0);
      ++(ds.labels_true[n] ? na : nu);
    }
    gap.push_back(att / na - un / nu);
  }
  std::sort(gap.begin(), gap.end());
  EXPECT_GT(0.5 * (gap[4] + gap[5]), 0.0);
}

// With alpha equal in both span types the labels carry no information, so the
// unsupervised decoder scores at chance. The bound is three standard errors
// of the mean of ten Mann-Whitney AUCs under the null.
TEST(Synth, NoAttentionContrastGivesChance) {
  double sum = 0, var_sum = 0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    auto c = testutil::small_config(300 + s, 1200.0);
    const auto truth = synth::generate(c).labels_true;
    c.alpha_unattended = c.alpha_attended;
    const auto flat = synth::generate(c);
    const auto seg = flat.segments(LagConfig{}, 10.0);
    const auto r = pipeline::run_batch(seg, pipeline::UnsupervisedConfig{});
    sum += eval::auc_of(r.scores, truth);
    const double n1 = static_cast<double>(std::count(truth.begin(), truth.end(), true));
    const double n0 = static_cast<double>(truth.size()) - n1;
    var_sum += (n1 + n0 + 1) / (12 * n1 * n0);
  }
  const double se = std::sqrt(var_sum) / seeds;
  EXPECT_NEAR(sum / seeds, 0.5, 3 * se);
}

TEST(Synth, NoiseCovarianceMatchesModel) {
  auto c = testutil::small_config(34, 1800.0);
  c.channels = 4;
  c.noise_power = 2.0;
  c.A = Eigen::MatrixXd::Zero(4, c.kernel_taps);
  c.B = Eigen::MatrixXd::Zero(4, c.kernel_taps);
  const auto ds = synth::generate(c);
  LagConfig lags;
  lags.eeg_lags = 5;
  const auto seg = ds.segments(lags, 10.0);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(seg.eeg_rows(), seg.eeg_rows());
  for (std::size_t n = 0; n < seg.size(); ++n) {
    const Eigen::MatrixXd X = seg.eeg_window(n);
    R += X * X.transpose();
  }
  R /= static_cast<double>(seg.size() * seg.window_samples());
  const Eigen::MatrixXd expected = synth::analytic_noise_covariance(c, ds.noise_mixing, lags);
  EXPECT_LT((R - expected).norm() / expected.norm(), 0.05);
}

TEST(Synth, DriftStaysInRange) {
  auto c = testutil::small_config(27, 600.0);
  c.drift = 0.5;
  const auto ds = synth::generate(c);
  EXPECT_GE(ds.alpha_trace.minCoeff(), 0.0);
  EXPECT_LE(ds.alpha_trace.maxCoeff(), 1.0);
  EXPECT_GT(ds.alpha_trace.maxCoeff() - ds.alpha_trace.minCoeff(), 0.5);
}

TEST(Synth, InvalidProfiles) {
  auto c = testutil::small_config(28, 100.0);
  c.attention_profile = {{0.0, 40.0, 1.0}, {50.0, 100.0, 0.0}};
  EXPECT_AAD_ERROR(synth::generate(c), ErrorCode::InvalidProfile);
  c.attention_profile = {{0.0, 60.0, 1.0}, {50.0, 100.0, 0.0}};
  EXPECT_AAD_ERROR(synth::generate(c), ErrorCode::InvalidProfile);
  c.attention_profile = {{0.0, 100.0, 1.5}};
  EXPECT_AAD_ERROR(synth::generate(c), ErrorCode::InvalidProfile);
  c.attention_profile = {{0.0, 90.0, 1.0}};
  EXPECT_AAD_ERROR(synth::generate(c), ErrorCode::InvalidProfile);
  c.attention_profile = {{0.0, 0.0, 1.0}, {0.0, 100.0, 1.0}};
  EXPECT_AAD_ERROR(synth::generate(c), ErrorCode::InvalidProfile);
}

TEST(Synth, InvalidArguments) {
  auto c = testutil::small_config(29, 100.0);
  c.noise_power = -1.0;
  EXPECT_AAD_ERROR(synth::generate(c), ErrorCode::InvalidArgument);
  c = testutil::small_config(29, 0.0);
  EXPECT_AAD_ERROR(synth::generate(c), ErrorCode::InvalidArgument);
}

TEST(Calibration, HitsTargetBand) {
  auto c = testutil::small_config(30, 1200.0);
  const auto res = synth::calibrate_snr_detailed(c, 0.67, 0.03);
  EXPECT_GE(res.auc, 0.64);
  EXPECT_LE(res.auc, 0.70);
  EXPECT_DOUBLE_EQ(synth::supervised_auc(res.config), res.auc);
}

TEST(Calibration, WideToleranceReturnsInput) {
  auto c = testutil::small_config(31, 600.0);
  const auto res = synth::calibrate_snr_detailed(c, 0.67, 0.5);
  EXPECT_EQ(res.evaluations, 1);
  EXPECT_DOUBLE_EQ(res.config.noise_power, c.noise_power);
}

TEST(Calibration, ShortRecordingCannotReachNearPerfectAuc) {
  auto c = testutil::small_config(32, 120.0);
  EXPECT_AAD_ERROR(synth::calibrate_snr(c, 0.999, 0.0005), ErrorCode::Unreachable);
}

TEST(Calibration, RejectsBadTargets) {
  const auto c = testutil::small_config(33, 120.0);
  EXPECT_AAD_ERROR(synth::calibrate_snr(c, 0.4, 0.01), ErrorCode::InvalidArgument);
  EXPECT_AAD_ERROR(synth::calibrate_snr(c, 0.7, 0.0), ErrorCode::InvalidArgument);
}
