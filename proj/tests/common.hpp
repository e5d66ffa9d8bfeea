#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "aad/aad.hpp"

#define EXPECT_AAD_ERROR(stmt, ecode)                                   \
  do {                                                                  \
    try {                                                               \
      stmt;                                                             \
      ADD_FAILURE() << "expected " << aad::to_string(ecode);            \
    } catch (const aad::Error& e_) {                                    \
      EXPECT_EQ(e_.code(), ecode) << e_.what();                         \
    }                                                                   \
  } while (0)

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("aad_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Eigen::MatrixXd randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n) {
  const Eigen::MatrixXd g = randn(rng, n, n);
  return g * g.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::MatrixXd random_symmetric(std::mt19937_64& rng, Eigen::Index n) {
  const Eigen::MatrixXd g = randn(rng, n, n);
  return 0.5 * (g + g.transpose());
}

// A short, loud synthetic recording for fast pipeline tests. The
// attention-independent response is kept at the size of the attended one;
// at b_ratio 3 and this noise level it swamps the attention contrast.
inline aad::synth::SynthConfig small_config(std::uint64_t seed, double duration = 600.0, double noise = 100.0) {
  aad::synth::SynthConfig c;
  c.channels = 8;
  c.duration = duration;
  c.noise_power = noise;
  c.b_ratio = 1.0;
  c.seed = seed;
  return c;
}

}  // namespace testutil
