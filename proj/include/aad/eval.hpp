#pragma once

// Experiment sweeps over seeds: self-leveraging, ablation, window length and
// class imbalance, reported as per-axis mean/std tables.

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aad/metrics.hpp"
#include "aad/pipeline.hpp"
#include "aad/synth.hpp"

namespace aad::eval {

inline constexpr const char* kVersion = "0.1.0";

/// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Recordings with per-sample attention ground truth

struct Recording {
  SignalBuffer eeg;
  SignalBuffer envelope;
  std::vector<bool> attended;  // per sample

  std::vector<bool> window_labels(double tau) const {
    const auto width = static_cast<std::size_t>(std::llround(tau * eeg.fs));
    std::vector<bool> out;
    for (std::size_t t0 = 0; width > 0 && t0 + width <= attended.size(); t0 += width) {
      std::size_t att = 0;
      for (std::size_t t = t0; t < t0 + width; ++t) att += attended[t];
      out.push_back(2 * att > width);
    }
    return out;
  }

  SegmentSet segments(const LagConfig& lags, double tau) const {
    return segment(eeg, envelope, lags, tau).with_labels(window_labels(tau));
  }
};

inline Recording to_recording(const synth::SynthDataset& ds) {
  Recording r{ds.eeg, ds.envelope, {}};
  r.attended.resize(static_cast<std::size_t>(ds.alpha_trace.size()));
  for (Eigen::Index t = 0; t < ds.alpha_trace.size(); ++t)
    r.attended[static_cast<std::size_t>(t)] = ds.alpha_trace(t) > ds.alpha_threshold;
  return r;
}

// ---------------------------------------------------------------------------
// Reports

struct SweepReport {
  std::string name;
  std::string axis_name;
  std::vector<double> axis;
  std::vector<std::string> series;
  // values[s][a][r]: series s, axis value a, recording/seed r
  std::vector<std::vector<std::vector<double>>> values;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  std::vector<std::string> notes;

  static SweepReport make(std::string name, std::string axis_name, std::vector<double> axis,
                          std::vector<std::string> series, std::size_t runs) {
    SweepReport r;
    r.name = std::move(name);
    r.axis_name = std::move(axis_name);
    r.axis = std::move(axis);
    r.series = std::move(series);
    r.values.assign(r.series.size(),
                    std::vector<std::vector<double>>(r.axis.size(), std::vector<double>(runs, 0.0)));
    return r;
  }

  std::size_t series_index(const std::string& s) const {
    const auto it = std::find(series.begin(), series.end(), s);
    require(it != series.end(), ErrorCode::InvalidArgument, "no series named '" + s + "'");
    return static_cast<std::size_t>(it - series.begin());
  }

  const std::vector<double>& at(const std::string& s, std::size_t a) const { return values[series_index(s)][a]; }

  double mean(const std::string& s, std::size_t a) const {
    const auto& v = at(s, a);
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  double stddev(const std::string& s, std::size_t a) const {
    const auto& v = at(s, a);
    if (v.size() < 2) return 0.0;
    const double m = mean(s, a);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  double median(const std::string& s, std::size_t a) const {
    std::vector<double> v = at(s, a);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
};

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// One row per axis value: axis, then mean/std per series, then the raw
/// per-run values. Header lines start with '#'.
inline std::string to_csv(const SweepReport& r) {
  std::ostringstream os;
  os << "# aad " << kVersion << "\n";
  os << "# config_hash=" << r.config_hash << "\n";
  os << "# sweep=" << r.name << "\n";
  os << "# seeds=";
  for (std::size_t i = 0; i < r.seeds.size(); ++i) os << (i ? ";" : "") << r.seeds[i];
  os << "\n";
  for (const auto& n : r.notes) os << "# " << n << "\n";
  os << r.axis_name;
  for (const auto& s : r.series) os << "," << s << "_mean," << s << "_std";
  for (const auto& s : r.series)
    for (std::size_t k = 0; k < (r.values.empty() || r.axis.empty() ? 0 : r.values[0][0].size()); ++k)
      os << "," << s << "_run" << k;
  os << "\n";
  for (std::size_t a = 0; a < r.axis.size(); ++a) {
    os << format_number(r.axis[a]);
    for (const auto& s : r.series) os << "," << format_number(r.mean(s, a)) << "," << format_number(r.stddev(s, a));
    for (std::size_t si = 0; si < r.series.size(); ++si)
      for (double v : r.values[si][a]) os << "," << format_number(v);
    os << "\n";
  }
  return os.str();
}

inline nlohmann::json to_json(const SweepReport& r) {
  nlohmann::json j;
  j["sweep"] = r.name;
  j["axis_name"] = r.axis_name;
  j["axis"] = r.axis;
  j["seeds"] = r.seeds;
  j["config_hash"] = r.config_hash;
  j["version"] = kVersion;
  j["notes"] = r.notes;
  for (const auto& s : r.series) {
    nlohmann::json series;
    for (std::size_t a = 0; a < r.axis.size(); ++a)
      series.push_back({{"mean", r.mean(s, a)}, {"std", r.stddev(s, a)}, {"median", r.median(s, a)}, {"values", r.at(s, a)}});
    j["series"][s] = series;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Helpers

inline double auc_of(const std::vector<double>& scores, const std::vector<bool>& truth) { return auc_fast(scores, truth); }
inline double auc_of(const Eigen::VectorXd& scores, const std::vector<bool>& truth) {
  return auc_fast(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), truth);
}

/// Labels that agree with the truth on round(accuracy * N) windows; the
/// disagreeing windows are a uniformly random subset.
inline std::vector<bool> corrupt_labels(const std::vector<bool>& truth, double accuracy, std::uint64_t seed) {
  require(accuracy >= 0.0 && accuracy <= 1.0, ErrorCode::InvalidArgument, "label accuracy must lie in [0,1]");
  std::vector<std::size_t> idx(truth.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto flips = static_cast<std::size_t>(std::llround((1.0 - accuracy) * static_cast<double>(truth.size())));
  std::vector<bool> out = truth;
  for (std::size_t i = 0; i < flips; ++i) out[idx[i]] = !out[idx[i]];
  return out;
}

/// 2.5% and 97.5% quantiles of the AUC of `scores` under random relabelling
/// (label counts preserved).
inline std::pair<double, double> permutation_null_band(const std::vector<double>& scores, const std::vector<bool>& truth,
                                                       int permutations, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<bool> perm = truth;
  std::vector<double> aucs;
  for (int i = 0; i < permutations; ++i) {
    std::shuffle(perm.begin(), perm.end(), rng);
    aucs.push_back(auc_fast(scores, perm));
  }
  std::sort(aucs.begin(), aucs.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(aucs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, aucs.size() - 1);
    return aucs[lo] + (pos - static_cast<double>(lo)) * (aucs[hi] - aucs[lo]);
  };
  return {q(0.025), q(0.975)};
}

inline std::vector<double> as_soft(const std::vector<bool>& labels) {
  std::vector<double> p(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) p[i] = labels[i] ? 1.0 : 0.0;
  return p;
}

struct SweepOptions {
  LagConfig lags;
  double tau = 10.0;
  pipeline::UnsupervisedConfig unsupervised;
  int folds = 10;
  int jobs = 1;
  int null_permutations = 200;
  std::uint64_t seed = 0;  // randomness of label corruption / removal
};

// ---------------------------------------------------------------------------
// Sweeps

/// For each label accuracy p_i: train from labels that are p_i accurate,
/// report AUC after the first iteration and after convergence.
inline SweepReport sweep_self_leveraging(const std::vector<Recording>& recs, const std::vector<double>& p_grid,
                                         const SweepOptions& opts) {
  auto rep = SweepReport::make("self_leveraging", "p_i", p_grid, {"auc_iter1", "auc_final"}, recs.size());
  rep.notes.push_back("labels: a uniformly random (1 - p_i) fraction of true window labels flipped");
  parallel_for(recs.size(), opts.jobs, [&](std::size_t r) {
    const SegmentSet seg = recs[r].segments(opts.lags, opts.tau);
    const auto& truth = *seg.labels_true();
    const auto stats = pipeline::window_stats(seg);
    for (std::size_t a = 0; a < p_grid.size(); ++a) {
      pipeline::UnsupervisedConfig cfg = opts.unsupervised;
      cfg.init_labels = pipeline::InitLabels::provided;
      cfg.provided = as_soft(corrupt_labels(truth, p_grid[a], opts.seed * 7919 + r * 104729 + a));
      const auto res = pipeline::run_batch(seg, stats, cfg);
      rep.values[0][a][r] = auc_of(res.iterations.front().scores, truth);
      rep.values[1][a][r] = auc_of(res.scores, truth);
    }
  });
  return rep;
}

/// Five rungs from supervised CCA+LDA to the full unsupervised algorithm.
inline SweepReport sweep_ablation(const std::vector<Recording>& recs, const SweepOptions& opts) {
  auto rep = SweepReport::make("ablation", "rung", {1, 2, 3, 4, 5}, {"auc"}, recs.size());
  rep.notes.push_back("rungs: 1 supervised CCA+LDA (cv); 2 supervised CCA+MILDA (cv); 3 unsupervised, hard labels; "
                      "4 unsupervised, soft labels; 5 soft labels + discriminative final iteration");
  parallel_for(recs.size(), opts.jobs, [&](std::size_t r) {
    const SegmentSet seg = recs[r].segments(opts.lags, opts.tau);
    const auto& truth = *seg.labels_true();
    const int folds = std::min<int>(opts.folds, static_cast<int>(seg.size()));
    const int K = opts.unsupervised.components;
    cca::FitOptions fo;
    fo.ridge = opts.unsupervised.ridge;
    const auto lda = pipeline::supervised_cv(seg, truth, folds, pipeline::Classifier::lda, linalg::CcaMode::normal, fo, K);
    const auto milda = pipeline::supervised_cv(seg, truth, folds, pipeline::Classifier::milda, linalg::CcaMode::normal, fo, K);
    rep.values[0][0][r] = auc_of(lda.scores, truth);
    rep.values[0][1][r] = auc_of(milda.scores, truth);
    const auto stats = pipeline::window_stats(seg);
    pipeline::UnsupervisedConfig cfg = opts.unsupervised;
    cfg.final_discriminative = false;
    cfg.soft_labels = false;
    rep.values[0][2][r] = auc_of(pipeline::run_batch(seg, stats, cfg).scores, truth);
    cfg.soft_labels = true;
    rep.values[0][3][r] = auc_of(pipeline::run_batch(seg, stats, cfg).scores, truth);
    cfg.final_discriminative = true;
    rep.values[0][4][r] = auc_of(pipeline::run_batch(seg, stats, cfg).scores, truth);
  });
  return rep;
}

/// Re-segments every recording per window length and reruns the
/// unsupervised algorithm; also reports a permutation null band per tau.
inline SweepReport sweep_window(const std::vector<Recording>& recs, const std::vector<double>& tau_grid,
                                const SweepOptions& opts) {
  auto rep = SweepReport::make("window", "tau_s", tau_grid, {"auc", "null_lo", "null_hi"}, recs.size());
  rep.notes.push_back("null band: 2.5/97.5% quantiles of AUC under permuted window labels");
  parallel_for(recs.size(), opts.jobs, [&](std::size_t r) {
    for (std::size_t a = 0; a < tau_grid.size(); ++a) {
      const SegmentSet seg = recs[r].segments(opts.lags, tau_grid[a]);
      const auto& truth = *seg.labels_true();
      const auto res = pipeline::run_batch(seg, opts.unsupervised);
      rep.values[0][a][r] = auc_of(res.scores, truth);
      const auto band = permutation_null_band(res.scores, truth, opts.null_permutations, opts.seed + 31 * r + a);
      rep.values[1][a][r] = band.first;
      rep.values[2][a][r] = band.second;
    }
  });
  return rep;
}

/// Removes a fraction of windows either from the attended class only or
/// proportionally from both, then runs the unsupervised algorithm on what is
/// left and scores it on the same windows.
inline SweepReport sweep_imbalance(const std::vector<Recording>& recs, const std::vector<double>& removal_grid,
                                   const SweepOptions& opts) {
  auto rep = SweepReport::make("imbalance", "removed", removal_grid, {"attended_only", "proportional"}, recs.size());
  parallel_for(recs.size(), opts.jobs, [&](std::size_t r) {
    const SegmentSet seg = recs[r].segments(opts.lags, opts.tau);
    const auto& truth = *seg.labels_true();
    std::vector<std::size_t> att, un;
    for (std::size_t n = 0; n < truth.size(); ++n) (truth[n] ? att : un).push_back(n);
    std::mt19937_64 rng(opts.seed * 1000003 + r);
    std::shuffle(att.begin(), att.end(), rng);
    std::shuffle(un.begin(), un.end(), rng);
    for (std::size_t a = 0; a < removal_grid.size(); ++a) {
      const double f = removal_grid[a];
      require(f >= 0.0 && f < 1.0, ErrorCode::InvalidArgument, "removal fraction must lie in [0,1)");
      const auto drop_att = static_cast<std::size_t>(std::llround(f * static_cast<double>(att.size())));
      const auto drop_un = static_cast<std::size_t>(std::llround(f * static_cast<double>(un.size())));
      for (int arm = 0; arm < 2; ++arm) {
        std::vector<std::size_t> keep(att.begin() + static_cast<std::ptrdiff_t>(drop_att), att.end());
        keep.insert(keep.end(), un.begin() + static_cast<std::ptrdiff_t>(arm == 1 ? drop_un : 0), un.end());
        std::sort(keep.begin(), keep.end());
        const SegmentSet sub = seg.subset(keep);
        const auto res = pipeline::run_batch(sub, opts.unsupervised);
        rep.values[static_cast<std::size_t>(arm)][a][r] = auc_of(res.scores, *sub.labels_true());
      }
    }
  });
  return rep;
}

}  // namespace aad::eval
