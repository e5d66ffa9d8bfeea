// aad: command-line front end.
//
//   aad synth | preprocess | decode | stream | fit | eval | sweep [flags]
//
// Every setting lives in one schema below. A setting `section.key` can come
// from its default, from an INI file given with --config (either as
// `[section]` + `key = value` or as a top-level `section.key = value`), or
// from the flag --key-in-kebab-case; later sources win.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print one
// JSON object on stderr.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aad/aad.hpp"

namespace fs = std::filesystem;
using namespace aad;
using nlohmann::json;

namespace {

struct UsageError {
  std::string flag;
  std::string message;
};

// ---------------------------------------------------------------------------
// Settings schema

struct Setting {
  const char* section;
  const char* key;
  const char* value;  // default
  const char* help;
  bool hashed = true;  // paths, output location and worker count do not change results
};

const std::vector<Setting>& schema() {
  static const std::vector<Setting> s = {
      {"run", "seed", "0", "base random seed"},
      {"run", "jobs", "1", "worker threads for sweeps", false},
      {"run", "out", "out", "output directory", false},
      {"io", "eeg", "", "EEG TensorFile (.ten) or CSV", false},
      {"io", "env", "", "envelope TensorFile (.ten) or CSV", false},
      {"io", "audio", "", "audio TensorFile (.ten) or CSV (preprocess)", false},
      {"io", "truth", "", "window labels CSV with a label_true column", false},
      {"io", "scores", "", "decode/stream/fit CSV to evaluate", false},
      {"window", "tau", "10", "decision window length in seconds"},
      {"window", "hop", "", "window hop in seconds (default: tau)"},
      {"lags", "eeg_lags", "17", "EEG lags L_x"},
      {"lags", "envelope_lags", "17", "envelope lags L_s"},
      {"lags", "delay", "13", "EEG delay S in samples"},
      {"lags", "components", "2", "CCA components K"},
      {"preproc", "n_bands", "15", "gammatone-like subbands"},
      {"preproc", "power_exponent", "0.6", "subband power-law exponent"},
      {"preproc", "band_lo", "0.5", "bandpass low edge (Hz)"},
      {"preproc", "band_hi", "32", "bandpass high edge (Hz)"},
      {"preproc", "fs_out", "64", "output sampling rate (Hz)"},
      {"preproc", "filter_order", "4", "Butterworth order per band edge"},
      {"preproc", "envelope_cutoff", "32", "subband envelope smoothing (Hz)"},
      {"preproc", "erb_lo", "150", "lowest subband centre (Hz)"},
      {"preproc", "erb_hi", "4000", "highest subband centre (Hz)"},
      {"unsupervised", "i_max", "10", "maximum iterations"},
      {"unsupervised", "ridge", "1e-6", "relative ridge on R_xx and R_ss"},
      {"unsupervised", "init", "uniform", "initial labels: uniform | random"},
      {"unsupervised", "final_discriminative", "true", "end with one discriminative iteration"},
      {"unsupervised", "soft_labels", "true", "train on sigmoid soft labels (false: GMM hard labels)"},
      {"unsupervised", "convergence_tol", "0.01", "mean |p change| that counts as converged"},
      {"online", "alpha", "0.95", "forgetting factor"},
      {"online", "refit_period", "10", "segments between filter updates"},
      {"online", "cca_mode", "normal", "normal | discriminative"},
      {"supervised", "classifier", "lda", "lda | milda"},
      {"supervised", "folds", "10", "cross-validation folds"},
      {"synth", "channels", "24", "EEG channels"},
      {"synth", "fs", "64", "sampling rate (Hz)"},
      {"synth", "duration", "3600", "seconds"},
      {"synth", "b_ratio", "3", "attention-independent / attention-driven response size"},
      {"synth", "noise_power", "900", "noise power relative to the attended response"},
      {"synth", "noise_spatial", "0.3", "spatial mixing of the noise"},
      {"synth", "block_seconds", "60", "attention block length"},
      {"synth", "attended_fraction", "0.75", "fraction of attended blocks"},
      {"synth", "alpha_attended", "1", "response gain while attending"},
      {"synth", "alpha_unattended", "0", "response gain while not attending"},
      {"synth", "drift", "0", "std of slow within-block gain drift"},
      {"synth", "kernel_taps", "16", "forward-model kernel length"},
      {"synth", "response_delay", "2", "samples before the first kernel tap"},
      {"synth", "target_auc", "", "calibrate noise_power to this supervised AUC"},
      {"synth", "calibration_tol", "0.03", "calibration tolerance"},
      {"sweep", "kind", "window", "window | ablation | imbalance | self_leveraging"},
      {"sweep", "grid", "", "comma-separated axis values (default per kind)"},
      {"sweep", "seeds", "10", "recordings, seeded seed..seed+n-1"},
      {"sweep", "null_permutations", "200", "permutations for the null band"},
  };
  return s;
}

std::string kebab(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string full_key(const Setting& s) { return std::string(s.section) + "." + s.key; }

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

class Config {
 public:
  Config() {
    for (const auto& s : schema()) values_[full_key(s)] = s.value;
  }

  void load_ini(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError{"--config", "cannot read config file " + path.string()};
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = trim(line);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw UsageError{"--config", path.string() + ":" + std::to_string(lineno) + ": bad section header"};
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError{"--config", path.string() + ":" + std::to_string(lineno) + ": expected key = value"};
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      std::replace(key.begin(), key.end(), '-', '_');
      const std::string name = key.find('.') == std::string::npos ? section + "." + key : key;
      if (!values_.count(name))
        throw UsageError{"--config", path.string() + ":" + std::to_string(lineno) + ": unknown key '" + name + "'"};
      values_[name] = value;
    }
  }

  void set(const std::string& name, const std::string& value) { values_.at(name) = value; }
  const std::string& str(const std::string& name) const { return values_.at(name); }
  bool has(const std::string& name) const { return !values_.at(name).empty(); }

  double num(const std::string& name) const {
    const std::string& v = str(name);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw UsageError{flag_of(name), "'" + v + "' is not a number"};
  }

  int integer(const std::string& name) const {
    const double d = num(name);
    if (d != std::floor(d)) throw UsageError{flag_of(name), "'" + str(name) + "' is not an integer"};
    return static_cast<int>(d);
  }

  bool boolean(const std::string& name) const {
    std::string v = str(name);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError{flag_of(name), "'" + str(name) + "' is not a boolean"};
  }

  std::vector<double> list(const std::string& name) const {
    std::vector<double> out;
    std::stringstream ss(str(name));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw UsageError{flag_of(name), "'" + item + "' is not a number"};
      }
    }
    return out;
  }

  static std::string flag_of(const std::string& name) { return "--" + kebab(name.substr(name.find('.') + 1)); }

  // Canonical text of every setting that can change results.
  std::string canonical() const {
    std::string out;
    for (const auto& s : schema())
      if (s.hashed) out += full_key(s) + "=" + values_.at(full_key(s)) + "\n";
    return out;
  }

  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }

  json to_json() const {
    json j;
    for (const auto& s : schema()) j[s.section][s.key] = values_.at(full_key(s));
    return j;
  }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views of the configuration

LagConfig lag_config(const Config& c) {
  LagConfig l;
  l.eeg_lags = c.integer("lags.eeg_lags");
  l.envelope_lags = c.integer("lags.envelope_lags");
  l.delay = c.integer("lags.delay");
  l.components = c.integer("lags.components");
  return l;
}

dsp::PreprocConfig preproc_config(const Config& c) {
  dsp::PreprocConfig p;
  p.n_bands = c.integer("preproc.n_bands");
  p.power_exponent = c.num("preproc.power_exponent");
  p.band_lo = c.num("preproc.band_lo");
  p.band_hi = c.num("preproc.band_hi");
  p.fs_out = c.num("preproc.fs_out");
  p.filter_order = c.integer("preproc.filter_order");
  p.envelope_cutoff = c.num("preproc.envelope_cutoff");
  p.erb_lo = c.num("preproc.erb_lo");
  p.erb_hi = c.num("preproc.erb_hi");
  return p;
}

pipeline::UnsupervisedConfig unsupervised_config(const Config& c) {
  pipeline::UnsupervisedConfig u;
  u.i_max = c.integer("unsupervised.i_max");
  u.components = c.integer("lags.components");
  u.ridge = c.num("unsupervised.ridge");
  const std::string init = c.str("unsupervised.init");
  if (init == "uniform")
    u.init_labels = pipeline::InitLabels::uniform_half;
  else if (init == "random")
    u.init_labels = pipeline::InitLabels::random;
  else
    throw UsageError{"--init", "expected uniform or random, got '" + init + "'"};
  u.final_discriminative = c.boolean("unsupervised.final_discriminative");
  u.soft_labels = c.boolean("unsupervised.soft_labels");
  u.convergence_tol = c.num("unsupervised.convergence_tol");
  u.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  u.gmm.seed = u.seed;
  return u;
}

pipeline::OnlineConfig online_config(const Config& c) {
  pipeline::OnlineConfig o;
  o.alpha = c.num("online.alpha");
  const int u = c.integer("online.refit_period");
  if (u < 1) throw UsageError{"--refit-period", "must be >= 1"};
  o.refit_period = static_cast<std::size_t>(u);
  o.components = c.integer("lags.components");
  o.ridge = c.num("unsupervised.ridge");
  const std::string mode = c.str("online.cca_mode");
  if (mode == "normal")
    o.mode = linalg::CcaMode::normal;
  else if (mode == "discriminative")
    o.mode = linalg::CcaMode::discriminative;
  else
    throw UsageError{"--cca-mode", "expected normal or discriminative, got '" + mode + "'"};
  return o;
}

synth::SynthConfig synth_config(const Config& c) {
  synth::SynthConfig s;
  s.channels = c.integer("synth.channels");
  s.fs = c.num("synth.fs");
  s.duration = c.num("synth.duration");
  s.b_ratio = c.num("synth.b_ratio");
  s.noise_power = c.num("synth.noise_power");
  s.noise_spatial = c.num("synth.noise_spatial");
  s.block_seconds = c.num("synth.block_seconds");
  s.attended_fraction = c.num("synth.attended_fraction");
  s.alpha_attended = c.num("synth.alpha_attended");
  s.alpha_unattended = c.num("synth.alpha_unattended");
  s.drift = c.num("synth.drift");
  s.kernel_taps = c.integer("synth.kernel_taps");
  s.response_delay = c.integer("synth.response_delay");
  s.tau = c.num("window.tau");
  s.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  return s;
}

// ---------------------------------------------------------------------------
// Output helpers

struct Output {
  fs::path dir;
  std::string hash;

  std::string header() const { return std::string("# aad ") + eval::kVersion + "\n# config_hash=" + hash + "\n"; }

  json stamp() const { return {{"aad_version", eval::kVersion}, {"config_hash", hash}}; }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) aad::fail(ErrorCode::IoFailure, "cannot write " + (dir / name).string());
    out << text;
  }

  void write_json(const std::string& name, json j) const {
    j.update(stamp());
    write(name, j.dump(2) + "\n");
  }

  void copy_input(const fs::path& src) const {
    const fs::path dst = dir / "provenance";
    fs::create_directories(dst);
    fs::copy_file(src, dst / src.filename(), fs::copy_options::overwrite_existing);
    const fs::path side = sidecar_path(src);
    if (fs::exists(side)) fs::copy_file(side, dst / side.filename(), fs::copy_options::overwrite_existing);
  }
};

Output open_output(const Config& c, const std::optional<fs::path>& config_file) {
  Output o{c.str("run.out"), c.hash()};
  fs::create_directories(o.dir);
  o.write("run.json", json({{"config", c.to_json()}, {"aad_version", eval::kVersion}, {"config_hash", o.hash}}).dump(2) + "\n");
  if (config_file) o.copy_input(*config_file);
  return o;
}

std::string fmt(double v) { return eval::format_number(v); }

SignalBuffer load_signal(const std::string& path, SignalKind kind) {
  const fs::path p(path);
  if (p.extension() == ".csv") return read_csv_signal(p, kind);
  SignalBuffer b = read_tensor(p);
  return b;
}

void write_signal(const Output& out, const std::string& name, const SignalBuffer& buf) {
  write_tensor(buf, out.dir / name, out.stamp());
}

// Reads a CSV written by this tool (or any CSV with a header row), skipping
// '#' lines. Returns column name -> values.
std::map<std::string, std::vector<std::string>> read_table(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  std::vector<std::string> names;
  std::map<std::string, std::vector<std::string>> cols;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    return cells;
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line);
    if (names.empty()) {
      names = cells;
      continue;
    }
    require(cells.size() == names.size(), ErrorCode::ShapeMismatch, path.string() + ": ragged row");
    for (std::size_t i = 0; i < cells.size(); ++i) cols[names[i]].push_back(cells[i]);
  }
  require(!names.empty(), ErrorCode::TruncatedPayload, path.string() + ": no header row");
  for (const auto& n : names) cols.try_emplace(n);
  return cols;
}

std::vector<bool> bool_column(const std::map<std::string, std::vector<std::string>>& t, const std::string& col,
                              const std::string& origin) {
  const auto it = t.find(col);
  require(it != t.end(), ErrorCode::ShapeMismatch, origin + ": no '" + col + "' column");
  std::vector<bool> out;
  for (const auto& v : it->second) out.push_back(v == "1" || v == "true");
  return out;
}

std::vector<double> num_column(const std::map<std::string, std::vector<std::string>>& t, const std::string& col,
                               const std::string& origin) {
  const auto it = t.find(col);
  require(it != t.end(), ErrorCode::ShapeMismatch, origin + ": no '" + col + "' column");
  std::vector<double> out;
  for (const auto& v : it->second) out.push_back(std::stod(v));
  return out;
}

std::optional<std::vector<bool>> load_truth(const Config& c, std::size_t windows) {
  if (!c.has("io.truth")) return std::nullopt;
  const auto t = read_table(c.str("io.truth"));
  auto truth = bool_column(t, "label_true", c.str("io.truth"));
  require(truth.size() >= windows, ErrorCode::ShapeMismatch,
          c.str("io.truth") + " holds " + std::to_string(truth.size()) + " labels for " + std::to_string(windows) +
              " windows");
  truth.resize(windows);
  return truth;
}

void need(const Config& c, const std::string& name) {
  if (!c.has(name)) throw UsageError{Config::flag_of(name), Config::flag_of(name) + " is required"};
}

SegmentSet load_segments(const Config& c) {
  need(c, "io.eeg");
  need(c, "io.env");
  const SignalBuffer eeg = load_signal(c.str("io.eeg"), SignalKind::eeg);
  const SignalBuffer env = load_signal(c.str("io.env"), SignalKind::envelope);
  std::optional<double> hop;
  if (c.has("window.hop")) hop = c.num("window.hop");
  return segment(eeg, env, lag_config(c), c.num("window.tau"), hop);
}

void copy_inputs(const Config& c, const Output& out, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (c.has(k)) out.copy_input(c.str(k));
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_synth(const Config& c, const Output& out) {
  synth::SynthConfig sc = synth_config(c);
  json extra;
  if (c.has("synth.target_auc")) {
    synth::CalibrationOptions co;
    co.lags = lag_config(c);
    const auto res = synth::calibrate_snr_detailed(sc, c.num("synth.target_auc"), c.num("synth.calibration_tol"), co);
    sc = res.config;
    extra["calibration"] = {{"noise_power", sc.noise_power}, {"supervised_auc", res.auc}, {"evaluations", res.evaluations}};
  }
  const auto ds = synth::generate(sc);
  write_signal(out, "eeg.ten", ds.eeg);
  write_signal(out, "envelope.ten", ds.envelope);
  std::string csv = out.header() + "window,start_s,label_true\n";
  const auto labels = ds.window_labels(sc.tau);
  for (std::size_t n = 0; n < labels.size(); ++n)
    csv += std::to_string(n) + "," + fmt(static_cast<double>(n) * sc.tau) + "," + (labels[n] ? "1" : "0") + "\n";
  out.write("labels.csv", csv);
  extra["noise_power"] = sc.noise_power;
  extra["windows"] = labels.size();
  out.write_json("synth.json", extra);
}

void cmd_preprocess(const Config& c, const Output& out) {
  if (!c.has("io.eeg") && !c.has("io.audio"))
    throw UsageError{"--eeg", "preprocess needs --eeg and/or --audio"};
  const auto pc = preproc_config(c);
  copy_inputs(c, out, {"io.eeg", "io.audio"});
  if (c.has("io.eeg")) write_signal(out, "eeg.ten", dsp::preprocess_eeg(load_signal(c.str("io.eeg"), SignalKind::eeg), pc));
  if (c.has("io.audio"))
    write_signal(out, "envelope.ten", dsp::extract_envelope(load_signal(c.str("io.audio"), SignalKind::audio), pc));
}

void cmd_decode(const Config& c, const Output& out) {
  const SegmentSet seg = load_segments(c);
  const auto cfg = unsupervised_config(c);
  copy_inputs(c, out, {"io.eeg", "io.env", "io.truth"});
  const auto truth = load_truth(c, seg.size());
  const auto r = pipeline::run_batch(seg, cfg);

  std::string csv = out.header() + "window,score,p_soft,label" + (truth ? ",label_true" : "") + "\n";
  for (std::size_t n = 0; n < seg.size(); ++n) {
    csv += std::to_string(n) + "," + fmt(r.scores[n]) + "," + fmt(r.p_soft[n]) + "," + (r.labels[n] ? "1" : "0");
    if (truth) csv += std::string(",") + ((*truth)[n] ? "1" : "0");
    csv += "\n";
  }
  out.write("decode.csv", csv);
  cca::save_model(r.model, out.dir / "model", out.stamp());

  json summary;
  summary["windows"] = seg.size();
  summary["converged"] = r.converged;
  summary["normal_iterations"] = r.normal_iterations;
  for (const auto& it : r.iterations)
    summary["iterations"].push_back({{"index", it.index},
                                     {"mode", std::string(linalg::to_string(it.mode))},
                                     {"mean_abs_change", it.mean_abs_change},
                                     {"eigenvalues", std::vector<double>(it.eigenvalues.data(), it.eigenvalues.data() + it.eigenvalues.size())}});
  summary["gmm"] = {{"mu_pos", r.gmm.mu_pos}, {"mu_neg", r.gmm.mu_neg}, {"sigma", r.gmm.sigma()}, {"q", r.gmm.q}};
  if (truth) summary["auc"] = eval::auc_of(r.scores, *truth);
  out.write_json("decode.json", summary);
}

void cmd_stream(const Config& c, const Output& out) {
  const SegmentSet seg = load_segments(c);
  const auto oc = online_config(c);
  copy_inputs(c, out, {"io.eeg", "io.env", "io.truth"});
  const auto truth = load_truth(c, seg.size());
  auto st = pipeline::OnlineState::create(oc, seg.eeg_rows(), seg.lags());
  const auto res = pipeline::run_online(seg, st);
  std::string csv = out.header() + "window,score,p,label,provisional" + (truth ? ",label_true" : "") + "\n";
  for (std::size_t n = 0; n < res.size(); ++n) {
    csv += std::to_string(n) + "," + fmt(res[n].score) + "," + fmt(res[n].p) + "," + (res[n].label ? "1" : "0") + "," +
           (res[n].provisional ? "1" : "0");
    if (truth) csv += std::string(",") + ((*truth)[n] ? "1" : "0");
    csv += "\n";
  }
  out.write("stream.csv", csv);
  if (st.model) cca::save_model(*st.model, out.dir / "model", out.stamp());
}

void cmd_fit(const Config& c, const Output& out) {
  need(c, "io.truth");
  const SegmentSet seg = load_segments(c);
  const auto truth = *load_truth(c, seg.size());
  const std::string kind = c.str("supervised.classifier");
  pipeline::Classifier clf;
  if (kind == "lda")
    clf = pipeline::Classifier::lda;
  else if (kind == "milda")
    clf = pipeline::Classifier::milda;
  else
    throw UsageError{"--classifier", "expected lda or milda, got '" + kind + "'"};
  copy_inputs(c, out, {"io.eeg", "io.env", "io.truth"});
  cca::FitOptions fo;
  fo.ridge = c.num("unsupervised.ridge");
  const auto cv = pipeline::supervised_cv(seg, truth, c.integer("supervised.folds"), clf, linalg::CcaMode::normal, fo,
                                          c.integer("lags.components"));
  std::string csv = out.header() + "window,fold,score,label,label_true\n";
  for (std::size_t n = 0; n < seg.size(); ++n)
    csv += std::to_string(n) + "," + std::to_string(cv.fold[n]) + "," + fmt(cv.scores[n]) + "," +
           (cv.scores[n] > 0 ? "1" : "0") + "," + (truth[n] ? "1" : "0") + "\n";
  out.write("fit.csv", csv);
  out.write_json("fit.json", {{"classifier", kind}, {"auc", eval::auc_of(cv.scores, truth)}});
}

void cmd_eval(const Config& c, const Output& out) {
  need(c, "io.scores");
  const std::string path = c.str("io.scores");
  copy_inputs(c, out, {"io.scores", "io.truth"});
  const auto t = read_table(path);
  const auto scores = num_column(t, "score", path);
  const auto predicted = bool_column(t, "label", path);
  std::vector<bool> truth;
  if (c.has("io.truth"))
    truth = *load_truth(c, scores.size());
  else
    truth = bool_column(t, "label_true", path);
  const auto m = eval::metrics(scores, predicted, truth);
  json j = {{"windows", scores.size()}, {"accuracy", m.accuracy}, {"precision", m.precision},
            {"recall", m.recall},       {"f1", m.f1}};
  if (m.roc) j["auc"] = m.auc();
  out.write_json("eval.json", j);
  std::string csv = out.header() + "metric,value\n";
  csv += "accuracy," + fmt(m.accuracy) + "\nprecision," + fmt(m.precision) + "\nrecall," + fmt(m.recall) + "\nf1," +
         fmt(m.f1) + "\n";
  if (m.roc) csv += "auc," + fmt(m.auc()) + "\n";
  out.write("eval.csv", csv);
}

void cmd_sweep(const Config& c, const Output& out) {
  const std::string kind = c.str("sweep.kind");
  const int n = c.integer("sweep.seeds");
  if (n < 1) throw UsageError{"--seeds", "must be >= 1"};
  std::vector<double> grid = c.list("sweep.grid");
  if (grid.empty()) {
    if (kind == "window") grid = {1, 2, 5, 10, 20, 30};
    else if (kind == "imbalance") grid = {0, 0.3, 0.6, 0.9};
    else if (kind == "self_leveraging") grid = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  }
  if (kind != "window" && kind != "ablation" && kind != "imbalance" && kind != "self_leveraging")
    throw UsageError{"--kind", "unknown sweep kind '" + kind + "'"};

  eval::SweepOptions o;
  o.lags = lag_config(c);
  o.tau = c.num("window.tau");
  o.unsupervised = unsupervised_config(c);
  o.folds = c.integer("supervised.folds");
  o.jobs = c.integer("run.jobs");
  o.null_permutations = c.integer("sweep.null_permutations");
  o.seed = static_cast<std::uint64_t>(c.integer("run.seed"));

  const auto base = synth_config(c);
  std::vector<eval::Recording> recs(static_cast<std::size_t>(n));
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n; ++i) seeds.push_back(base.seed + static_cast<std::uint64_t>(i));
  eval::parallel_for(recs.size(), o.jobs, [&](std::size_t i) {
    auto sc = base;
    sc.seed = seeds[i];
    recs[i] = eval::to_recording(synth::generate(sc));
  });

  eval::SweepReport rep;
  if (kind == "window")
    rep = eval::sweep_window(recs, grid, o);
  else if (kind == "ablation")
    rep = eval::sweep_ablation(recs, o);
  else if (kind == "imbalance")
    rep = eval::sweep_imbalance(recs, grid, o);
  else
    rep = eval::sweep_self_leveraging(recs, grid, o);
  rep.seeds = seeds;
  rep.config_hash = out.hash;
  out.write("sweep_" + kind + ".csv", eval::to_csv(rep));
  out.write("sweep_" + kind + ".json", eval::to_json(rep).dump(2) + "\n");
}

void print_error(const std::string& code, const std::string& message, const std::string& flag = "") {
  json j = {{"error", code}, {"message", message}};
  if (!flag.empty()) j["flag"] = flag;
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised auditory attention decoding"};
  app.require_subcommand(1);
  app.set_version_flag("--version", eval::kVersion);

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const Config&, const Output&);
    std::vector<std::string> required;
  };
  const std::vector<Command> commands = {
      {"synth", "generate a synthetic recording", cmd_synth, {}},
      {"preprocess", "bandpass/resample EEG and extract the speech envelope", cmd_preprocess, {}},
      {"decode", "unsupervised batch decoding", cmd_decode, {"io.eeg", "io.env"}},
      {"stream", "online recursive decoding", cmd_stream, {"io.eeg", "io.env"}},
      {"fit", "supervised cross-validated baseline", cmd_fit, {"io.eeg", "io.env", "io.truth"}},
      {"eval", "metrics for a scores CSV", cmd_eval, {"io.scores"}},
      {"sweep", "run a parameter sweep on synthetic recordings", cmd_sweep, {}},
  };

  std::map<std::string, std::string> given;  // section.key -> flag value
  std::string config_path;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "INI file of section.key settings");
    for (const auto& s : schema()) {
      const std::string name = full_key(s);
      sub->add_option_function<std::string>(
             "--" + kebab(s.key), [&given, name](const std::string& v) { given[name] = v; },
             std::string(s.help) + (std::string(s.value).empty() ? "" : " [" + std::string(s.value) + "]"))
          ->group(s.section);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 2;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const auto cmd = std::find_if(commands.begin(), commands.end(),
                                [&](const Command& c) { return chosen->get_name() == c.name; });
  try {
    Config cfg;
    std::optional<fs::path> config_file;
    if (!config_path.empty()) {
      cfg.load_ini(config_path);
      config_file = config_path;
    }
    for (const auto& [k, v] : given) cfg.set(k, v);
    for (const auto& k : cmd->required) need(cfg, k);
    const Output out = open_output(cfg, config_file);
    cmd->run(cfg, out);
  } catch (const UsageError& e) {
    print_error("UsageError", e.message, e.flag);
    return 2;
  } catch (const aad::Error& e) {
    print_error(std::string(to_string(e.code())), e.detail());
    return 1;
  } catch (const std::exception& e) {
    print_error("IoFailure", e.what());
    return 1;
  }
  return 0;
}
