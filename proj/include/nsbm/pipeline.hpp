#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nsbm/common.hpp"
#include "nsbm/csv.hpp"
#include "nsbm/evaluation.hpp"
#include "nsbm/gev.hpp"
#include "nsbm/risk.hpp"
#include "nsbm/rng.hpp"
#include "nsbm/scene_graph.hpp"
#include "nsbm/synth.hpp"
#include "nsbm/train.hpp"
#include "nsbm/trajectory.hpp"

namespace nsbm::pipeline {

// Flat key = value configuration shared by every stage. Unknown keys are an
// error so typos fail loudly instead of silently using defaults.
struct PipelineConfig {
  std::uint64_t seed = 0;

  // Extreme-value extraction.
  double q_crash = 1.0;     // retain crash block maxima with MRD < q_crash
  double q_noncrash = 3.0;  // retain non-crash block maxima with MRD < q_noncrash
  double block_w = 0.2;     // block width in seconds
  double t_min = 0.4, t_max = 5.0, t_step = 0.2;  // lead-time sweep

  // Risk metric and calibration.
  int risk_grid_n = 200;
  double mstar_step = 0.05, mstar_max = 2.0;
  int control_ratio = 5;

  // Network training. The epoch budget and patience run longer than the
  // library defaults: crash corpora yield a few hundred events, so validation
  // splits are tiny and noisy, and descent keeps paying well past the point
  // where a short patience window would give up.
  double train_lr = 1e-4;
  int batch_size = 32;
  int max_epochs = 800;
  int patience = 50;
  double val_fraction = 0.1;

  // Stationary baseline fit.
  double sbm_lr = 0.05;
  int sbm_max_iters = 5000;

  // Synthetic data.
  int n_crash = 100;
  int n_noncrash = 200;
  double rear_end_fraction = 0.5;
  int lanes = 3;
  double segment_length = 400.0;
  double v_min = 12.0, v_max = 30.0;
  double noncrash_duration = 8.0;
  double crash_history = 6.0;
};

namespace detail {

template <typename Fn>
void visit_config(PipelineConfig& c, Fn&& fn) {
  fn("seed", c.seed);
  fn("q_crash", c.q_crash);
  fn("q_noncrash", c.q_noncrash);
  fn("block_w", c.block_w);
  fn("t_min", c.t_min);
  fn("t_max", c.t_max);
  fn("t_step", c.t_step);
  fn("risk_grid_n", c.risk_grid_n);
  fn("mstar_step", c.mstar_step);
  fn("mstar_max", c.mstar_max);
  fn("control_ratio", c.control_ratio);
  fn("train_lr", c.train_lr);
  fn("batch_size", c.batch_size);
  fn("max_epochs", c.max_epochs);
  fn("patience", c.patience);
  fn("val_fraction", c.val_fraction);
  fn("sbm_lr", c.sbm_lr);
  fn("sbm_max_iters", c.sbm_max_iters);
  fn("n_crash", c.n_crash);
  fn("n_noncrash", c.n_noncrash);
  fn("rear_end_fraction", c.rear_end_fraction);
  fn("lanes", c.lanes);
  fn("segment_length", c.segment_length);
  fn("v_min", c.v_min);
  fn("v_max", c.v_max);
  fn("noncrash_duration", c.noncrash_duration);
  fn("crash_history", c.crash_history);
}

inline void assign_value(const std::string& key, const std::string& text, double& out) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw data_error("config key '" + key + "': invalid number '" + text + "'");
  }
  if (pos != text.size()) {
    throw data_error("config key '" + key + "': invalid number '" + text + "'");
  }
  out = v;
}

inline void assign_value(const std::string& key, const std::string& text, int& out) {
  double v = 0.0;
  assign_value(key, text, v);
  if (v != std::floor(v) || std::fabs(v) > 1e9) {
    throw data_error("config key '" + key + "': expected integer, got '" + text + "'");
  }
  out = static_cast<int>(v);
}

inline void assign_value(const std::string& key, const std::string& text,
                         std::uint64_t& out) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    out = v;
  } catch (const std::exception&) {
    throw data_error("config key '" + key + "': invalid unsigned integer '" + text +
                     "'");
  }
}

inline std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  const std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw data_error("config line " + std::to_string(line_no) +
                       ": expected key = value");
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    bool matched = false;
    detail::visit_config(cfg, [&](const char* name, auto& field) {
      if (!matched && key == name) {
        detail::assign_value(key, value, field);
        matched = true;
      }
    });
    if (!matched) {
      throw data_error("config line " + std::to_string(line_no) + ": unknown key '" +
                       key + "'");
    }
  }
  return cfg;
}

inline std::string dump_config(const PipelineConfig& cfg) {
  std::string out;
  detail::visit_config(const_cast<PipelineConfig&>(cfg),
                       [&](const char* name, auto& field) {
                         out += name;
                         out += " = ";
                         out += nlohmann::json(field).dump();
                         out += "\n";
                       });
  return out;
}

inline std::string config_hash(const PipelineConfig& cfg) {
  const std::string dump = dump_config(cfg);
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the canonical dump
  for (const unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline nlohmann::json provenance(const PipelineConfig& cfg) {
  return {{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}};
}

inline std::vector<double> lead_times(const PipelineConfig& cfg) {
  std::vector<double> out;
  for (int k = 0; k <= 10000; ++k) {
    const double t = cfg.t_min + cfg.t_step * k;
    if (t > cfg.t_max + 1e-9) break;
    out.push_back(t);
  }
  if (out.empty()) throw data_error("empty lead-time sweep");
  if (out.size() > 10000) throw data_error("lead-time sweep too fine");
  return out;
}

inline std::string fmt_lead_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", t);
  return buf;
}

// File layout inside one run directory.
struct RunPaths {
  std::filesystem::path root;

  explicit RunPaths(std::filesystem::path r) : root(std::move(r)) {}

  std::filesystem::path data_csv() const { return root / "data" / "trajectories.csv"; }
  std::filesystem::path crash_events(double t) const {
    return root / "data" / ("events_T" + fmt_lead_time(t) + "_crash.json");
  }
  std::filesystem::path noncrash_events() const {
    return root / "data" / "events_noncrash.json";
  }
  std::filesystem::path model(const std::string& kind, const std::string& scenario,
                              std::optional<double> t) const {
    std::string name = kind;
    if (t) name += "_T" + fmt_lead_time(*t);
    name += "_" + scenario + ".json";
    return root / "models" / name;
  }
  std::filesystem::path calib(double t) const {
    return root / "calib" / ("calib_T" + fmt_lead_time(t) + ".json");
  }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path report(double t) const {
    return eval_dir() / ("report_T" + fmt_lead_time(t) + ".json");
  }

  void ensure() const {
    std::filesystem::create_directories(root / "data");
    std::filesystem::create_directories(root / "models");
    std::filesystem::create_directories(root / "calib");
    std::filesystem::create_directories(eval_dir());
  }
};

namespace detail {

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path.string());
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw data_error("failed to parse " + path.string() + ": " + e.what());
  }
}

inline void check_format_version(const nlohmann::json& j,
                                 const std::filesystem::path& path) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != 1) {
    throw data_error("unsupported format_version in " + path.string());
  }
}

}  // namespace detail

// One retained block maximum together with the scene graph at its timestamp.
struct EventRecord {
  std::string sample_id;
  std::int64_t t_ds = 0;
  double z = 0.0;
  SceneGraph graph;
};

inline std::vector<EventRecord> extract_events(
    const std::vector<TrajectorySample>& samples, Label want, double lead_time,
    double q, double block_w) {
  std::vector<EventRecord> out;
  for (const TrajectorySample& s : samples) {
    if (s.label != want) continue;
    std::vector<DangerPoint> series;
    if (want == Label::crash) {
      series = danger_series(s, lead_time);
    } else {
      const double span = kTau * static_cast<double>(s.last_ds() - s.first_ds());
      series = danger_series(s, span, to_seconds(s.first_ds()));
    }
    for (const BlockMax& b : block_maxima(series, block_w)) {
      if (!(b.z > -q) || !std::isfinite(b.z)) continue;
      EventRecord rec;
      rec.sample_id = s.sample_id;
      rec.t_ds = b.t_ds;
      rec.z = b.z;
      const Frame& frame = s.frame(b.t_ds);
      rec.graph = build_graph(frame, s.subject_id,
                              identify_neighbors(frame, s.subject_id), s.sample_id,
                              b.t_ds);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

inline nlohmann::json events_to_json(const std::vector<EventRecord>& events,
                                     const std::string& scenario, double q,
                                     std::optional<double> lead_time,
                                     const nlohmann::json& prov) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EventRecord& e : events) {
    arr.push_back({{"sample_id", e.sample_id},
                   {"t", to_seconds(e.t_ds)},
                   {"z", e.z},
                   {"graph", e.graph}});
  }
  nlohmann::json j{{"format_version", 1},
                   {"provenance", prov},
                   {"scenario", scenario},
                   {"q", q},
                   {"events", std::move(arr)}};
  if (lead_time) j["lead_time"] = *lead_time;
  return j;
}

inline std::vector<EventRecord> events_from_json(const nlohmann::json& j,
                                                 const std::filesystem::path& path) {
  detail::check_format_version(j, path);
  std::vector<EventRecord> out;
  for (const nlohmann::json& e : j.at("events")) {
    EventRecord rec;
    rec.sample_id = e.at("sample_id").get<std::string>();
    rec.t_ds = to_ds(e.at("t").get<double>());
    rec.z = e.at("z").get<double>();
    rec.graph = e.at("graph").get<SceneGraph>();
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<TrajectorySample> read_samples(const std::filesystem::path& path) {
  return trajectories_from_csv(read_text_file(path.string()));
}

// ---------------------------------------------------------------------------
// Pipeline operations. Each reads its inputs from the run directory (or the
// explicit data override), writes its outputs back into it, and is
// deterministic given the configuration.
// ---------------------------------------------------------------------------

inline void op_synth(const PipelineConfig& cfg, const RunPaths& paths) {
  paths.ensure();
  SynthConfig sc;
  sc.n_crash = cfg.n_crash;
  sc.n_noncrash = cfg.n_noncrash;
  sc.rear_end_fraction = cfg.rear_end_fraction;
  sc.seed = cfg.seed;
  sc.lanes = cfg.lanes;
  sc.segment_length = cfg.segment_length;
  sc.v_min = cfg.v_min;
  sc.v_max = cfg.v_max;
  sc.noncrash_duration = cfg.noncrash_duration;
  sc.crash_history = cfg.crash_history;
  const std::vector<TrajectorySample> samples = generate_dataset(sc);
  const std::string comment = "provenance " + provenance(cfg).dump();
  write_text_file(paths.data_csv().string(), trajectories_to_csv(samples, comment));
}

inline void op_extract(const PipelineConfig& cfg, const RunPaths& paths,
                       double lead_time) {
  paths.ensure();
  const auto samples = read_samples(paths.data_csv());
  const nlohmann::json prov = provenance(cfg);
  const auto crash =
      extract_events(samples, Label::crash, lead_time, cfg.q_crash, cfg.block_w);
  write_text_file(
      paths.crash_events(lead_time).string(),
      events_to_json(crash, "crash", cfg.q_crash, lead_time, prov).dump(2) + "\n");
  if (!std::filesystem::exists(paths.noncrash_events())) {
    const auto noncrash =
        extract_events(samples, Label::non_crash, 0.0, cfg.q_noncrash, cfg.block_w);
    write_text_file(
        paths.noncrash_events().string(),
        events_to_json(noncrash, "non_crash", cfg.q_noncrash, std::nullopt, prov)
                .dump(2) +
            "\n");
  }
}

namespace detail {

inline std::vector<LabeledGraph> to_labeled(const std::vector<EventRecord>& events) {
  std::vector<LabeledGraph> out;
  out.reserve(events.size());
  for (const EventRecord& e : events) out.push_back({e.graph, e.z});
  return out;
}

inline std::vector<double> event_zs(const std::vector<EventRecord>& events) {
  std::vector<double> out;
  out.reserve(events.size());
  for (const EventRecord& e : events) out.push_back(e.z);
  return out;
}

inline nlohmann::json sbm_to_json(const GevParams& p, const std::string& scenario,
                                  std::size_t n_events, double mean_nll,
                                  const nlohmann::json& prov) {
  return {{"format_version", 1}, {"provenance", prov},
          {"scenario", scenario}, {"params", p},
          {"n_events", n_events}, {"mean_nll", mean_nll}};
}

inline GevParams sbm_from_json(const nlohmann::json& j,
                               const std::filesystem::path& path,
                               const std::string& expect_scenario) {
  check_format_version(j, path);
  if (j.at("scenario").get<std::string>() != expect_scenario) {
    throw data_error("scenario mismatch in " + path.string());
  }
  return j.at("params").get<GevParams>();
}

inline double pooled_mean_nll(const std::vector<double>& zs, const GevParams& p) {
  double total = 0.0;
  for (const double z : zs) total += gev_nll_grad(z, p).nll;
  return zs.empty() ? 0.0 : total / static_cast<double>(zs.size());
}

}  // namespace detail

inline void op_train(const PipelineConfig& cfg, const RunPaths& paths,
                     double lead_time) {
  paths.ensure();
  const nlohmann::json prov = provenance(cfg);
  const auto crash_events =
      events_from_json(detail::parse_json_file(paths.crash_events(lead_time)),
                       paths.crash_events(lead_time));
  const auto noncrash_events = events_from_json(
      detail::parse_json_file(paths.noncrash_events()), paths.noncrash_events());

  TrainConfig tc;
  tc.lr = cfg.train_lr;
  tc.batch_size = cfg.batch_size;
  tc.max_epochs = cfg.max_epochs;
  tc.patience = cfg.patience;
  tc.val_fraction = cfg.val_fraction;

  const auto write_model = [&](const TrainedModel& m,
                               const std::filesystem::path& path) {
    nlohmann::json j = trained_model_to_json(m);
    j["provenance"] = prov;
    write_text_file(path.string(), j.dump(2) + "\n");
  };

  {
    tc.seed = Rng(cfg.seed)
                  .derive("train/crash", static_cast<std::uint64_t>(to_ds(lead_time)))
                  .next_u64();
    const TrainedModel m = train(detail::to_labeled(crash_events), tc, "crash");
    write_model(m, paths.model("nsbm", "crash", lead_time));
    const auto zs = detail::event_zs(crash_events);
    const GevParams p = fit_stationary(zs, cfg.sbm_lr, cfg.sbm_max_iters);
    write_text_file(paths.model("sbm", "crash", lead_time).string(),
                    detail::sbm_to_json(p, "crash", zs.size(),
                                        detail::pooled_mean_nll(zs, p), prov)
                            .dump(2) +
                        "\n");
  }
  const auto nsbm_nc_path = paths.model("nsbm", "noncrash", std::nullopt);
  const auto sbm_nc_path = paths.model("sbm", "noncrash", std::nullopt);
  if (!std::filesystem::exists(nsbm_nc_path) || !std::filesystem::exists(sbm_nc_path)) {
    tc.seed = Rng(cfg.seed).derive("train/noncrash").next_u64();
    const TrainedModel m = train(detail::to_labeled(noncrash_events), tc, "non_crash");
    write_model(m, nsbm_nc_path);
    const auto zs = detail::event_zs(noncrash_events);
    const GevParams p = fit_stationary(zs, cfg.sbm_lr, cfg.sbm_max_iters);
    write_text_file(sbm_nc_path.string(),
                    detail::sbm_to_json(p, "non_crash", zs.size(),
                                        detail::pooled_mean_nll(zs, p), prov)
                            .dump(2) +
                        "\n");
  }
}

// Everything needed to score frames at one lead time.
struct ModelBundle {
  TrainedModel nsbm_crash, nsbm_noncrash;
  GevParams sbm_crash, sbm_noncrash;
  double m_star_nsbm = 1.0, m_star_sbm = 1.0;
  double risk_floor = -3.0;
  int grid_n = 200;
};

inline ModelBundle load_bundle(const PipelineConfig& cfg, const RunPaths& paths,
                               double lead_time, bool with_calibration) {
  ModelBundle b;
  b.risk_floor = -cfg.q_noncrash;
  b.grid_n = cfg.risk_grid_n;
  b.nsbm_crash = trained_model_from_json(
      detail::parse_json_file(paths.model("nsbm", "crash", lead_time)));
  b.nsbm_noncrash = trained_model_from_json(
      detail::parse_json_file(paths.model("nsbm", "noncrash", std::nullopt)));
  b.sbm_crash = detail::sbm_from_json(
      detail::parse_json_file(paths.model("sbm", "crash", lead_time)),
      paths.model("sbm", "crash", lead_time), "crash");
  b.sbm_noncrash = detail::sbm_from_json(
      detail::parse_json_file(paths.model("sbm", "noncrash", std::nullopt)),
      paths.model("sbm", "noncrash", std::nullopt), "non_crash");
  if (with_calibration) {
    const nlohmann::json j = detail::parse_json_file(paths.calib(lead_time));
    detail::check_format_version(j, paths.calib(lead_time));
    b.m_star_nsbm = j.at("nsbm_gat").at("m_star").get<double>();
    b.m_star_sbm = j.at("sbm").at("m_star").get<double>();
  }
  return b;
}

inline double nsbm_metric(const ModelBundle& b, const SceneGraph& g, double z) {
  const GevParams pc = forward_params(g, b.nsbm_crash.params);
  const GevParams pn = forward_params(g, b.nsbm_noncrash.params);
  return risk_value(z, pc, pn, b.grid_n, b.risk_floor);
}

inline double sbm_metric(const ModelBundle& b, double z) {
  return risk_value(z, b.sbm_crash, b.sbm_noncrash, b.grid_n, b.risk_floor);
}

inline void op_calibrate(const PipelineConfig& cfg, const RunPaths& paths,
                         double lead_time) {
  paths.ensure();
  const ModelBundle bundle = load_bundle(cfg, paths, lead_time, false);
  const auto crash_events =
      events_from_json(detail::parse_json_file(paths.crash_events(lead_time)),
                       paths.crash_events(lead_time));
  const auto noncrash_events = events_from_json(
      detail::parse_json_file(paths.noncrash_events()), paths.noncrash_events());
  if (crash_events.empty()) throw data_error("no crash events to calibrate on");
  if (noncrash_events.empty()) throw data_error("no non-crash events to calibrate on");

  // 1:control_ratio case/control balance, deterministic subsample.
  const std::size_t want =
      std::min(noncrash_events.size(),
               crash_events.size() * static_cast<std::size_t>(cfg.control_ratio));
  std::vector<std::size_t> idx(noncrash_events.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = Rng(cfg.seed).derive("calibrate", static_cast<std::uint64_t>(to_ds(lead_time)));
  rng.shuffle(idx);
  idx.resize(want);
  std::sort(idx.begin(), idx.end());

  std::vector<double> crash_m_nsbm, crash_m_sbm, nc_m_nsbm, nc_m_sbm;
  for (const EventRecord& e : crash_events) {
    crash_m_nsbm.push_back(nsbm_metric(bundle, e.graph, e.z));
    crash_m_sbm.push_back(sbm_metric(bundle, e.z));
  }
  for (const std::size_t i : idx) {
    nc_m_nsbm.push_back(nsbm_metric(bundle, noncrash_events[i].graph,
                                    noncrash_events[i].z));
    nc_m_sbm.push_back(sbm_metric(bundle, noncrash_events[i].z));
  }
  const auto grid = make_mstar_grid(cfg.mstar_step, cfg.mstar_max);
  const ThresholdCalibration cal_nsbm =
      calibrate_threshold(crash_m_nsbm, nc_m_nsbm, grid, lead_time);
  const ThresholdCalibration cal_sbm =
      calibrate_threshold(crash_m_sbm, nc_m_sbm, grid, lead_time);
  const nlohmann::json j{{"format_version", 1},
                         {"provenance", provenance(cfg)},
                         {"lead_time", lead_time},
                         {"n_crash_events", crash_events.size()},
                         {"n_noncrash_events", want},
                         {"nsbm_gat", cal_nsbm},
                         {"sbm", cal_sbm}};
  write_text_file(paths.calib(lead_time).string(), j.dump(2) + "\n");
}

// Per-frame SSM scores restated as "higher = riskier" for ROC sweeps, plus the
// fixed-threshold alarm flags. A missing lead vehicle scores zero (no alarm);
// an overlapping or touching pair scores infinite.
struct FrameSsm {
  double ttc_score = 0.0, mttc_score = 0.0, drac_score = 0.0;
  bool ttc_flag = false, mttc_flag = false, drac_flag = false;
};

inline FrameSsm frame_ssm(const Frame& frame, int subject_id) {
  FrameSsm out;
  const NeighborSet n = identify_neighbors(frame, subject_id);
  const auto& lead = n.at(Role::lead_same);
  if (!lead.has_value()) return out;
  const VehicleState* subject = nullptr;
  for (const VehicleState& v : frame) {
    if (v.id == subject_id) subject = &v;
  }
  const double gap =
      (lead->x - 0.5 * lead->length) - (subject->x + 0.5 * subject->length);
  if (gap <= 0.0) {
    out.ttc_score = out.mttc_score = out.drac_score = kInf;
    out.ttc_flag = out.mttc_flag = out.drac_flag = true;
    return out;
  }
  const SsmScores s = ssm_scores(*subject, *lead);
  if (std::isfinite(s.ttc) && s.ttc > 0.0) out.ttc_score = 1.0 / s.ttc;
  if (std::isfinite(s.mttc) && s.mttc > 0.0) out.mttc_score = 1.0 / s.mttc;
  out.drac_score = s.drac;
  out.ttc_flag = s.ttc_flag;
  out.mttc_flag = s.mttc_flag;
  out.drac_flag = s.drac_flag;
  return out;
}

inline void op_predict(const PipelineConfig& cfg, const RunPaths& paths,
                       const std::string& sample_id, double lead_time) {
  paths.ensure();
  const auto samples = read_samples(paths.data_csv());
  const TrajectorySample* sample = nullptr;
  for (const TrajectorySample& s : samples) {
    if (s.sample_id == sample_id) sample = &s;
  }
  if (sample == nullptr) throw data_error("unknown sample_id: " + sample_id);
  const ModelBundle bundle = load_bundle(cfg, paths, lead_time, true);

  std::string csv = "# provenance " + provenance(cfg).dump() + "\n";
  csv += "t,z,m,warn,crash_xi,crash_sigma,crash_mu,noncrash_xi,noncrash_sigma,"
         "noncrash_mu\n";
  char buf[256];
  for (const auto& [t_ds, frame] : sample->frames) {
    const NeighborSet n = identify_neighbors(frame, sample->subject_id);
    const SceneGraph g =
        build_graph(frame, sample->subject_id, n, sample->sample_id, t_ds);
    const double z = -compute_mrd(sample->subject_at(t_ds), n);
    const RiskAssessment r =
        predict(g, bundle.nsbm_crash, bundle.nsbm_noncrash, bundle.m_star_nsbm, z,
                bundle.grid_n, bundle.risk_floor);
    std::snprintf(buf, sizeof(buf),
                  "%.1f,%.6f,%.6f,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  to_seconds(t_ds), z, r.m, r.warn ? 1 : 0, r.crash_params.xi,
                  r.crash_params.sigma, r.crash_params.mu, r.noncrash_params.xi,
                  r.noncrash_params.sigma, r.noncrash_params.mu);
    csv += buf;
  }
  const auto out_path = paths.eval_dir() / ("predict_" + sample_id + "_T" +
                                            fmt_lead_time(lead_time) + ".csv");
  write_text_file(out_path.string(), csv);
}

namespace detail {

struct FrameScores {
  double nsbm = 0.0, sbm = 0.0, ttc = 0.0, mttc = 0.0, drac = 0.0;
  bool nsbm_flag = false, sbm_flag = false, ttc_flag = false, mttc_flag = false,
       drac_flag = false;
};

inline FrameScores score_frame(const ModelBundle& b, const TrajectorySample& s,
                               std::int64_t t_ds) {
  FrameScores out;
  const Frame& frame = s.frame(t_ds);
  const NeighborSet n = identify_neighbors(frame, s.subject_id);
  const SceneGraph g = build_graph(frame, s.subject_id, n, s.sample_id, t_ds);
  const double z = -compute_mrd(s.subject_at(t_ds), n);
  out.nsbm = nsbm_metric(b, g, z);
  out.sbm = sbm_metric(b, z);
  out.nsbm_flag = out.nsbm >= b.m_star_nsbm;
  out.sbm_flag = out.sbm >= b.m_star_sbm;
  const FrameSsm ssm = frame_ssm(frame, s.subject_id);
  out.ttc = ssm.ttc_score;
  out.mttc = ssm.mttc_score;
  out.drac = ssm.drac_score;
  out.ttc_flag = ssm.ttc_flag;
  out.mttc_flag = ssm.mttc_flag;
  out.drac_flag = ssm.drac_flag;
  return out;
}

}  // namespace detail

// Evaluate the trained models at one lead time. `data_override` points the
// evaluation at a held-out trajectory CSV; empty means the run's own data.
inline nlohmann::json op_evaluate(const PipelineConfig& cfg, const RunPaths& paths,
                                  double lead_time,
                                  const std::string& data_override = "") {
  paths.ensure();
  const std::filesystem::path data_path =
      data_override.empty() ? paths.data_csv() : std::filesystem::path(data_override);
  const auto samples = read_samples(data_path);
  const ModelBundle bundle = load_bundle(cfg, paths, lead_time, true);

  std::vector<const TrajectorySample*> crash, noncrash;
  for (const TrajectorySample& s : samples) {
    (s.label == Label::crash ? crash : noncrash).push_back(&s);
  }
  if (crash.empty()) throw data_error("evaluation data has no crash samples");
  if (noncrash.empty()) throw data_error("evaluation data has no non-crash samples");

  // Held-out crash extremes: CRPS, mean NLL, and PIT per model.
  const auto crash_events =
      extract_events(samples, Label::crash, lead_time, cfg.q_crash, cfg.block_w);
  if (crash_events.empty()) throw data_error("no crash events in evaluation data");
  std::vector<double> event_z;
  std::vector<GevParams> event_params_nsbm, event_params_sbm;
  double crps_nsbm = 0.0, crps_sbm = 0.0, nll_nsbm = 0.0, nll_sbm = 0.0;
  for (const EventRecord& e : crash_events) {
    const GevParams pc = forward_params(e.graph, bundle.nsbm_crash.params);
    event_z.push_back(e.z);
    event_params_nsbm.push_back(pc);
    event_params_sbm.push_back(bundle.sbm_crash);
    crps_nsbm += crps(pc, e.z);
    crps_sbm += crps(bundle.sbm_crash, e.z);
    nll_nsbm += gev_nll_grad(e.z, pc).nll;
    nll_sbm += gev_nll_grad(e.z, bundle.sbm_crash).nll;
  }
  const double n_events = static_cast<double>(crash_events.size());
  crps_nsbm /= n_events;
  crps_sbm /= n_events;
  nll_nsbm /= n_events;
  nll_sbm /= n_events;

  // Alarm fraction over the pre-crash window, averaged over crash samples, and
  // ROC case scores over the same frames.
  const std::int64_t horizon = to_ds(lead_time);
  double ap_nsbm = 0.0, ap_sbm = 0.0, ap_ttc = 0.0, ap_mttc = 0.0, ap_drac = 0.0;
  std::vector<double> case_nsbm, case_sbm, case_ttc, case_mttc, case_drac;
  nlohmann::json ap_rows = nlohmann::json::array();
  for (const TrajectorySample* s : crash) {
    int hit_nsbm = 0, hit_sbm = 0, hit_ttc = 0, hit_mttc = 0, hit_drac = 0;
    for (std::int64_t t = -horizon; t <= 0; ++t) {
      const detail::FrameScores f = detail::score_frame(bundle, *s, t);
      hit_nsbm += f.nsbm_flag;
      hit_sbm += f.sbm_flag;
      hit_ttc += f.ttc_flag;
      hit_mttc += f.mttc_flag;
      hit_drac += f.drac_flag;
      case_nsbm.push_back(f.nsbm);
      case_sbm.push_back(f.sbm);
      case_ttc.push_back(f.ttc);
      case_mttc.push_back(f.mttc);
      case_drac.push_back(f.drac);
    }
    const double n_frames = static_cast<double>(horizon + 1);
    ap_rows.push_back({{"sample_id", s->sample_id},
                       {"nsbm_gat", hit_nsbm / n_frames},
                       {"sbm", hit_sbm / n_frames},
                       {"ttc", hit_ttc / n_frames},
                       {"mttc", hit_mttc / n_frames},
                       {"drac", hit_drac / n_frames}});
    ap_nsbm += hit_nsbm / n_frames;
    ap_sbm += hit_sbm / n_frames;
    ap_ttc += hit_ttc / n_frames;
    ap_mttc += hit_mttc / n_frames;
    ap_drac += hit_drac / n_frames;
  }
  const double n_crash_d = static_cast<double>(crash.size());
  ap_nsbm /= n_crash_d;
  ap_sbm /= n_crash_d;
  ap_ttc /= n_crash_d;
  ap_mttc /= n_crash_d;
  ap_drac /= n_crash_d;

  // Controls: deterministic subsample of non-crash frames at 1:control_ratio.
  std::vector<std::pair<const TrajectorySample*, std::int64_t>> pool;
  for (const TrajectorySample* s : noncrash) {
    for (const auto& [t_ds, frame] : s->frames) pool.emplace_back(s, t_ds);
  }
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = Rng(cfg.seed)
                .derive("evaluate/controls", static_cast<std::uint64_t>(to_ds(lead_time)));
  rng.shuffle(idx);
  const std::size_t want = std::min(
      pool.size(), case_nsbm.size() * static_cast<std::size_t>(cfg.control_ratio));
  idx.resize(want);
  std::sort(idx.begin(), idx.end());
  std::vector<double> ctrl_nsbm, ctrl_sbm, ctrl_ttc, ctrl_mttc, ctrl_drac;
  for (const std::size_t i : idx) {
    const detail::FrameScores f =
        detail::score_frame(bundle, *pool[i].first, pool[i].second);
    ctrl_nsbm.push_back(f.nsbm);
    ctrl_sbm.push_back(f.sbm);
    ctrl_ttc.push_back(f.ttc);
    ctrl_mttc.push_back(f.mttc);
    ctrl_drac.push_back(f.drac);
  }

  const RocResult roc_nsbm = roc_auc(case_nsbm, ctrl_nsbm);
  const RocResult roc_sbm = roc_auc(case_sbm, ctrl_sbm);
  const RocResult roc_ttc = roc_auc(case_ttc, ctrl_ttc);
  const RocResult roc_mttc = roc_auc(case_mttc, ctrl_mttc);
  const RocResult roc_drac = roc_auc(case_drac, ctrl_drac);

  // Artifacts: PP points, ROC curves, per-sample alarm fractions.
  const std::string t_tag = fmt_lead_time(lead_time);
  char buf[160];
  {
    std::string csv = "# provenance " + provenance(cfg).dump() + "\n";
    csv += "T,model,u_theoretical,u_empirical\n";
    const auto dump_pp = [&](const char* name, const std::vector<GevParams>& params) {
      for (const auto& [u_theo, u_emp] : pp_points(event_z, params)) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.9f,%.9f\n", t_tag.c_str(), name,
                      u_theo, u_emp);
        csv += buf;
      }
    };
    dump_pp("nsbm_gat", event_params_nsbm);
    dump_pp("sbm", event_params_sbm);
    write_text_file((paths.eval_dir() / "pp.csv").string(), csv);
  }
  {
    std::string csv = "# provenance " + provenance(cfg).dump() + "\n";
    csv += "model,fpr,tpr\n";
    const auto dump_curve = [&](const char* name, const RocResult& r) {
      for (const RocPoint& p : r.points) {
        std::snprintf(buf, sizeof(buf), "%s,%.9f,%.9f\n", name, p.fpr, p.tpr);
        csv += buf;
      }
    };
    dump_curve("nsbm_gat", roc_nsbm);
    dump_curve("sbm", roc_sbm);
    dump_curve("ttc", roc_ttc);
    dump_curve("mttc", roc_mttc);
    dump_curve("drac", roc_drac);
    write_text_file((paths.eval_dir() / ("roc_T" + t_tag + ".csv")).string(), csv);
  }
  {
    std::string csv = "# provenance " + provenance(cfg).dump() + "\n";
    csv += "T,sample_id,nsbm_gat,sbm,ttc,mttc,drac\n";
    for (const nlohmann::json& row : ap_rows) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                    t_tag.c_str(), row.at("sample_id").get<std::string>().c_str(),
                    row.at("nsbm_gat").get<double>(), row.at("sbm").get<double>(),
                    row.at("ttc").get<double>(), row.at("mttc").get<double>(),
                    row.at("drac").get<double>());
      csv += buf;
    }
    write_text_file((paths.eval_dir() / "ap.csv").string(), csv);
  }

  nlohmann::json report{
      {"format_version", 1},
      {"provenance", provenance(cfg)},
      {"lead_time", lead_time},
      {"counts",
       {{"crash_samples", crash.size()},
        {"noncrash_samples", noncrash.size()},
        {"crash_events", crash_events.size()},
        {"roc_cases", case_nsbm.size()},
        {"roc_controls", ctrl_nsbm.size()}}},
      {"m_star", {{"nsbm_gat", bundle.m_star_nsbm}, {"sbm", bundle.m_star_sbm}}},
      {"crps", {{"nsbm_gat", crps_nsbm}, {"sbm", crps_sbm}}},
      {"mean_nll", {{"nsbm_gat", nll_nsbm}, {"sbm", nll_sbm}}},
      {"ap",
       {{"nsbm_gat", ap_nsbm},
        {"sbm", ap_sbm},
        {"ttc", ap_ttc},
        {"mttc", ap_mttc},
        {"drac", ap_drac}}},
      {"auc",
       {{"nsbm_gat", roc_nsbm.auc},
        {"sbm", roc_sbm.auc},
        {"ttc", roc_ttc.auc},
        {"mttc", roc_mttc.auc},
        {"drac", roc_drac.auc}}}};
  write_text_file(paths.report(lead_time).string(), report.dump(2) + "\n");
  return report;
}

inline nlohmann::json op_report(const PipelineConfig& cfg, const RunPaths& paths) {
  paths.ensure();
  std::vector<std::pair<double, nlohmann::json>> reports;
  for (const double t : lead_times(cfg)) {
    const auto path = paths.report(t);
    if (!std::filesystem::exists(path)) continue;
    reports.emplace_back(t, detail::parse_json_file(path));
  }
  if (reports.empty()) {
    throw data_error("no evaluation reports found under " + paths.eval_dir().string());
  }
  static const std::vector<std::string> kModels = {"nsbm_gat", "sbm", "ttc", "mttc",
                                                   "drac"};
  std::string csv = "# provenance " + provenance(cfg).dump() + "\n";
  csv += "T,model,crps,ap,auc\n";
  char buf[160];
  nlohmann::json by_lead_time = nlohmann::json::array();
  for (const auto& [t, rep] : reports) {
    for (const std::string& model : kModels) {
      std::string crps_txt;
      if (rep.at("crps").contains(model)) {
        std::snprintf(buf, sizeof(buf), "%.6f", rep.at("crps").at(model).get<double>());
        crps_txt = buf;
      }
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.6f,%.6f\n", fmt_lead_time(t).c_str(),
                    model.c_str(), crps_txt.c_str(),
                    rep.at("ap").at(model).get<double>(),
                    rep.at("auc").at(model).get<double>());
      csv += buf;
    }
    by_lead_time.push_back(rep);
  }
  const nlohmann::json summary{{"format_version", 1},
                               {"provenance", provenance(cfg)},
                               {"reports", std::move(by_lead_time)}};
  write_text_file((paths.eval_dir() / "summary.csv").string(), csv);
  write_text_file((paths.eval_dir() / "summary.json").string(), summary.dump(2) + "\n");
  return summary;
}

}  // namespace nsbm::pipeline
