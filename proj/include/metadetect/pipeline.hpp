#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "metadetect/config.hpp"
#include "metadetect/io.hpp"
#include "metadetect/localize.hpp"
#include "metadetect/metrics.hpp"
#include "metadetect/mrengine.hpp"
#include "metadetect/preprocess.hpp"
#include "metadetect/simcore.hpp"

namespace metadetect::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

namespace fs = std::filesystem;
using config::DetectOptions;
using config::RunConfig;
using sim::LinkId;

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline RunConfig load_config_file(const std::string& path) {
  return config::load(io::read_file(path), path);
}

// ---- simulate ----

struct SimulateOutputs {
  std::string trace_csv;
  std::string positions_csv;
  std::string ground_truth_json;
  std::string run_id;
  sim::SimulationResult result;
};

/// Run the scenario and write trace.csv, positions.csv, ground_truth.json.
inline SimulateOutputs cmd_simulate(const sim::ScenarioConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  SimulateOutputs out;
  out.result = sim::run_simulation(cfg);
  const std::string trace = io::trace_csv(out.result.records);
  out.run_id = io::fnv1a_hex(trace);
  out.trace_csv = (out_dir / "trace.csv").string();
  out.positions_csv = (out_dir / "positions.csv").string();
  out.ground_truth_json = (out_dir / "ground_truth.json").string();
  io::write_file(out.trace_csv, trace);
  io::write_file(out.positions_csv, io::positions_csv(out.result.positions));
  io::write_file(out.ground_truth_json, io::ground_truth_json(out.result.truth, cfg.n_nodes, out.run_id).dump(2) + "\n");
  return out;
}

// ---- detect ----

/// Per-link distance at the given times from position samples: a natural
/// spline through the sampled distances (queries clamped to the sampled
/// span), or with spline off the mean of the samples inside each window.
inline std::optional<std::vector<double>> link_distance(const std::vector<sim::PositionSample>& positions,
                                                        const LinkId& link, const std::vector<double>& window_starts,
                                                        double window_s, bool spline) {
  std::map<double, std::pair<std::optional<mobility::Vec3>, std::optional<mobility::Vec3>>> by_t;
  for (const auto& p : positions) {
    if (p.node == link.src) by_t[p.t].first = p.pos;
    if (p.node == link.dst) by_t[p.t].second = p.pos;
  }
  std::vector<double> kt, kd;
  for (const auto& [t, pp] : by_t)
    if (pp.first && pp.second) {
      kt.push_back(t);
      kd.push_back(mobility::euclidean_distance(*pp.first, *pp.second));
    }
  if (kt.size() < 3) return std::nullopt;

  std::vector<double> out;
  out.reserve(window_starts.size());
  if (spline) {
    preprocess::NaturalSpline s(kt, kd);
    for (double t0 : window_starts) out.push_back(s(std::clamp(t0 + 0.5 * window_s, s.front(), s.back())));
    return out;
  }
  for (double t0 : window_starts) {
    auto lo = std::lower_bound(kt.begin(), kt.end(), t0);
    auto hi = std::lower_bound(kt.begin(), kt.end(), t0 + window_s);
    if (lo == hi) {
      // no sample inside: nearest one
      auto it = std::lower_bound(kt.begin(), kt.end(), t0 + 0.5 * window_s);
      if (it == kt.end()) --it;
      out.push_back(kd[static_cast<std::size_t>(it - kt.begin())]);
      continue;
    }
    double s = 0.0;
    for (auto it = lo; it != hi; ++it) s += kd[static_cast<std::size_t>(it - kt.begin())];
    out.push_back(s / static_cast<double>(hi - lo));
  }
  return out;
}

struct DetectResult {
  std::vector<metrics::MetricWindow> windows;
  std::vector<LinkId> chain;
  std::vector<mr::MrVerdict> verdicts;
  std::optional<localize::HeatMap> heatmap;
  std::optional<localize::LocalizationResult> localization;
  int beta_clamped = 0;
};

/// Metrics -> preprocessing -> MR verdicts -> heat map localization.
inline DetectResult detect(const std::vector<sim::TraceRecord>& records,
                           const std::vector<sim::PositionSample>& positions, const DetectOptions& opt) {
  opt.validate();
  DetectResult res;
  double horizon = 0.0;
  for (const auto& p : positions) horizon = std::max(horizon, p.t);
  metrics::WindowOptions wopt;
  wopt.packet_bytes = opt.packet_bytes;
  wopt.queue_capacity = opt.queue_capacity;
  wopt.max_lag = opt.max_lag;
  wopt.min_horizon_s = horizon;
  wopt.on_beta_clamp = [&](const LinkId&, double, double) { ++res.beta_clamped; };
  res.windows = metrics::window_metrics(records, opt.window_s, wopt);
  for (const auto& w : res.windows)
    if (res.chain.empty() || !(res.chain.back() == w.link)) res.chain.push_back(w.link);
  if (res.windows.empty()) return res;

  struct LinkInputs {
    LinkId link;
    preprocess::MetricSeries distance;
  };
  std::vector<LinkInputs> inputs;
  for (const auto& link : res.chain) {
    auto d = preprocess::series_from_windows(res.windows, link, "distance_m");
    if (auto from_pos = link_distance(positions, link, d.times, opt.window_s, opt.spline))
      d.values = *from_pos;
    d = preprocess::impute(d, opt.cap_factor);
    inputs.push_back({link, std::move(d)});
  }

  // (link, spec) tasks, evaluated in any order, merged in a fixed one
  const std::size_t n_tasks = inputs.size() * opt.specs.size();
  std::vector<std::vector<mr::MrVerdict>> slots(n_tasks);
  std::vector<std::string> errors(n_tasks);
  auto run_task = [&](std::size_t k) {
    try {
      const auto& in = inputs[k / opt.specs.size()];
      const auto& spec = opt.specs[k % opt.specs.size()];
      auto m = preprocess::impute(preprocess::series_from_windows(res.windows, in.link, spec.metric), opt.cap_factor);
      slots[k] = mr::evaluate_mr(spec, m, in.distance, in.link);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(opt.parallel), n_tasks);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n_tasks; ++k) run_task(k);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < n_tasks; k += workers) run_task(k);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (!e.empty()) throw InvalidArgument(e);
  for (auto& s : slots) res.verdicts.insert(res.verdicts.end(), s.begin(), s.end());

  auto hm = localize::build_heatmap(res.windows, opt.localize_metric, res.chain);
  if (hm.rows >= 5 && hm.cols >= 3) res.localization = localize::vertical_line_extract(hm, opt.extract);
  res.heatmap = std::move(hm);
  return res;
}

struct DetectOutputs {
  std::string metrics_csv, verdicts_json, heatmap_csv, heatmap_pgm, localization_json, registry_json;
  DetectResult result;
};

inline nlohmann::json verdicts_json(const std::vector<mr::MrVerdict>& verdicts, const std::string& run_id) {
  auto arr = nlohmann::json::array();
  for (const auto& v : verdicts) arr.push_back(mr::to_json(v));
  return {{"run_id", run_id}, {"verdicts", arr}};
}

struct VerdictFile {
  std::string run_id;
  std::vector<mr::MrVerdict> verdicts;
};

inline VerdictFile parse_verdicts(const nlohmann::json& j) {
  VerdictFile out;
  const nlohmann::json* arr = &j;
  if (j.is_object()) {
    out.run_id = j.value("run_id", std::string());
    if (!j.contains("verdicts")) throw io::SchemaError("verdicts: missing 'verdicts'");
    arr = &j.at("verdicts");
  }
  if (!arr->is_array()) throw io::SchemaError("verdicts: expected an array");
  std::size_t i = 0;
  for (const auto& v : *arr) {
    try {
      out.verdicts.push_back(mr::verdict_from_json(v));
    } catch (const std::exception& e) {
      throw io::SchemaError("verdicts: entry " + std::to_string(i) + ": " + e.what());
    }
    ++i;
  }
  return out;
}

/// Read trace (+ optional positions) files and write all detection artifacts.
inline DetectOutputs cmd_detect(const std::string& trace_path, const std::string& positions_path,
                                const DetectOptions& opt, const fs::path& out_dir) {
  const std::string trace_text = io::read_file(trace_path);
  const auto records = io::parse_trace_csv(trace_text, trace_path);
  std::vector<sim::PositionSample> positions;
  if (!positions_path.empty()) positions = io::parse_positions_csv(io::read_file(positions_path), positions_path);
  const std::string run_id = io::fnv1a_hex(trace_text);

  ensure_dir(out_dir);
  DetectOutputs out;
  out.result = detect(records, positions, opt);
  const auto& r = out.result;
  out.metrics_csv = (out_dir / "metrics.csv").string();
  out.verdicts_json = (out_dir / "verdicts.json").string();
  out.heatmap_csv = (out_dir / "heatmap.csv").string();
  out.heatmap_pgm = (out_dir / "heatmap.pgm").string();
  out.localization_json = (out_dir / "localization.json").string();
  out.registry_json = (out_dir / "metric_registry.json").string();

  io::write_file(out.metrics_csv, io::metrics_csv(r.windows));
  io::write_file(out.verdicts_json, verdicts_json(r.verdicts, run_id).dump(1) + "\n");
  localize::HeatMap hm = r.heatmap ? *r.heatmap : localize::HeatMap{};
  localize::write_heatmap_csv(hm, out.heatmap_csv);
  localize::write_pgm(hm, out.heatmap_pgm);
  auto loc = localize::to_json(r.localization, opt.localize_metric);
  loc["run_id"] = run_id;
  io::write_file(out.localization_json, loc.dump(2) + "\n");
  io::write_file(out.registry_json, preprocess::registry_json().dump(2) + "\n");
  if (r.beta_clamped > 0)
    std::fprintf(stderr, "note: beta clamped to [0,1] in %d window(s)\n", r.beta_clamped);
  return out;
}

// ---- evaluate ----

struct EvaluateOutputs {
  std::string ranking_json, report_txt;
  std::vector<mr::MrScore> scores;
  std::string report;
};

inline std::string fmt_opt(const std::optional<double>& v, const char* f = "%.3f") {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, f, *v);
  return buf;
}

inline std::string report_text(const std::vector<mr::MrScore>& scores) {
  std::string out = "mr      precision  recall  mean_delay_s  violations\n";
  char buf[160];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%-7s %9s  %6s  %12s  %10d\n", s.mr.c_str(), fmt_opt(s.precision).c_str(),
                  fmt_opt(s.recall).c_str(), fmt_opt(s.mean_delay_s, "%.2f").c_str(), s.violations);
    out += buf;
  }
  if (!scores.empty() && scores.front().recall && *scores.front().recall > 0.0)
    out += "best: " + scores.front().mr + " (recall " + fmt_opt(scores.front().recall) + ", mean delay " +
           fmt_opt(scores.front().mean_delay_s, "%.2f") + " s)\n";
  else
    out += "best: none (no relation detected any event)\n";
  return out;
}

inline EvaluateOutputs cmd_evaluate(const std::string& verdicts_path, const std::string& truth_path, double grace_s,
                                    const fs::path& out_dir) {
  const auto vf = parse_verdicts(io::parse_json_text(io::read_file(verdicts_path), verdicts_path));
  const auto gt = io::parse_ground_truth(io::parse_json_text(io::read_file(truth_path), truth_path));
  if (!vf.run_id.empty() && !gt.run_id.empty() && vf.run_id != gt.run_id)
    throw InvalidArgument("run id mismatch: verdicts " + vf.run_id + " vs ground truth " + gt.run_id);

  ensure_dir(out_dir);
  EvaluateOutputs out;
  out.scores = mr::rank_mrs(vf.verdicts, gt.log, grace_s);
  auto arr = nlohmann::json::array();
  for (const auto& s : out.scores) arr.push_back(mr::to_json(s));
  out.ranking_json = (out_dir / "ranking.json").string();
  out.report_txt = (out_dir / "report.txt").string();
  out.report = report_text(out.scores);
  io::write_file(out.ranking_json, arr.dump(2) + "\n");
  io::write_file(out.report_txt, out.report);
  return out;
}

// ---- run ----

struct RunOutputs {
  SimulateOutputs sim;
  DetectOutputs det;
  EvaluateOutputs eval;
  std::string manifest_json;
};

inline RunOutputs cmd_run(const RunConfig& rc, const std::string& config_path, const fs::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutputs out;
  out.sim = cmd_simulate(rc.scenario, out_dir);
  out.det = cmd_detect(out.sim.trace_csv, out.sim.positions_csv, rc.detect, out_dir);
  out.eval = cmd_evaluate(out.det.verdicts_json, out.sim.ground_truth_json, rc.detect.grace_s, out_dir);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out.manifest_json = (out_dir / "manifest.json").string();
  nlohmann::json m{{"config", config_path},
                   {"seed", rc.scenario.seed},
                   {"run_id", out.sim.run_id},
                   {"out_dir", out_dir.string()},
                   {"tool_version", kToolVersion},
                   {"wall_clock_s", wall},
                   {"artifacts",
                    {{"trace_csv", out.sim.trace_csv},
                     {"positions_csv", out.sim.positions_csv},
                     {"ground_truth_json", out.sim.ground_truth_json},
                     {"metrics_csv", out.det.metrics_csv},
                     {"verdicts_json", out.det.verdicts_json},
                     {"heatmap_csv", out.det.heatmap_csv},
                     {"heatmap_pgm", out.det.heatmap_pgm},
                     {"localization_json", out.det.localization_json},
                     {"metric_registry_json", out.det.registry_json},
                     {"ranking_json", out.eval.ranking_json},
                     {"report_txt", out.eval.report_txt}}}};
  io::write_file(out.manifest_json, m.dump(2) + "\n");
  return out;
}

}  // namespace metadetect::pipeline
