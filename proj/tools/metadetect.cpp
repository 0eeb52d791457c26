// metadetect: simulate a UAV relay chain, detect link anomalies with
// metamorphic relations, localize them, and score the relations.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "metadetect/metadetect.hpp"

namespace md = metadetect;

namespace {

enum Exit { kOk = 0, kValidation = 2, kIo = 3 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::optional<double> window_s, tau, alpha;
  std::optional<std::string> corr;
  bool no_spline = false;
  int parallel = 1;
};

void add_detect_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--window-s", o.window_s, "metric window length in seconds");
  cmd->add_option("--tau", o.tau, "minimum |r| for a violation");
  cmd->add_option("--alpha", o.alpha, "significance level");
  cmd->add_option("--corr", o.corr, "correlation kind")->check(CLI::IsMember({"pearson", "spearman"}));
  cmd->add_flag("--no-spline", o.no_spline, "use per-window mean distance instead of the spline");
  cmd->add_option("--parallel", o.parallel, "worker threads for relation evaluation")->check(CLI::PositiveNumber);
}

md::config::RunConfig resolve(const Overrides& o) {
  md::config::RunConfig rc;
  if (!o.config.empty()) rc = md::pipeline::load_config_file(o.config);
  if (o.seed) rc.scenario.seed = *o.seed;
  auto& d = rc.detect;
  if (o.window_s) d.window_s = *o.window_s;
  for (auto& s : d.specs) {
    if (o.tau) s.tau = *o.tau;
    if (o.alpha) s.alpha = *o.alpha;
    if (o.corr) s.kind = md::mr::parse_corr_kind(*o.corr);
  }
  if (o.no_spline) d.spline = false;
  d.parallel = o.parallel;
  rc.scenario.validate();
  d.validate();
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metamorphic-relation anomaly detection for multi-hop UAV links"};
  app.require_subcommand(1);
  app.set_version_flag("--version", md::pipeline::kToolVersion);

  Overrides o;
  std::string trace, positions, verdicts, truth;
  double grace = -1.0;

  auto* sim = app.add_subcommand("simulate", "run the scenario and write trace, positions and ground truth");
  sim->add_option("--config", o.config, "scenario file")->required();
  sim->add_option("--seed", o.seed, "override the scenario seed");
  sim->add_option("--out-dir", o.out_dir, "output directory");

  auto* det = app.add_subcommand("detect", "compute metrics, relation verdicts and localization from a trace");
  det->add_option("trace", trace, "trace CSV")->required();
  det->add_option("positions", positions, "positions CSV (optional)");
  det->add_option("--config", o.config, "config file for detection settings");
  det->add_option("--out-dir", o.out_dir, "output directory");
  add_detect_flags(det, o);

  auto* eva = app.add_subcommand("evaluate", "score verdicts against ground truth");
  eva->add_option("verdicts", verdicts, "verdicts JSON")->required();
  eva->add_option("truth", truth, "ground truth JSON")->required();
  eva->add_option("--config", o.config, "config file (for grace_s)");
  eva->add_option("--grace-s", grace, "seconds after an event still counted as a hit");
  eva->add_option("--out-dir", o.out_dir, "output directory");

  auto* run = app.add_subcommand("run", "simulate, detect and evaluate in one go");
  run->add_option("--config", o.config, "scenario file")->required();
  run->add_option("--seed", o.seed, "override the scenario seed");
  run->add_option("--out-dir", o.out_dir, "output directory");
  add_detect_flags(run, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    const auto rc = resolve(o);
    if (*sim) {
      auto out = md::pipeline::cmd_simulate(rc.scenario, o.out_dir);
      std::printf("run %s: %zu records -> %s\n", out.run_id.c_str(), out.result.records.size(), o.out_dir.c_str());
    } else if (*det) {
      auto out = md::pipeline::cmd_detect(trace, positions, rc.detect, o.out_dir);
      int violations = 0;
      for (const auto& v : out.result.verdicts) violations += v.violated;
      std::printf("%zu windows, %zu verdicts (%d violated)\n", out.result.windows.size(), out.result.verdicts.size(),
                  violations);
      const auto& loc = out.result.localization;
      if (loc && loc->node)
        std::printf("localized: node %d, onset %.1f s, confidence %.2f\n", *loc->node, loc->onset_time_s,
                    loc->confidence);
      else
        std::printf("localized: no anomaly\n");
    } else if (*eva) {
      const double g = grace >= 0.0 ? grace : rc.detect.grace_s;
      auto out = md::pipeline::cmd_evaluate(verdicts, truth, g, o.out_dir);
      std::fputs(out.report.c_str(), stdout);
    } else if (*run) {
      auto out = md::pipeline::cmd_run(rc, o.config, o.out_dir);
      std::fputs(out.eval.report.c_str(), stdout);
      const auto& loc = out.det.result.localization;
      if (loc && loc->node)
        std::printf("localized: node %d, onset %.1f s\n", *loc->node, loc->onset_time_s);
      else
        std::printf("localized: no anomaly\n");
      std::printf("manifest: %s\n", out.manifest_json.c_str());
    }
  } catch (const md::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const md::InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const md::OutOfRange& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  }
  return kOk;
}
