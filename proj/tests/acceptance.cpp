// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Run from the repository root (reads configs/).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "metadetect/metadetect.hpp"

using namespace metadetect;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what) {
  std::printf("CRITERION %d %s: %s\n", id, ok ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  failures += !ok;
}

std::string f3(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

// ---- scenario runs ----

bool conservation_ok = true;
int conservation_runs = 0;

// Every generated packet is accounted for exactly once on the first link, and
// each link forwards exactly what the previous one delivered.
void check_conservation(const sim::SimulationResult& r, int n_nodes) {
  ++conservation_runs;
  std::map<sim::LinkId, std::int64_t> total, delivered;
  for (const auto& rec : r.records) {
    ++total[rec.link];
    delivered[rec.link] += rec.outcome == sim::Outcome::Delivered;
  }
  std::int64_t arriving = r.generated;
  for (const auto& l : sim::chain_links(n_nodes)) {
    if (total[l] != arriving) conservation_ok = false;
    arriving = delivered[l];
  }
  if (arriving != r.delivered_to_sink) conservation_ok = false;
}

struct Run {
  pipeline::DetectResult det;
  std::vector<mr::MrScore> scores;
  sim::GroundTruthLog truth;
};

Run run_scenario(const config::RunConfig& rc, std::uint64_t seed) {
  auto sc = rc.scenario;
  sc.seed = seed;
  auto sim = sim::run_simulation(sc);
  check_conservation(sim, sc.n_nodes);
  Run out;
  out.det = pipeline::detect(sim.records, sim.positions, rc.detect);
  out.scores = mr::rank_mrs(out.det.verdicts, sim.truth, rc.detect.grace_s);
  out.truth = sim.truth;
  return out;
}

const mr::MrScore* score_of(const Run& r, const std::string& mr) {
  for (const auto& s : r.scores)
    if (s.mr == mr) return &s;
  return nullptr;
}

// Violated share of windows per relation, over verdicts ending by `t_max`.
std::map<std::string, std::pair<int, int>> violation_counts(const Run& r, double t_max) {
  std::map<std::string, std::pair<int, int>> out;
  for (const auto& v : r.det.verdicts)
    if (v.t_end <= t_max) {
      out[v.mr].first += v.violated;
      ++out[v.mr].second;
    }
  return out;
}

bool localized_node2(const Run& r) {
  const auto& l = r.det.localization;
  return l && l->node == 2 && l->onset_time_s >= 100.0 && l->onset_time_s <= 105.0;
}

// ---- independent oracles ----

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i], sy += y[i], sxy += x[i] * y[i], sxx += x[i] * x[i], syy += y[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Tie-free data only.
double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  auto rank = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i + 1);
    return r;
  };
  const auto rx = rank(x), ry = rank(y);
  const double n = static_cast<double>(x.size());
  double d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1));
}

std::vector<double> residualize(const std::vector<double>& v, const std::vector<double>& z) {
  const double n = static_cast<double>(v.size());
  const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n, mz = std::accumulate(z.begin(), z.end(), 0.0) / n;
  double szv = 0, szz = 0;
  for (std::size_t i = 0; i < v.size(); ++i) szv += (z[i] - mz) * (v[i] - mv), szz += (z[i] - mz) * (z[i] - mz);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - mv - szv / szz * (z[i] - mz);
  return out;
}

// CPDF straight from the definition: for lag k, every attempt whose k
// predecessors are all successes (k > 0) or all failures (k < 0).
std::vector<double> cpdf_oracle(const std::vector<bool>& v, int lags) {
  const double prr = static_cast<double>(std::count(v.begin(), v.end(), true)) / static_cast<double>(v.size());
  auto cond = [&](int k, bool want) {
    int hit = 0, tot = 0;
    for (std::size_t i = static_cast<std::size_t>(k); i < v.size(); ++i) {
      bool all = true;
      for (int j = 1; j <= k; ++j) all = all && v[i - static_cast<std::size_t>(j)] == want;
      if (all) ++tot, hit += v[i];
    }
    return tot ? static_cast<double>(hit) / tot : prr;
  };
  std::vector<double> out;
  for (int k = lags; k >= 1; --k) out.push_back(cond(k, false));
  for (int k = 1; k <= lags; ++k) out.push_back(cond(k, true));
  return out;
}

// Natural cubic spline in slope form, dense Gaussian elimination, Hermite evaluation.
struct SplineOracle {
  std::vector<double> t, y, s;
  SplineOracle(std::vector<double> tt, std::vector<double> yy) : t(std::move(tt)), y(std::move(yy)) {
    const std::size_t n = t.size();
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
    auto h = [&](std::size_t i) { return t[i + 1] - t[i]; };
    auto d = [&](std::size_t i) { return (y[i + 1] - y[i]) / h(i); };
    a[0][0] = 2, a[0][1] = 1, a[0][n] = 3 * d(0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      a[i][i - 1] = h(i);
      a[i][i] = 2 * (h(i - 1) + h(i));
      a[i][i + 1] = h(i - 1);
      a[i][n] = 3 * (h(i) * d(i - 1) + h(i - 1) * d(i));
    }
    a[n - 1][n - 2] = 1, a[n - 1][n - 1] = 2, a[n - 1][n] = 3 * d(n - 2);
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t p = c;
      for (std::size_t r = c + 1; r < n; ++r)
        if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
      std::swap(a[c], a[p]);
      for (std::size_t r = 0; r < n; ++r) {
        if (r == c) continue;
        const double f = a[r][c] / a[c][c];
        for (std::size_t k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
      }
    }
    s.resize(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = a[i][n] / a[i][i];
  }
  double operator()(double q) const {
    std::size_t i = 0;
    while (i + 2 < t.size() && q > t[i + 1]) ++i;
    const double h = t[i + 1] - t[i], u = (q - t[i]) / h;
    return (2 * u * u * u - 3 * u * u + 1) * y[i] + (u * u * u - 2 * u * u + u) * h * s[i] +
           (-2 * u * u * u + 3 * u * u) * y[i + 1] + (u * u * u - u * u) * h * s[i + 1];
  }
};

// ---- criteria ----

void scenario_criteria() {
  const auto fail_cfg = pipeline::load_config_file("configs/default.toml");
  const auto base_cfg = pipeline::load_config_file("configs/baseline.toml");
  const double alpha = 0.05;

  // 1: single run at the configured seed, timed end to end through the CLI path.
  {
    const auto dir = std::filesystem::temp_directory_path() / "metadetect_acceptance";
    std::filesystem::remove_all(dir);
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = pipeline::cmd_run(fail_cfg, "configs/default.toml", dir);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    check_conservation(out.sim.result, fail_cfg.scenario.n_nodes);
    Run r{out.det.result, out.eval.scores, out.sim.result.truth};

    bool ok = wall <= 10.0;
    std::string msg = "wall " + f3(wall) + " s";
    for (const char* name : {"MR8", "MR7"}) {
      const auto* s = score_of(r, name);
      const bool hit = s && s->detected_pairs > 0 && s->mean_delay_s && *s->mean_delay_s <= 5.0;
      ok = ok && hit;
      msg += std::string("; ") + name + " delay " + (s && s->mean_delay_s ? f3(*s->mean_delay_s) : "none") + " s";
    }
    double worst = 0.0;
    for (const auto& [mr, c] : violation_counts(r, 100.0)) worst = std::max(worst, c.second ? double(c.first) / c.second : 0.0);
    ok = ok && worst <= 2 * alpha;
    msg += "; worst pre-onset violation rate " + f3(worst);
    report(1, ok, msg);
    std::filesystem::remove_all(dir);
  }

  // 2, 3: twenty failure seeds.
  double qd_sum = 0, th_sum = 0, th_recall = 0;
  int qd_n = 0, th_n = 0, loc_ok = 0;
  for (int i = 0; i < 20; ++i) {
    const auto r = run_scenario(fail_cfg, fail_cfg.scenario.seed + static_cast<std::uint64_t>(i));
    const auto* th = score_of(r, "MR7");
    const auto* qd = score_of(r, "MRQD");
    if (th && th->recall) th_recall += *th->recall;
    if (th && th->mean_delay_s) th_sum += *th->mean_delay_s, ++th_n;
    if (qd && qd->mean_delay_s) qd_sum += *qd->mean_delay_s, ++qd_n;
    loc_ok += localized_node2(r);
  }
  th_recall /= 20.0;
  const double th_delay = th_n ? th_sum / th_n : INFINITY;
  const double qd_delay = qd_n ? qd_sum / qd_n : INFINITY;
  report(2, th_n > 0 && th_delay <= qd_delay && th_recall >= 0.9,
         "throughput relation mean delay " + f3(th_delay) + " s over " + std::to_string(th_n) +
             " seeds, queue-drop relation " + f3(qd_delay) + " s over " + std::to_string(qd_n) +
             " seeds, throughput recall " + f3(th_recall));
  report(3, loc_ok >= 18, "node 2 with onset in [100,105] s in " + std::to_string(loc_ok) + "/20 seeds");

  // 4: twenty anomaly-free seeds.
  std::map<std::string, std::pair<int, int>> viol;
  int quiet = 0;
  for (int i = 0; i < 20; ++i) {
    const auto r = run_scenario(base_cfg, base_cfg.scenario.seed + static_cast<std::uint64_t>(i));
    for (const auto& [mr, c] : violation_counts(r, INFINITY)) viol[mr].first += c.first, viol[mr].second += c.second;
    quiet += !r.det.localization.has_value();
  }
  double worst = 0.0;
  std::string worst_mr;
  for (const auto& [mr, c] : viol) {
    const double rate = c.second ? double(c.first) / c.second : 0.0;
    if (rate >= worst) worst = rate, worst_mr = mr;
  }
  report(4, worst <= 2 * alpha && quiet >= 19,
         "worst window violation rate " + f3(worst) + " (" + worst_mr + "), no localization in " +
             std::to_string(quiet) + "/20 runs");

  // 9: determinism plus conservation over every run above.
  const auto a = sim::run_simulation(fail_cfg.scenario), b = sim::run_simulation(fail_cfg.scenario);
  check_conservation(a, fail_cfg.scenario.n_nodes);
  const bool same = io::trace_csv(a.records) == io::trace_csv(b.records);
  report(9, same && conservation_ok,
         std::string("trace CSV ") + (same ? "byte-identical" : "differs") + " on rerun; conservation " +
             (conservation_ok ? "holds" : "broken") + " on " + std::to_string(conservation_runs) + " runs");
}

void kernel_criteria() {
  Rng rng(2024);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // 5
  double err_p = 0, err_s = 0, err_partial = 0, err_cpdf = 0, err_kw = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(50), y(50), z(50), t(50);
    for (int i = 0; i < 50; ++i) {
      z[i] = g(rng);
      t[i] = i + 0.3 * g(rng);
      x[i] = g(rng) + 0.4 * z[i];
      y[i] = 0.5 * x[i] + g(rng);
    }
    err_p = std::max(err_p, std::abs(mr::pearson(x, y)->r - pearson_oracle(x, y)));
    err_s = std::max(err_s, std::abs(mr::spearman(x, y)->r - spearman_oracle(x, y)));
    const double want = pearson_oracle(residualize(t, z), residualize(x, z));
    err_partial = std::max(err_partial, std::abs(mr::partial_corr_trend(t, x, z)->r - want));
  }
  // every delivery vector of length 1..12, then random ones up to 20
  auto check_cpdf = [&](const std::vector<bool>& v) {
    for (int lags : {1, 3, 5}) {
      const auto got = *metrics::cpdf(v, lags), want = cpdf_oracle(v, lags);
      for (std::size_t k = 0; k < got.size(); ++k) err_cpdf = std::max(err_cpdf, std::abs(got[k] - want[k]));
    }
  };
  for (int n = 1; n <= 12; ++n)
    for (unsigned bits = 0; bits < (1u << n); ++bits) {
      std::vector<bool> v(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = (bits >> i) & 1u;
      check_cpdf(v);
    }
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<bool> v(13 + trial % 8);
    for (auto&& b : v) b = u(rng) < 0.6;
    check_cpdf(v);
    std::vector<double> p(v.size()), q(v.size());
    double brute = 0;
    for (std::size_t i = 0; i < v.size(); ++i) p[i] = u(rng), q[i] = u(rng), brute += std::abs(p[i] - q[i]);
    err_kw = std::max(err_kw, std::abs(metrics::kw_distance(p, q) - brute / static_cast<double>(v.size())));
  }
  report(5, err_p <= 1e-12 && err_s <= 1e-12 && err_partial <= 1e-9 && err_cpdf <= 1e-12 && err_kw <= 1e-12,
         "max error pearson " + f3(err_p) + ", spearman " + f3(err_s) + ", partial " + f3(err_partial) + ", cpdf " +
             f3(err_cpdf) + ", kw " + f3(err_kw));

  // 6
  bool in_range = true;
  int defined = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    // two-state Markov chain with random stickiness
    const double p_ss = u(rng), p_ff = u(rng);
    std::vector<bool> v(10 + static_cast<std::size_t>(u(rng) * 490));
    bool s = u(rng) < 0.5;
    for (auto&& b : v) {
      s = u(rng) < (s ? p_ss : 1.0 - p_ff);
      b = s;
    }
    if (const auto beta = metrics::beta_factor(v, 5)) {
      ++defined;
      in_range = in_range && *beta >= 0.0 && *beta <= 1.0;
    }
  }
  std::vector<bool> iid(10000), bursty(10000);
  for (auto&& b : iid) b = u(rng) < 0.5;
  for (std::size_t i = 0; i < 5000; ++i) bursty[i] = true;
  const double b_iid = metrics::beta_factor(iid, 5).value_or(NAN), b_bursty = metrics::beta_factor(bursty, 5).value_or(NAN);
  report(6, in_range && defined > 900 && b_iid < 0.1 && b_bursty > 0.9,
         "beta in [0,1] on " + std::to_string(defined) + " defined random vectors, iid " + f3(b_iid) + ", bursty " +
             f3(b_bursty));

  // 7
  int identical = 0;
  for (int trial = 0; trial < 100; ++trial) {
    localize::HeatMap m(5 + trial % 20, 3 + trial % 6);
    for (auto& v : m.cells) v = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    auto lin = m, ex = m;
    for (auto& v : lin.cells) v = 3 * v + 11;
    for (auto& v : ex.cells) v = std::exp(v);
    const int patch = trial % 2 == 0 && m.cols >= 5 ? 5 : 3;
    const auto r = localize::rank_transform(m, patch);
    const auto c = localize::census_transform(m, patch);
    identical += r.cells == localize::rank_transform(lin, patch).cells &&
                 r.cells == localize::rank_transform(ex, patch).cells &&
                 localize::hamming(c, localize::census_transform(lin, patch)) == 0 &&
                 localize::hamming(c, localize::census_transform(ex, patch)) == 0;
  }
  report(7, identical == 100, std::to_string(identical) + "/100 maps identical under 3v+11 and exp(v)");

  // 8
  using preprocess::MeasurementLevel;
  using preprocess::MeasurementType;
  struct Row {
    const char* name;
    MeasurementType type;
    MeasurementLevel level;
    double fill;
  };
  const double inf = INFINITY;
  const Row table[] = {
      {"rssi_dbm", MeasurementType::Numerical, MeasurementLevel::Ratio, 0.0},
      {"lqi", MeasurementType::Numerical, MeasurementLevel::Interval, 0.0},
      {"sinr_db", MeasurementType::Numerical, MeasurementLevel::Ratio, 0.0},
      {"pcr", MeasurementType::Numerical, MeasurementLevel::Ratio, 1.0},
      {"sh_delay_s", MeasurementType::Numerical, MeasurementLevel::Ratio, inf},
      {"sh_jitter_s", MeasurementType::Numerical, MeasurementLevel::Ratio, inf},
      {"sh_throughput_bps", MeasurementType::Numerical, MeasurementLevel::Ratio, 0.0},
      {"sh_prr", MeasurementType::Numerical, MeasurementLevel::Ratio, 0.0},
      {"beta", MeasurementType::Categorical, MeasurementLevel::Nominal, 0.0},
      {"distance_m", MeasurementType::Numerical, MeasurementLevel::Ratio, inf},
  };
  int rows_ok = 0;
  for (const auto& row : table) {
    const auto& d = preprocess::descriptor(row.name);
    preprocess::MetricSeries s{row.name, {0, 1, 2}, {0.5, NAN, 0.25}};
    const double got = preprocess::impute(s, 10.0).values[1];
    const double want = std::isinf(row.fill) ? 10.0 * 0.5 : row.fill;
    rows_ok += d.type == row.type && d.level == row.level && d.imputation_value == row.fill && got == want;
  }
  double knot_err = 0, oracle_err = 0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> t{0.0}, y{g(rng)};
    for (int i = 1; i < 12; ++i) t.push_back(t.back() + 0.2 + u(rng)), y.push_back(g(rng) * 10);
    const preprocess::NaturalSpline sp(t, y);
    const SplineOracle oracle(t, y);
    for (std::size_t i = 0; i < t.size(); ++i) knot_err = std::max(knot_err, std::abs(sp(t[i]) - y[i]));
    for (int q = 0; q < 100; ++q) {
      const double x = t.front() + (t.back() - t.front()) * (q + 0.5) / 100.0;
      oracle_err = std::max(oracle_err, std::abs(sp(x) - oracle(x)));
    }
  }
  report(8, rows_ok == 10 && knot_err <= 1e-9 && oracle_err <= 1e-9,
         std::to_string(rows_ok) + "/10 imputation rows, knot error " + f3(knot_err) + ", oracle error " +
             f3(oracle_err) + " at 1000 interior queries");
}

}  // namespace

int main() {
  try {
    kernel_criteria();
    scenario_criteria();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  return failures ? 1 : 0;
}
