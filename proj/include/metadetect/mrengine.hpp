#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"
#include "metadetect/errors.hpp"
#include "metadetect/preprocess.hpp"
#include "metadetect/simcore.hpp"

namespace metadetect::mr {

using preprocess::MetricSeries;
using sim::LinkId;

enum class CorrKind { Pearson, Spearman };

inline std::string to_string(CorrKind k) { return k == CorrKind::Pearson ? "pearson" : "spearman"; }
inline CorrKind parse_corr_kind(std::string_view s) {
  if (s == "pearson") return CorrKind::Pearson;
  if (s == "spearman") return CorrKind::Spearman;
  throw InvalidArgument("unknown correlation kind '" + std::string(s) + "'");
}

struct Correlation {
  double r = 0.0;
  double p = 1.0;
};

/// Two-sided p-value of a correlation coefficient via Student's t.
inline double corr_p_value(double r, double dof) {
  if (dof < 1) return 1.0;
  const double r2 = r * r;
  if (r2 >= 1.0) return 0.0;
  const double t = std::abs(r) * std::sqrt(dof / (1.0 - r2));
  boost::math::students_t dist(dof);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

namespace detail {
inline void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_n, const char* who) {
  if (x.size() != y.size()) throw InvalidArgument(std::string(who) + ": length mismatch");
  if (x.size() < min_n) throw InvalidArgument(std::string(who) + ": too few samples");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InvalidArgument(std::string(who) + ": non-finite sample");
}

inline std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // relative guard against values that only differ by rounding noise
  const double scale_x = std::max(1.0, mx * mx) * n, scale_y = std::max(1.0, my * my) * n;
  if (sxx <= 1e-24 * scale_x || syy <= 1e-24 * scale_y) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}
}  // namespace detail

/// Average ranks (1-based) with ties sharing the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

/// nullopt when either input has zero variance.
inline std::optional<Correlation> pearson(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y, 3, "pearson");
  auto r = detail::pearson_r(x, y);
  if (!r) return std::nullopt;
  return Correlation{*r, corr_p_value(*r, static_cast<double>(x.size()) - 2.0)};
}

inline std::optional<Correlation> spearman(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y, 3, "spearman");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  auto r = detail::pearson_r(rx, ry);
  if (!r) return std::nullopt;
  return Correlation{*r, corr_p_value(*r, static_cast<double>(x.size()) - 2.0)};
}

inline std::optional<Correlation> correlate(CorrKind k, std::span<const double> x, std::span<const double> y) {
  return k == CorrKind::Pearson ? pearson(x, y) : spearman(x, y);
}

/// Trend of x over t with z partialled out; p-value on n-3 degrees of freedom.
inline std::optional<Correlation> partial_corr_trend(std::span<const double> t, std::span<const double> x,
                                                     std::span<const double> z, CorrKind kind = CorrKind::Pearson) {
  detail::check_pair(t, x, 4, "partial_corr_trend");
  detail::check_pair(t, z, 4, "partial_corr_trend");
  const auto tx = correlate(kind, t, x), tz = correlate(kind, t, z), xz = correlate(kind, x, z);
  if (!tx || !tz || !xz) return std::nullopt;
  const double denom = (1.0 - tz->r * tz->r) * (1.0 - xz->r * xz->r);
  if (denom <= 1e-15) return std::nullopt;
  const double r = std::clamp((tx->r - tz->r * xz->r) / std::sqrt(denom), -1.0, 1.0);
  return Correlation{r, corr_p_value(r, static_cast<double>(t.size()) - 3.0)};
}

struct MrSpec {
  std::string id;
  std::string metric;
  int anomalous_sign = +1;
  bool use_differences = false;
  CorrKind kind = CorrKind::Spearman;
  double tau = 0.5;
  double alpha = 0.05;
  int window_len = 30;
  int step = 1;

  void validate() const {
    if (anomalous_sign != 1 && anomalous_sign != -1) throw InvalidArgument(id + ": anomalous_sign must be +1 or -1");
    if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument(id + ": tau must be in (0,1]");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument(id + ": alpha must be in (0,1)");
    if (window_len < 5) throw InvalidArgument(id + ": window_len must be >= 5");
    if (step < 1) throw InvalidArgument(id + ": step must be >= 1");
  }
};

inline const char* kQueueDropMr = "MRQD";

/// MR1..MR9 plus the queue-drop auxiliary relation.
inline std::vector<MrSpec> default_mr_specs() {
  std::vector<MrSpec> specs{
      {"MR1", "rssi_dbm", +1},          {"MR2", "lqi", +1},    {"MR3", "sinr_db", -1},
      {"MR4", "pcr", -1},               {"MR5", "sh_delay_s", -1}, {"MR6", "sh_jitter_s", -1, true},
      {"MR7", "sh_throughput_bps", +1}, {"MR8", "sh_prr", +1}, {"MR9", "beta", +1},
      {kQueueDropMr, "queue_drop_count", -1},
  };
  return specs;
}

struct MrVerdict {
  std::string mr;
  LinkId link;
  int window = 0;          // index of the sliding window
  double t_start = 0.0;    // start of the oldest metric window in the span
  double t_end = 0.0;      // end of the newest metric window in the span
  double t_detect = 0.0;   // start of the newest metric window
  std::optional<double> r;
  std::optional<double> p;
  std::optional<double> r_trend;
  bool violated = false;
};

inline bool violates(const MrSpec& spec, double r, double p) {
  const int sign = r > 0 ? 1 : (r < 0 ? -1 : 0);
  return sign == spec.anomalous_sign && std::abs(r) >= spec.tau && p <= spec.alpha;
}

/// Slide the spec's window over a metric series and the matching distance
/// series. Both must already be imputed and on the same grid.
inline std::vector<MrVerdict> evaluate_mr(const MrSpec& spec, const MetricSeries& metric, const MetricSeries& distance,
                                          const LinkId& link = {}) {
  spec.validate();
  metric.validate();
  distance.validate();
  if (metric.size() != distance.size()) throw InvalidArgument("evaluate_mr: series lengths differ");
  const double tol = 1e-9 * std::max(1.0, std::abs(metric.step()));
  for (std::size_t i = 0; i < metric.size(); ++i)
    if (std::abs(metric.times[i] - distance.times[i]) > tol) throw InvalidArgument("evaluate_mr: series are not aligned");
  for (std::size_t i = 0; i < metric.size(); ++i)
    if (!std::isfinite(metric.values[i]) || !std::isfinite(distance.values[i]))
      throw InvalidArgument("evaluate_mr: series contain missing values (impute first)");

  if (metric.size() < 2) return {};
  const double h = metric.step();
  const MetricSeries x = spec.use_differences ? preprocess::difference(metric) : metric;
  const MetricSeries z = spec.use_differences ? preprocess::difference(distance) : distance;
  const auto len = static_cast<std::size_t>(spec.window_len);
  if (x.size() < len) return {};

  // a differenced sample at t_i spans the metric windows i-1 and i
  const double back = spec.use_differences ? h : 0.0;
  std::vector<MrVerdict> out;
  std::vector<double> tt(len);
  for (std::size_t s = 0, w = 0; s + len <= x.size(); s += static_cast<std::size_t>(spec.step), ++w) {
    std::span<const double> xs(x.values.data() + s, len), zs(z.values.data() + s, len);
    MrVerdict v;
    v.mr = spec.id;
    v.link = link;
    v.window = static_cast<int>(w);
    v.t_start = x.times[s] - back;
    v.t_detect = x.times[s + len - 1];
    v.t_end = v.t_detect + h;
    if (auto c = correlate(spec.kind, xs, zs)) {
      v.r = c->r;
      v.p = c->p;
      v.violated = violates(spec, c->r, c->p);
    }
    std::copy(x.times.begin() + static_cast<std::ptrdiff_t>(s), x.times.begin() + static_cast<std::ptrdiff_t>(s + len),
              tt.begin());
    if (auto pt = partial_corr_trend(tt, xs, zs, spec.kind)) v.r_trend = pt->r;
    out.push_back(std::move(v));
  }
  return out;
}

struct MrScore {
  std::string mr;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> mean_delay_s;
  int violations = 0;
  int true_positives = 0;
  int windows = 0;
  int detected_pairs = 0;
  int total_pairs = 0;
};

inline bool overlaps_event(const MrVerdict& v, const sim::AnomalyEvent& e, double grace_s) {
  return v.t_end > e.t_start && v.t_start < e.t_end + grace_s;
}

/// Per-MR precision, recall over (event, affected link) pairs, and mean
/// detection delay; sorted by recall desc, delay asc, precision desc.
inline std::vector<MrScore> rank_mrs(std::span<const MrVerdict> verdicts, const sim::GroundTruthLog& truth,
                                     double grace_s = 5.0) {
  std::vector<std::string> ids;
  for (const auto& v : verdicts)
    if (std::find(ids.begin(), ids.end(), v.mr) == ids.end()) ids.push_back(v.mr);

  auto true_positive_for = [&](const MrVerdict& v, const sim::GroundTruthEntry& g) {
    if (std::find(g.affected.begin(), g.affected.end(), v.link) == g.affected.end()) return false;
    return overlaps_event(v, g.event, grace_s);
  };

  std::vector<MrScore> scores;
  for (const auto& id : ids) {
    MrScore s;
    s.mr = id;
    for (const auto& v : verdicts) {
      if (v.mr != id) continue;
      ++s.windows;
      if (!v.violated) continue;
      ++s.violations;
      for (const auto& g : truth.entries)
        if (true_positive_for(v, g)) {
          ++s.true_positives;
          break;
        }
    }
    if (s.violations > 0) s.precision = static_cast<double>(s.true_positives) / s.violations;

    double delay_sum = 0.0;
    for (const auto& g : truth.entries) {
      for (const auto& link : g.affected) {
        ++s.total_pairs;
        std::optional<double> best;
        for (const auto& v : verdicts) {
          if (v.mr != id || !v.violated || !(v.link == link) || !overlaps_event(v, g.event, grace_s)) continue;
          const double d = std::max(0.0, v.t_detect - g.event.t_start);
          if (!best || d < *best) best = d;
        }
        if (best) {
          ++s.detected_pairs;
          delay_sum += *best;
        }
      }
    }
    if (s.total_pairs > 0) s.recall = static_cast<double>(s.detected_pairs) / s.total_pairs;
    if (s.detected_pairs > 0) s.mean_delay_s = delay_sum / s.detected_pairs;
    scores.push_back(std::move(s));
  }

  auto key_desc = [](const std::optional<double>& a, const std::optional<double>& b) {
    if (a.has_value() != b.has_value()) return a.has_value() ? -1 : 1;
    if (!a) return 0;
    return *a > *b ? -1 : (*a < *b ? 1 : 0);
  };
  std::stable_sort(scores.begin(), scores.end(), [&](const MrScore& a, const MrScore& b) {
    if (int c = key_desc(a.recall, b.recall)) return c < 0;
    if (a.mean_delay_s.has_value() != b.mean_delay_s.has_value()) return a.mean_delay_s.has_value();
    if (a.mean_delay_s && *a.mean_delay_s != *b.mean_delay_s) return *a.mean_delay_s < *b.mean_delay_s;
    return key_desc(a.precision, b.precision) < 0;
  });
  return scores;
}

// ---- JSON ----

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }
inline std::optional<double> json_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline nlohmann::json to_json(const MrVerdict& v) {
  return {{"mr", v.mr},           {"link", v.link.str()}, {"window", v.window},   {"t_start", v.t_start},
          {"t_end", v.t_end},     {"t_detect", v.t_detect}, {"r", opt_json(v.r)}, {"p", opt_json(v.p)},
          {"r_trend", opt_json(v.r_trend)}, {"violated", v.violated}};
}

inline MrVerdict verdict_from_json(const nlohmann::json& j) {
  MrVerdict v;
  v.mr = j.at("mr").get<std::string>();
  v.link = sim::parse_link(j.at("link").get<std::string>());
  v.window = j.value("window", 0);
  v.t_start = j.at("t_start").get<double>();
  v.t_end = j.at("t_end").get<double>();
  v.t_detect = j.contains("t_detect") ? j.at("t_detect").get<double>() : v.t_start;
  v.r = json_opt(j, "r");
  v.p = json_opt(j, "p");
  v.r_trend = json_opt(j, "r_trend");
  v.violated = j.at("violated").get<bool>();
  return v;
}

inline nlohmann::json to_json(const MrScore& s) {
  return {{"mr", s.mr},
          {"precision", opt_json(s.precision)},
          {"recall", opt_json(s.recall)},
          {"mean_delay_s", opt_json(s.mean_delay_s)},
          {"violations", s.violations},
          {"true_positives", s.true_positives},
          {"windows", s.windows},
          {"detected_pairs", s.detected_pairs},
          {"total_pairs", s.total_pairs}};
}

}  // namespace metadetect::mr
