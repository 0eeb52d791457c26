#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "metadetect/errors.hpp"
#include "metadetect/metrics.hpp"

namespace metadetect::preprocess {

enum class MeasurementType { Numerical, Categorical };
enum class MeasurementLevel { Ratio, Interval, Nominal };

inline std::string to_string(MeasurementType t) { return t == MeasurementType::Numerical ? "numerical" : "categorical"; }
inline std::string to_string(MeasurementLevel l) {
  switch (l) {
    case MeasurementLevel::Ratio: return "ratio";
    case MeasurementLevel::Interval: return "interval";
    case MeasurementLevel::Nominal: return "nominal";
  }
  return "?";
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct MetricDescriptor {
  std::string name;     // column name in the metric windows
  std::string display;  // short human label
  MeasurementType type = MeasurementType::Numerical;
  MeasurementLevel level = MeasurementLevel::Ratio;
  double imputation_value = 0.0;  // +inf means "use the finite cap"
  int anomalous_corr_sign = 0;    // 0 for the covariate itself
  bool differenced = false;
};

/// Ten rows: the nine link metrics plus distance. beta is stored as
/// categorical but correlated as a number in [0,1].
inline const std::vector<MetricDescriptor>& descriptor_registry() {
  using T = MeasurementType;
  using L = MeasurementLevel;
  static const std::vector<MetricDescriptor> reg{
      {"rssi_dbm", "Phy-RSSI", T::Numerical, L::Ratio, 0.0, +1, false},
      {"lqi", "Phy-LQI", T::Numerical, L::Interval, 0.0, +1, false},
      {"sinr_db", "Phy-SNR", T::Numerical, L::Ratio, 0.0, -1, false},
      {"pcr", "Phy-PCR", T::Numerical, L::Ratio, 1.0, -1, false},
      {"sh_delay_s", "SH-Delay", T::Numerical, L::Ratio, kInf, -1, false},
      {"sh_jitter_s", "SH-Jitter", T::Numerical, L::Ratio, kInf, -1, true},
      {"sh_throughput_bps", "SH-Throughput", T::Numerical, L::Ratio, 0.0, +1, false},
      {"sh_prr", "SH-PRR", T::Numerical, L::Ratio, 0.0, +1, false},
      {"beta", "beta-factor", T::Categorical, L::Nominal, 0.0, +1, false},
      {"distance_m", "Distance", T::Numerical, L::Ratio, kInf, 0, false},
  };
  return reg;
}

inline const MetricDescriptor& descriptor(std::string_view name) {
  for (const auto& d : descriptor_registry())
    if (d.name == name) return d;
  throw InvalidArgument("no descriptor for metric '" + std::string(name) + "'");
}

inline nlohmann::json registry_json() {
  auto arr = nlohmann::json::array();
  for (const auto& d : descriptor_registry()) {
    nlohmann::json j{{"name", d.name},
                     {"display", d.display},
                     {"measurement_type", to_string(d.type)},
                     {"level", to_string(d.level)},
                     {"anomalous_corr_sign", d.anomalous_corr_sign},
                     {"differenced", d.differenced}};
    if (std::isinf(d.imputation_value))
      j["imputation_value"] = "+inf";
    else
      j["imputation_value"] = d.imputation_value;
    arr.push_back(std::move(j));
  }
  return arr;
}

/// Uniformly sampled series; NaN marks a missing value.
struct MetricSeries {
  std::string metric;
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double step() const { return times.size() >= 2 ? times[1] - times[0] : 0.0; }

  void validate() const {
    if (times.size() != values.size()) throw InvalidArgument("series '" + metric + "': times/values length mismatch");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw InvalidArgument("series '" + metric + "': times not increasing");
    if (times.size() >= 3) {
      const double h = step();
      for (std::size_t i = 2; i < times.size(); ++i)
        if (std::abs((times[i] - times[i - 1]) - h) > 1e-9 * std::max(1.0, std::abs(h)))
          throw InvalidArgument("series '" + metric + "': grid not uniform");
    }
  }
};

/// Pull one metric for one link out of window output, keyed by window start.
inline MetricSeries series_from_windows(std::span<const metrics::MetricWindow> windows, const sim::LinkId& link,
                                        const std::string& metric) {
  MetricSeries s{metric, {}, {}};
  for (const auto& w : windows) {
    if (!(w.link == link)) continue;
    s.times.push_back(w.t_start);
    s.values.push_back(metrics::metric_value(w, metric));
  }
  return s;
}

/// Finite stand-in for +inf: factor x the largest positive finite value,
/// or 1 when there is none.
inline double infinity_cap(std::span<const double> values, double factor = 10.0) {
  double mx = 0.0;
  bool any = false;
  for (double v : values)
    if (std::isfinite(v) && v > 0.0) mx = any ? std::max(mx, v) : v, any = true;
  return any ? factor * mx : 1.0;
}

inline MetricSeries impute(const MetricSeries& s, const MetricDescriptor& d, double cap_factor = 10.0) {
  if (s.metric != d.name)
    throw InvalidArgument("impute: descriptor '" + d.name + "' does not match series '" + s.metric + "'");
  MetricSeries out = s;
  double fill = d.imputation_value;
  if (std::isinf(fill)) fill = infinity_cap(s.values, cap_factor);
  for (double& v : out.values) {
    if (std::isnan(v))
      v = fill;
    else if (std::isinf(v))
      v = v > 0 ? infinity_cap(s.values, cap_factor) : -infinity_cap(s.values, cap_factor);
  }
  return out;
}

/// Queue-side counters are defined in every window and carry no descriptor.
inline bool is_auxiliary_metric(std::string_view name) {
  return name == "queue_drop_count" || name == "queue_occupancy" || name == "packets_received" || name == "n_packets";
}

inline MetricSeries impute(const MetricSeries& s, double cap_factor = 10.0) {
  if (is_auxiliary_metric(s.metric)) {
    for (double v : s.values)
      if (!std::isfinite(v)) throw InvalidArgument("impute: auxiliary metric '" + s.metric + "' has missing values");
    return s;
  }
  return impute(s, descriptor(s.metric), cap_factor);
}

inline MetricSeries difference(const MetricSeries& s) {
  if (s.size() < 2) throw InvalidArgument("difference: need at least 2 points");
  MetricSeries out{s.metric, {}, {}};
  out.times.assign(s.times.begin() + 1, s.times.end());
  out.values.resize(s.size() - 1);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) out.values[i] = s.values[i + 1] - s.values[i];
  return out;
}

/// Restrict two series on the same grid spacing to their common time range.
inline std::pair<MetricSeries, MetricSeries> align(const MetricSeries& a, const MetricSeries& b) {
  if (a.size() == 0 || b.size() == 0) throw InvalidArgument("align: empty series");
  double h = a.size() >= 2 ? a.step() : b.step();
  if (a.size() >= 2 && b.size() >= 2 && std::abs(a.step() - b.step()) > 1e-9 * std::max(1.0, std::abs(h)))
    throw InvalidArgument("align: grid spacings differ");
  const double lo = std::max(a.times.front(), b.times.front());
  const double hi = std::min(a.times.back(), b.times.back());
  const double tol = 1e-9 * std::max(1.0, std::abs(h));
  if (lo > hi + tol) throw InvalidArgument("align: series do not overlap");

  auto slice = [&](const MetricSeries& s) {
    MetricSeries out{s.metric, {}, {}};
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.times[i] >= lo - tol && s.times[i] <= hi + tol) {
        out.times.push_back(s.times[i]);
        out.values.push_back(s.values[i]);
      }
    return out;
  };
  auto ra = slice(a), rb = slice(b);
  if (ra.size() != rb.size()) throw InvalidArgument("align: grids are offset by a fraction of a step");
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (std::abs(ra.times[i] - rb.times[i]) > tol) throw InvalidArgument("align: grids are offset by a fraction of a step");
  if (ra.size() == 0) throw InvalidArgument("align: series do not overlap");
  return {std::move(ra), std::move(rb)};
}

/// Natural cubic spline through (t_i, y_i); second derivatives from the
/// tridiagonal system, solved with the Thomas algorithm.
class NaturalSpline {
 public:
  NaturalSpline(std::vector<double> t, std::vector<double> y) : t_(std::move(t)), y_(std::move(y)) {
    const auto n = t_.size();
    if (n != y_.size()) throw InvalidArgument("spline: length mismatch");
    if (n < 3) throw InvalidArgument("spline: need at least 3 knots");
    for (std::size_t i = 1; i < n; ++i)
      if (!(t_[i] > t_[i - 1])) throw InvalidArgument("spline: knot times must be strictly increasing");
    for (double v : y_)
      if (!std::isfinite(v)) throw InvalidArgument("spline: non-finite knot value");

    m_.assign(n, 0.0);
    const std::size_t k = n - 2;  // interior unknowns
    std::vector<double> sub(k), diag(k), sup(k), rhs(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = j + 1;
      const double h0 = t_[i] - t_[i - 1], h1 = t_[i + 1] - t_[i];
      sub[j] = h0;
      diag[j] = 2.0 * (h0 + h1);
      sup[j] = h1;
      rhs[j] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    for (std::size_t j = 1; j < k; ++j) {
      const double w = sub[j] / diag[j - 1];
      diag[j] -= w * sup[j - 1];
      rhs[j] -= w * rhs[j - 1];
    }
    m_[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t j = k - 1; j-- > 0;) m_[j + 1] = (rhs[j] - sup[j] * m_[j + 2]) / diag[j];
  }

  double front() const { return t_.front(); }
  double back() const { return t_.back(); }

  double operator()(double q) const {
    if (!(q >= t_.front() && q <= t_.back()))
      throw OutOfRange("spline: query " + std::to_string(q) + " outside knot range");
    auto it = std::upper_bound(t_.begin(), t_.end(), q);
    std::size_t i = it == t_.end() ? t_.size() - 2 : static_cast<std::size_t>(it - t_.begin()) - 1;
    i = std::min(i, t_.size() - 2);
    const double h = t_[i + 1] - t_[i];
    const double a = (t_[i + 1] - q) / h, b = (q - t_[i]) / h;
    return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
  }

 private:
  std::vector<double> t_, y_, m_;
};

inline std::vector<double> cubic_spline_smooth(std::span<const double> times, std::span<const double> values,
                                               std::span<const double> queries) {
  NaturalSpline s({times.begin(), times.end()}, {values.begin(), values.end()});
  std::vector<double> out;
  out.reserve(queries.size());
  for (double q : queries) out.push_back(s(q));
  return out;
}

}  // namespace metadetect::preprocess
