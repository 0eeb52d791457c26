#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metadetect/errors.hpp"
#include "metadetect/simcore.hpp"

namespace metadetect::metrics {

using sim::kNaN;
using sim::LinkId;
using sim::Outcome;
using sim::TraceRecord;

/// Per-link, per-window aggregate. NaN marks a value the window cannot
/// define (e.g. PRR with nothing transmitted); imputation happens later.
struct MetricWindow {
  LinkId link;
  double t_start = 0.0;
  double t_end = 0.0;
  double rssi_dbm = kNaN;
  double lqi = kNaN;
  double sinr_db = kNaN;
  double pcr = kNaN;
  double sh_delay_s = kNaN;
  double sh_jitter_s = kNaN;
  double sh_throughput_bps = kNaN;
  double sh_prr = kNaN;
  double beta = kNaN;
  std::int64_t queue_drop_count = 0;
  double queue_occupancy = 0.0;
  std::int64_t packets_received = 0;
  double distance_m = kNaN;
  std::int64_t n_packets = 0;
};

/// Names of the numeric columns, in CSV order.
inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{
      "rssi_dbm",   "lqi",   "sinr_db",          "pcr",             "sh_delay_s",       "sh_jitter_s",
      "sh_throughput_bps", "sh_prr", "beta", "queue_drop_count", "queue_occupancy", "packets_received",
      "distance_m", "n_packets"};
  return names;
}

inline double metric_value(const MetricWindow& w, std::string_view name) {
  if (name == "rssi_dbm") return w.rssi_dbm;
  if (name == "lqi") return w.lqi;
  if (name == "sinr_db") return w.sinr_db;
  if (name == "pcr") return w.pcr;
  if (name == "sh_delay_s") return w.sh_delay_s;
  if (name == "sh_jitter_s") return w.sh_jitter_s;
  if (name == "sh_throughput_bps") return w.sh_throughput_bps;
  if (name == "sh_prr") return w.sh_prr;
  if (name == "beta") return w.beta;
  if (name == "queue_drop_count") return static_cast<double>(w.queue_drop_count);
  if (name == "queue_occupancy") return w.queue_occupancy;
  if (name == "packets_received") return static_cast<double>(w.packets_received);
  if (name == "distance_m") return w.distance_m;
  if (name == "n_packets") return static_cast<double>(w.n_packets);
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

/// One boolean per transmission attempt, in attempt order.
using DeliveryVector = std::vector<bool>;

/// Conditional probability delivery function. Entry order is
/// k = -max_lag..-1 followed by k = 1..max_lag; k > 0 conditions on the k
/// preceding attempts all succeeding, k < 0 on them all failing. Conditions
/// that never occur fall back to the unconditional PRR.
inline std::optional<std::vector<double>> cpdf(const DeliveryVector& v, int max_lag) {
  if (max_lag < 1) throw InvalidArgument("cpdf: max_lag must be >= 1");
  if (v.empty()) return std::nullopt;

  const auto n = v.size();
  const double prr = static_cast<double>(std::count(v.begin(), v.end(), true)) / static_cast<double>(n);

  // run_s[i] / run_f[i]: length of the success / failure run ending at i-1.
  std::vector<std::size_t> run_s(n + 1, 0), run_f(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    run_s[i] = v[i - 1] ? run_s[i - 1] + 1 : 0;
    run_f[i] = v[i - 1] ? 0 : run_f[i - 1] + 1;
  }

  const auto lags = static_cast<std::size_t>(max_lag);
  std::vector<std::size_t> hit_s(lags + 1, 0), tot_s(lags + 1, 0), hit_f(lags + 1, 0), tot_f(lags + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rs = std::min(run_s[i], lags);
    const std::size_t rf = std::min(run_f[i], lags);
    for (std::size_t k = 1; k <= rs; ++k) {
      ++tot_s[k];
      hit_s[k] += v[i] ? 1 : 0;
    }
    for (std::size_t k = 1; k <= rf; ++k) {
      ++tot_f[k];
      hit_f[k] += v[i] ? 1 : 0;
    }
  }

  std::vector<double> out;
  out.reserve(2 * lags);
  for (std::size_t k = lags; k >= 1; --k)
    out.push_back(tot_f[k] ? static_cast<double>(hit_f[k]) / static_cast<double>(tot_f[k]) : prr);
  for (std::size_t k = 1; k <= lags; ++k)
    out.push_back(tot_s[k] ? static_cast<double>(hit_s[k]) / static_cast<double>(tot_s[k]) : prr);
  return out;
}

/// Mean absolute element-wise difference.
inline double kw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("kw_distance: vectors must have equal non-zero length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// CPDF of the perfectly bursty link: a failure is always followed by a
/// failure and a success by a success.
inline std::vector<double> bursty_cpdf(int max_lag) {
  std::vector<double> out(2 * static_cast<std::size_t>(max_lag), 1.0);
  std::fill(out.begin(), out.begin() + max_lag, 0.0);
  return out;
}

/// beta = (KW(I) - KW(E)) / KW(I) before clamping, where KW(X) is the
/// distance from X's CPDF to the bursty CPDF and I is the independent link
/// with E's PRR. Missing for all-success / all-failure vectors.
inline std::optional<double> beta_factor_unclamped(const DeliveryVector& v, int max_lag) {
  const auto measured = cpdf(v, max_lag);
  if (!measured) return std::nullopt;
  const auto successes = std::count(v.begin(), v.end(), true);
  if (successes == 0 || static_cast<std::size_t>(successes) == v.size()) return std::nullopt;
  const double prr = static_cast<double>(successes) / static_cast<double>(v.size());
  const std::vector<double> independent(measured->size(), prr);
  const auto bursty = bursty_cpdf(max_lag);
  const double kw_i = kw_distance(independent, bursty);
  const double kw_e = kw_distance(*measured, bursty);
  return (kw_i - kw_e) / kw_i;
}

inline std::optional<double> beta_factor(const DeliveryVector& v, int max_lag) {
  auto raw = beta_factor_unclamped(v, max_lag);
  if (!raw) return std::nullopt;
  return std::clamp(*raw, 0.0, 1.0);
}

struct WindowOptions {
  int packet_bytes = 100;
  int queue_capacity = 50;
  int max_lag = 5;
  /// Extend the grid to at least this time even if the trace ends earlier.
  double min_horizon_s = 0.0;
  /// Called when a window's beta fell outside [0,1] and was clamped.
  std::function<void(const LinkId&, double t_start, double raw)> on_beta_clamp;
};

/// Aggregate a time-sorted trace into fixed windows aligned to t = 0. A record
/// belongs to the window containing its reference time (final attempt start,
/// or enqueue time for queue drops). Output is ordered by link in traffic
/// direction (descending source id), then by window.
inline std::vector<MetricWindow> window_metrics(std::span<const TraceRecord> records, double window_s,
                                                const WindowOptions& opts = {}) {
  if (!(window_s > 0.0) || !std::isfinite(window_s)) throw InvalidArgument("window_metrics: window must be > 0");
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].reference_time() < records[i - 1].reference_time())
      throw InvalidArgument("window_metrics: records are not sorted by time (row " + std::to_string(i) + ")");
  if (records.empty()) return {};

  double t_max = 0.0;
  for (const auto& r : records) {
    const double t = r.reference_time();
    if (!std::isfinite(t) || t < 0.0) throw InvalidArgument("window_metrics: record without a valid time");
    t_max = std::max(t_max, t);
  }
  auto n_windows = static_cast<std::size_t>(std::floor(t_max / window_s)) + 1;
  if (opts.min_horizon_s > 0.0)
    n_windows = std::max(n_windows, static_cast<std::size_t>(std::ceil(opts.min_horizon_s / window_s - 1e-9)));

  struct Acc {
    std::int64_t transmitted = 0, delivered = 0, drops = 0, n = 0;
    std::int64_t corrupted_attempts = 0, received_attempts = 0;
    double rssi = 0, lqi = 0, sinr = 0, dist = 0, delay_sum = 0, occupancy_area = 0;
    std::int64_t rssi_n = 0, lqi_n = 0, sinr_n = 0, dist_n = 0;
    std::vector<double> delays;
    DeliveryVector attempts;
  };
  std::map<LinkId, std::vector<Acc>, std::greater<>> acc;

  auto window_of = [&](double t) {
    auto w = static_cast<std::size_t>(std::floor(t / window_s));
    return std::min(w, n_windows - 1);
  };

  for (const auto& r : records) {
    auto& slots = acc[r.link];
    if (slots.empty()) slots.resize(n_windows);
    Acc& a = slots[window_of(r.reference_time())];
    ++a.n;
    if (r.outcome == Outcome::DroppedQueue) {
      ++a.drops;
      continue;
    }
    ++a.transmitted;
    const int attempts = r.retries + 1;
    switch (r.outcome) {
      case Outcome::Delivered:
        ++a.delivered;
        a.received_attempts += attempts;
        a.corrupted_attempts += r.retries;
        a.delays.push_back(r.t_rx_end - r.t_enqueue);
        a.attempts.insert(a.attempts.end(), static_cast<std::size_t>(r.retries), false);
        a.attempts.push_back(true);
        break;
      case Outcome::Corrupted:
        a.received_attempts += attempts;
        a.corrupted_attempts += attempts;
        a.attempts.insert(a.attempts.end(), static_cast<std::size_t>(attempts), false);
        break;
      case Outcome::LostLink:
        a.attempts.insert(a.attempts.end(), static_cast<std::size_t>(attempts), false);
        break;
      case Outcome::DroppedQueue:
        break;
    }
    if (std::isfinite(r.rssi_dbm)) a.rssi += r.rssi_dbm, ++a.rssi_n;
    if (r.lqi) a.lqi += *r.lqi, ++a.lqi_n;
    if (std::isfinite(r.sinr_db)) a.sinr += r.sinr_db, ++a.sinr_n;
    if (std::isfinite(r.distance_m)) a.dist += r.distance_m, ++a.dist_n;
  }

  // Time-averaged sender queue length: a packet occupies the queue from
  // enqueue until its final attempt has left the air.
  for (const auto& r : records) {
    if (!r.transmitted()) continue;
    const double depart = std::isfinite(r.t_rx_end) ? r.t_rx_end : r.t_tx_start;
    double a0 = r.t_enqueue;
    const double a1 = depart;
    auto& slots = acc[r.link];
    while (a0 < a1) {
      const auto w = window_of(a0);
      const double w_end = static_cast<double>(w + 1) * window_s;
      const double seg_end = (w == n_windows - 1) ? a1 : std::min(a1, w_end);
      slots[w].occupancy_area += seg_end - a0;
      a0 = seg_end;
    }
  }

  const double packet_bits = opts.packet_bytes * 8.0;
  std::vector<MetricWindow> out;
  out.reserve(acc.size() * n_windows);
  for (const auto& [link, slots] : acc) {
    for (std::size_t w = 0; w < n_windows; ++w) {
      const Acc& a = slots[w];
      MetricWindow m;
      m.link = link;
      m.t_start = static_cast<double>(w) * window_s;
      m.t_end = m.t_start + window_s;
      m.n_packets = a.n;
      m.queue_drop_count = a.drops;
      m.packets_received = a.delivered;
      m.queue_occupancy = std::clamp(a.occupancy_area / (window_s * opts.queue_capacity), 0.0, 1.0);
      if (a.rssi_n) m.rssi_dbm = a.rssi / static_cast<double>(a.rssi_n);
      if (a.lqi_n) m.lqi = a.lqi / static_cast<double>(a.lqi_n);
      if (a.sinr_n) m.sinr_db = a.sinr / static_cast<double>(a.sinr_n);
      if (a.dist_n) m.distance_m = a.dist / static_cast<double>(a.dist_n);
      if (a.received_attempts)
        m.pcr = static_cast<double>(a.corrupted_attempts) / static_cast<double>(a.received_attempts);
      if (a.transmitted) {
        m.sh_prr = static_cast<double>(a.delivered) / static_cast<double>(a.transmitted);
        m.sh_throughput_bps = static_cast<double>(a.delivered) * packet_bits / window_s;
      }
      if (!a.delays.empty()) {
        double s = 0.0;
        for (double d : a.delays) s += d;
        m.sh_delay_s = s / static_cast<double>(a.delays.size());
      }
      if (a.delays.size() >= 2) {
        double s = 0.0;
        for (std::size_t i = 1; i < a.delays.size(); ++i) s += std::abs(a.delays[i] - a.delays[i - 1]);
        m.sh_jitter_s = s / static_cast<double>(a.delays.size() - 1);
      }
      if (auto raw = beta_factor_unclamped(a.attempts, opts.max_lag)) {
        m.beta = std::clamp(*raw, 0.0, 1.0);
        if (m.beta != *raw && opts.on_beta_clamp) opts.on_beta_clamp(link, m.t_start, *raw);
      }
      out.push_back(m);
    }
  }
  return out;
}

}  // namespace metadetect::metrics
