#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "metadetect/channel.hpp"
#include "metadetect/errors.hpp"
#include "metadetect/mobility.hpp"
#include "metadetect/random.hpp"

// Discrete-event simulator of a linear multi-hop UAV chain.
//
// Node 0 is the ground station (sink); node n-1 is the last UAV and hosts the
// on-off source. Traffic flows n-1 -> n-2 -> ... -> 0 over fixed routes. The
// MAC is a spatial-reuse TDMA: slot s belongs to every node i >= 1 with
// i % 3 == s % 3, so neighbours never transmit together (half duplex) and
// nodes three hops apart do (chain-internal interference).

namespace metadetect::sim {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class AnomalyKind { TotalFailure, Attenuation, Overload };

inline std::string_view to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::TotalFailure:
      return "total_failure";
    case AnomalyKind::Attenuation:
      return "attenuation";
    case AnomalyKind::Overload:
      return "overload";
  }
  return "?";
}

inline AnomalyKind parse_anomaly_kind(std::string_view s) {
  if (s == "total_failure") return AnomalyKind::TotalFailure;
  if (s == "attenuation") return AnomalyKind::Attenuation;
  if (s == "overload") return AnomalyKind::Overload;
  throw InvalidArgument("unknown anomaly kind '" + std::string(s) + "'");
}

/// magnitude: dB for attenuation, bps of cross traffic for overload, unused
/// for total_failure. Active on [t_start, t_end).
struct AnomalyEvent {
  AnomalyKind kind = AnomalyKind::TotalFailure;
  int node = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double magnitude = 0.0;

  bool active(double t) const { return t >= t_start && t < t_end; }
};

struct LinkId {
  int src = 0;
  int dst = 0;

  auto operator<=>(const LinkId&) const = default;
  std::string str() const { return std::to_string(src) + "->" + std::to_string(dst); }
};

/// Inverse of LinkId::str().
inline LinkId parse_link(std::string_view s) {
  const auto arrow = s.find("->");
  if (arrow == std::string_view::npos) throw InvalidArgument("bad link id '" + std::string(s) + "'");
  auto to_int = [&](std::string_view part) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size() || v < 0)
      throw InvalidArgument("bad link id '" + std::string(s) + "'");
    return v;
  };
  return {to_int(s.substr(0, arrow)), to_int(s.substr(arrow + 2))};
}

enum class Outcome { Delivered, Corrupted, DroppedQueue, LostLink };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Delivered:
      return "delivered";
    case Outcome::Corrupted:
      return "corrupted";
    case Outcome::DroppedQueue:
      return "dropped_queue";
    case Outcome::LostLink:
      return "lost_link";
  }
  return "?";
}

inline std::optional<Outcome> parse_outcome(std::string_view s) {
  if (s == "delivered") return Outcome::Delivered;
  if (s == "corrupted") return Outcome::Corrupted;
  if (s == "dropped_queue") return Outcome::DroppedQueue;
  if (s == "lost_link") return Outcome::LostLink;
  return std::nullopt;
}

/// One packet on one link, with its terminal outcome. Absent values are NaN
/// (times, signal readings, distance) or nullopt (lqi). For transmitted
/// packets t_tx_start is the start of the final attempt.
struct TraceRecord {
  LinkId link;
  std::int64_t seq = 0;
  double t_enqueue = 0.0;
  double t_tx_start = kNaN;
  double t_rx_end = kNaN;
  Outcome outcome = Outcome::Delivered;
  double rssi_dbm = kNaN;
  double sinr_db = kNaN;
  std::optional<int> lqi;
  int retries = 0;
  double distance_m = kNaN;

  bool transmitted() const { return outcome != Outcome::DroppedQueue; }
  /// Time used to order records and assign them to metric windows.
  double reference_time() const { return transmitted() ? t_tx_start : t_enqueue; }
};

struct PositionSample {
  double t = 0.0;
  int node = 0;
  mobility::Position3 pos;
};

struct GroundTruthEntry {
  AnomalyEvent event;
  std::vector<LinkId> affected;
};

struct GroundTruthLog {
  std::vector<GroundTruthEntry> entries;
};

struct TrafficConfig {
  double onoff_on_s = 1.0;   // mean of exponential on periods
  double onoff_off_s = 1.0;  // mean of exponential off periods; 0 = always on, inf = never on
  double data_rate_bps = 24000.0;
  int packet_bytes = 100;
  // Each inter-packet gap is interval * U(1 - j, 1 + j); 0 keeps strict CBR.
  double interval_jitter = 0.0;
};

struct MacConfig {
  int queue_capacity = 50;
  int max_retries = 3;
  double link_rate_bps = 250000.0;
  double slot_guard_s = 2e-4;
  double d_input_s = 1e-4;
  // Each attempt starts at slot start + U(0, tx_start_jitter_s); must fit in the guard.
  double tx_start_jitter_s = 0.0;
};

/// Initial formation: UAV i starts at ground_station + heading * i * hop_spacing,
/// at altitude, and drifts with mean velocity -heading * i * contraction_mps.
struct MobilityConfig {
  double alpha = 0.85;
  double sigma_mps = 0.5;
  double sample_interval_s = 0.1;
  mobility::Box bounds;
  mobility::Position3 ground_station{20.0, 250.0, 0.0};
  mobility::Vec3 heading{1.0, 0.0, 0.0};
  double hop_spacing_m = 150.0;
  double altitude_m = 50.0;
  double contraction_mps = 0.0;
};

struct ScenarioConfig {
  int n_nodes = 4;
  double sim_duration_s = 300.0;
  std::uint64_t seed = 1;
  TrafficConfig traffic;
  MacConfig mac;
  channel::ChannelParams channel;
  MobilityConfig mobility;
  std::vector<AnomalyEvent> anomalies;

  double tx_time_s() const { return traffic.packet_bytes * 8.0 / mac.link_rate_bps; }
  double slot_s() const { return tx_time_s() + mac.slot_guard_s; }

  void validate() const;
};

/// Links in traffic order: (n-1 -> n-2), ..., (1 -> 0).
inline std::vector<LinkId> chain_links(int n_nodes) {
  std::vector<LinkId> links;
  for (int i = n_nodes - 1; i >= 1; --i) links.push_back({i, i - 1});
  return links;
}

/// Links whose traffic an event disturbs. A failed node also starves every
/// link downstream of it.
inline std::vector<LinkId> affected_links(const AnomalyEvent& e, int n_nodes) {
  std::vector<LinkId> out;
  switch (e.kind) {
    case AnomalyKind::TotalFailure:
      if (e.node + 1 <= n_nodes - 1) out.push_back({e.node + 1, e.node});
      for (int j = e.node; j >= 1; --j) out.push_back({j, j - 1});
      break;
    case AnomalyKind::Attenuation:
      if (e.node + 1 <= n_nodes - 1) out.push_back({e.node + 1, e.node});
      if (e.node >= 1) out.push_back({e.node, e.node - 1});
      break;
    case AnomalyKind::Overload:
      if (e.node >= 1) out.push_back({e.node, e.node - 1});
      break;
  }
  return out;
}

/// Active anomaly set of a run; built incrementally with inject_anomaly.
struct AnomalyState {
  int n_nodes = 0;
  double horizon_s = 0.0;
  std::vector<AnomalyEvent> events;

  bool failed(int node, double t) const {
    for (const auto& e : events)
      if (e.kind == AnomalyKind::TotalFailure && e.node == node && e.active(t)) return true;
    return false;
  }

  /// Extra path loss on any path that touches an attenuated node.
  double extra_loss_db(int a, int b, double t) const {
    double db = 0.0;
    for (const auto& e : events)
      if (e.kind == AnomalyKind::Attenuation && (e.node == a || e.node == b) && e.active(t))
        db += e.magnitude;
    return db;
  }
};

inline void validate_event(const AnomalyEvent& e, int n_nodes, double horizon_s) {
  if (e.node < 0 || e.node >= n_nodes)
    throw InvalidArgument("anomaly node " + std::to_string(e.node) + " outside chain");
  if (!(e.t_start >= 0.0 && e.t_start < e.t_end && e.t_end <= horizon_s))
    throw InvalidArgument("anomaly window must satisfy 0 <= t_start < t_end <= sim_duration");
  if (!std::isfinite(e.magnitude)) throw InvalidArgument("anomaly magnitude must be finite");
  if (e.kind == AnomalyKind::Attenuation && e.magnitude < 0.0)
    throw InvalidArgument("attenuation magnitude must be >= 0 dB");
  if (e.kind == AnomalyKind::Overload) {
    if (e.node < 1) throw InvalidArgument("overload needs a transmitting node (>= 1)");
    if (!(e.magnitude > 0.0)) throw InvalidArgument("overload magnitude must be > 0 bps");
  }
}

inline AnomalyState inject_anomaly(AnomalyState state, const AnomalyEvent& event) {
  switch (event.kind) {
    case AnomalyKind::TotalFailure:
    case AnomalyKind::Attenuation:
    case AnomalyKind::Overload:
      break;
    default:
      throw InvalidArgument("unknown anomaly kind");
  }
  validate_event(event, state.n_nodes, state.horizon_s);
  state.events.push_back(event);
  return state;
}

inline void ScenarioConfig::validate() const {
  if (n_nodes < 2) throw InvalidArgument("n_nodes must be >= 2");
  if (!(sim_duration_s > 0.0) || !std::isfinite(sim_duration_s))
    throw InvalidArgument("sim_duration_s must be > 0");
  if (!(traffic.onoff_on_s > 0.0)) throw InvalidArgument("onoff_on_s must be > 0");
  if (!(traffic.onoff_off_s >= 0.0)) throw InvalidArgument("onoff_off_s must be >= 0");
  if (!(traffic.data_rate_bps > 0.0) || !std::isfinite(traffic.data_rate_bps))
    throw InvalidArgument("data_rate_bps must be > 0");
  if (!(traffic.interval_jitter >= 0.0 && traffic.interval_jitter < 1.0))
    throw InvalidArgument("interval_jitter must be in [0,1)");
  if (traffic.packet_bytes < 1) throw InvalidArgument("packet_bytes must be >= 1");
  if (mac.queue_capacity < 1) throw InvalidArgument("queue_capacity must be >= 1");
  if (mac.max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
  if (!(mac.link_rate_bps > 0.0) || !std::isfinite(mac.link_rate_bps))
    throw InvalidArgument("link_rate_bps must be > 0");
  if (!(mac.slot_guard_s >= 0.0) || !(mac.d_input_s >= 0.0))
    throw InvalidArgument("slot_guard_s and d_input_s must be >= 0");
  if (!(mac.tx_start_jitter_s >= 0.0 && mac.tx_start_jitter_s <= mac.slot_guard_s))
    throw InvalidArgument("tx_start_jitter_s must be in [0, slot_guard_s]");
  channel.validate();
  const auto& m = mobility;
  if (!(m.sample_interval_s > 0.0)) throw InvalidArgument("sample_interval_s must be > 0");
  if (!(m.hop_spacing_m > 0.0)) throw InvalidArgument("hop_spacing_m must be > 0");
  if (!std::isfinite(m.contraction_mps)) throw InvalidArgument("contraction_mps must be finite");
  const double hn = std::hypot(m.heading.x, m.heading.y, m.heading.z);
  if (!(hn > 0.0) || !std::isfinite(hn)) throw InvalidArgument("heading must be non-zero");
  if (!m.bounds.valid()) throw InvalidArgument("mobility bounds must be a non-empty box");
  if (!m.bounds.contains(m.ground_station)) throw InvalidArgument("ground_station outside bounds");
  for (int i = 1; i < n_nodes; ++i) {
    mobility::MobilityState s;
    s.position = m.ground_station + (i * m.hop_spacing_m / hn) * m.heading;
    s.position.z = m.altitude_m;
    s.memory_alpha = m.alpha;
    s.noise_sigma = m.sigma_mps;
    s.bounds = m.bounds;
    s.validate();
  }
  AnomalyState st{n_nodes, sim_duration_s, {}};
  for (const auto& e : anomalies) st = inject_anomaly(std::move(st), e);
}

struct SimulationResult {
  std::vector<TraceRecord> records;
  std::vector<PositionSample> positions;
  GroundTruthLog truth;
  std::int64_t generated = 0;
  std::int64_t delivered_to_sink = 0;
};

namespace detail {

/// positions[k][node] at t = k * dt, k = 0..floor(duration/dt).
inline std::vector<std::vector<mobility::Position3>> generate_trajectories(const ScenarioConfig& cfg) {
  const auto& m = cfg.mobility;
  const double hn = std::hypot(m.heading.x, m.heading.y, m.heading.z);
  const mobility::Vec3 dir = (1.0 / hn) * m.heading;
  const auto steps = static_cast<std::size_t>(std::floor(cfg.sim_duration_s / m.sample_interval_s + 1e-9));

  std::vector<mobility::MobilityState> states(static_cast<std::size_t>(cfg.n_nodes));
  std::vector<Rng> rngs;
  for (int i = 0; i < cfg.n_nodes; ++i) {
    auto& s = states[static_cast<std::size_t>(i)];
    s.memory_alpha = m.alpha;
    s.noise_sigma = m.sigma_mps;
    s.bounds = m.bounds;
    if (i == 0) {
      s.position = m.ground_station;
    } else {
      s.position = m.ground_station + (i * m.hop_spacing_m) * dir;
      s.position.z = m.altitude_m;
      s.mean_velocity = (-i * m.contraction_mps) * dir;
      s.velocity = s.mean_velocity;
    }
    rngs.push_back(make_stream(cfg.seed, stream_domain::kMobility, static_cast<std::uint64_t>(i)));
  }

  std::vector<std::vector<mobility::Position3>> out;
  out.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    std::vector<mobility::Position3> row;
    row.reserve(states.size());
    for (const auto& s : states) row.push_back(s.position);
    out.push_back(std::move(row));
    if (k == steps) break;
    // The ground station is static.
    for (std::size_t i = 1; i < states.size(); ++i)
      states[i] = mobility::gm_step(states[i], m.sample_interval_s, rngs[i]);
  }
  return out;
}

struct QueuedPacket {
  std::int64_t seq = -1;  // -1 for cross traffic (never traced)
  double t_enqueue = 0.0;
  int retries = 0;
};

/// Exponential on-off CBR source. Packet phase carries across on periods,
/// so onoff_off_s = 0 degenerates to plain CBR.
class OnOffSource {
 public:
  OnOffSource(const TrafficConfig& cfg, double horizon, Rng rng)
      : on_mean_(cfg.onoff_on_s),
        off_mean_(cfg.onoff_off_s),
        interval_(cfg.packet_bytes * 8.0 / cfg.data_rate_bps),
        jitter_(cfg.interval_jitter),
        horizon_(horizon),
        rng_(std::move(rng)) {
    start_on_period(0.0);
    next_ = on_start_;
    settle();
  }

  /// Time of the next packet, or +inf once past the horizon.
  double peek() const { return next_; }

  void advance() {
    if (jitter_ > 0.0) {
      std::uniform_real_distribution<double> u(1.0 - jitter_, 1.0 + jitter_);
      next_ += interval_ * u(rng_);
    } else {
      next_ += interval_;
    }
    settle();
  }

 private:
  double draw(double mean) {
    if (mean == 0.0) return 0.0;
    if (std::isinf(mean)) return kInf;
    std::exponential_distribution<double> d(1.0 / mean);
    return d(rng_);
  }

  // Every on period is preceded by an off period, so a source whose off
  // periods are infinite never transmits.
  void start_on_period(double t) {
    on_start_ = t + draw(off_mean_);
    on_end_ = std::isinf(on_start_) ? kInf : on_start_ + draw(on_mean_);
  }

  void settle() {
    while (next_ < horizon_ && next_ >= on_end_) {
      start_on_period(on_end_);
      next_ = std::max(next_, on_start_);
    }
    if (next_ < on_start_) next_ = on_start_;
    if (!(next_ < horizon_)) next_ = kInf;
  }

  double on_mean_;
  double off_mean_;
  double interval_;
  double jitter_;
  double horizon_;
  Rng rng_;
  double on_start_ = 0.0;
  double on_end_ = 0.0;
  double next_ = 0.0;
};

struct Arrival {
  double t = 0.0;
  std::uint64_t order = 0;
  int node = 0;
  std::int64_t seq = 0;

  bool operator>(const Arrival& o) const { return t != o.t ? t > o.t : order > o.order; }
};

}  // namespace detail

inline SimulationResult run_simulation(const ScenarioConfig& cfg) {
  cfg.validate();

  SimulationResult result;
  AnomalyState anomalies{cfg.n_nodes, cfg.sim_duration_s, {}};
  for (const auto& e : cfg.anomalies) {
    anomalies = inject_anomaly(std::move(anomalies), e);
    result.truth.entries.push_back({e, affected_links(e, cfg.n_nodes)});
  }

  const auto trajectories = detail::generate_trajectories(cfg);
  const double dt_m = cfg.mobility.sample_interval_s;
  for (std::size_t k = 0; k < trajectories.size(); ++k)
    for (int i = 0; i < cfg.n_nodes; ++i)
      result.positions.push_back({static_cast<double>(k) * dt_m, i, trajectories[k][static_cast<std::size_t>(i)]});

  auto position_at = [&](int node, double t) -> const mobility::Position3& {
    auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / dt_m + 1e-9)));
    k = std::min(k, trajectories.size() - 1);
    return trajectories[k][static_cast<std::size_t>(node)];
  };

  const auto n = static_cast<std::size_t>(cfg.n_nodes);
  const int source = cfg.n_nodes - 1;
  const double d_tx = cfg.tx_time_s();
  const double slot = cfg.slot_s();
  const double d_input = cfg.mac.d_input_s;
  const auto& ch = cfg.channel;
  const double noise_mw = channel::dbm_to_mw(ch.noise_floor_dbm);

  std::vector<std::deque<detail::QueuedPacket>> queues(n);
  std::vector<Rng> link_rng;
  for (int i = 0; i < cfg.n_nodes; ++i)
    link_rng.push_back(make_stream(cfg.seed, stream_domain::kLink, static_cast<std::uint64_t>(i)));

  detail::OnOffSource app(cfg.traffic, cfg.sim_duration_s,
                          make_stream(cfg.seed, stream_domain::kTraffic, 0));

  // Cross-traffic generators, one per overload event.
  struct CrossGen {
    int node;
    double next;
    double end;
    double interval;
  };
  std::vector<CrossGen> cross;
  for (const auto& e : cfg.anomalies)
    if (e.kind == AnomalyKind::Overload)
      cross.push_back({e.node, e.t_start, std::min(e.t_end, cfg.sim_duration_s),
                       cfg.traffic.packet_bytes * 8.0 / e.magnitude});

  std::priority_queue<detail::Arrival, std::vector<detail::Arrival>, std::greater<>> arrivals;
  std::uint64_t arrival_order = 0;
  std::int64_t next_seq = 0;

  auto enqueue = [&](int node, detail::QueuedPacket p) {
    auto& q = queues[static_cast<std::size_t>(node)];
    if (static_cast<int>(q.size()) >= cfg.mac.queue_capacity) {
      if (p.seq >= 0) {
        TraceRecord r;
        r.link = {node, node - 1};
        r.seq = p.seq;
        r.t_enqueue = p.t_enqueue;
        r.outcome = Outcome::DroppedQueue;
        result.records.push_back(r);
      }
      return;
    }
    q.push_back(p);
  };

  // Process every source/cross/arrival event with t <= limit, in time order.
  auto drain_events_until = [&](double limit) {
    for (;;) {
      double t_best = kInf;
      int which = -1;  // 0 app, 1 cross, 2 arrival
      std::size_t cross_idx = 0;
      if (app.peek() <= limit && app.peek() < t_best) {
        t_best = app.peek();
        which = 0;
      }
      for (std::size_t c = 0; c < cross.size(); ++c)
        if (cross[c].next < cross[c].end && cross[c].next <= limit && cross[c].next < t_best) {
          t_best = cross[c].next;
          which = 1;
          cross_idx = c;
        }
      if (!arrivals.empty() && arrivals.top().t <= limit && arrivals.top().t < t_best) {
        t_best = arrivals.top().t;
        which = 2;
      }
      if (which < 0) return;
      if (which == 0) {
        ++result.generated;
        enqueue(source, {next_seq++, t_best, 0});
        app.advance();
      } else if (which == 1) {
        enqueue(cross[cross_idx].node, {-1, t_best, 0});
        cross[cross_idx].next += cross[cross_idx].interval;
      } else {
        const auto a = arrivals.top();
        arrivals.pop();
        enqueue(a.node, {a.seq, a.t, 0});
      }
    }
  };

  auto queues_empty = [&] {
    return std::all_of(queues.begin(), queues.end(), [](const auto& q) { return q.empty(); });
  };
  auto cross_pending = [&] {
    return std::any_of(cross.begin(), cross.end(), [](const CrossGen& c) { return c.next < c.end; });
  };

  struct Tx {
    int node;
    double distance;
  };
  std::vector<Tx> txs;

  for (std::uint64_t s = 0;; ++s) {
    const double t_s = static_cast<double>(s) * slot;
    drain_events_until(t_s);
    if (t_s >= cfg.sim_duration_s && std::isinf(app.peek()) && !cross_pending() && arrivals.empty() &&
        queues_empty())
      break;

    txs.clear();
    const auto phase = static_cast<int>(s % 3);
    for (int i = 1; i < cfg.n_nodes; ++i)
      if (i % 3 == phase && !queues[static_cast<std::size_t>(i)].empty())
        txs.push_back({i, euclidean_distance(position_at(i, t_s), position_at(i - 1, t_s))});
    if (txs.empty()) continue;

    for (const auto& tx : txs) {
      const int i = tx.node;
      const int rx = i - 1;
      auto& rng = link_rng[static_cast<std::size_t>(i)];
      auto& q = queues[static_cast<std::size_t>(i)];
      detail::QueuedPacket& p = q.front();
      double t_tx = t_s;
      if (cfg.mac.tx_start_jitter_s > 0.0) {
        std::uniform_real_distribution<double> off(0.0, cfg.mac.tx_start_jitter_s);
        t_tx += off(rng);
      }

      const bool lost = anomalies.failed(i, t_tx) || anomalies.failed(rx, t_tx);
      bool ok = false;
      double rssi = kNaN, sinr_db = kNaN;
      std::optional<int> lqi;
      if (!lost) {
        const double d = std::max(tx.distance, 1.0);
        const double loss = channel::path_loss_db(d, ch, rng) + anomalies.extra_loss_db(i, rx, t_tx);
        const double s_mw = channel::dbm_to_mw(ch.tx_power_dbm - loss);
        double i_mw = 0.0;
        for (const auto& other : txs) {
          if (other.node == i || anomalies.failed(other.node, t_tx)) continue;
          const double dj =
              std::max(euclidean_distance(position_at(other.node, t_s), position_at(rx, t_s)), 1.0);
          const double lj = channel::path_loss_db(dj, ch, rng) + anomalies.extra_loss_db(other.node, rx, t_tx);
          i_mw += channel::dbm_to_mw(ch.tx_power_dbm - lj);
        }
        const double ratio = channel::sinr(s_mw, i_mw + noise_mw);
        sinr_db = channel::linear_to_db(ratio);
        rssi = channel::mw_to_dbm(s_mw + i_mw + noise_mw);
        lqi = channel::lqi_from_sinr(sinr_db, ch.lqi_min_db, ch.lqi_max_db);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        ok = u(rng) >= channel::corruption_prob(sinr_db, ch);
      }

      const bool exhausted = !ok && p.retries >= cfg.mac.max_retries;
      if (ok || exhausted) {
        if (p.seq >= 0) {
          TraceRecord r;
          r.link = {i, rx};
          r.seq = p.seq;
          r.t_enqueue = p.t_enqueue;
          r.t_tx_start = t_tx;
          r.retries = p.retries;
          r.distance_m = tx.distance;
          r.rssi_dbm = rssi;
          r.sinr_db = sinr_db;
          r.lqi = lqi;
          if (ok) {
            r.outcome = Outcome::Delivered;
            r.t_rx_end = t_tx + tx.distance / kSpeedOfLight + d_tx + d_input;
            if (rx == 0) {
              ++result.delivered_to_sink;
            } else {
              arrivals.push({r.t_rx_end, arrival_order++, rx, p.seq});
            }
          } else if (lost) {
            r.outcome = Outcome::LostLink;
          } else {
            r.outcome = Outcome::Corrupted;
            r.t_rx_end = t_tx + tx.distance / kSpeedOfLight + d_tx + d_input;
          }
          result.records.push_back(r);
        }
        q.pop_front();
      } else {
        ++p.retries;
      }
    }
  }

  std::stable_sort(result.records.begin(), result.records.end(), [](const TraceRecord& a, const TraceRecord& b) {
    const double ta = a.reference_time(), tb = b.reference_time();
    if (ta != tb) return ta < tb;
    if (a.link.src != b.link.src) return a.link.src > b.link.src;
    return a.seq < b.seq;
  });
  return result;
}

}  // namespace metadetect::sim
