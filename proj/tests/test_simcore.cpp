#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "metadetect/io.hpp"
#include "metadetect/simcore.hpp"

using namespace metadetect;
using namespace metadetect::sim;

namespace {

ScenarioConfig base(double duration = 60.0) {
  ScenarioConfig c;
  c.n_nodes = 4;
  c.sim_duration_s = duration;
  c.seed = 7;
  c.traffic.onoff_on_s = 1.0;
  c.traffic.onoff_off_s = 0.0;
  c.mac.tx_start_jitter_s = 1e-4;
  c.mobility.bounds = {{0, 0, 0}, {1400, 400, 150}};
  c.mobility.ground_station = {50, 200, 0};
  c.mobility.hop_spacing_m = 400;
  c.mobility.altitude_m = 60;
  c.mobility.contraction_mps = 0.5;
  return c;
}

std::vector<TraceRecord> on_link(const std::vector<TraceRecord>& rs, LinkId l) {
  std::vector<TraceRecord> out;
  for (const auto& r : rs)
    if (r.link == l) out.push_back(r);
  return out;
}

double mean_sinr(const std::vector<TraceRecord>& rs, LinkId l, double t0, double t1) {
  double s = 0;
  int n = 0;
  for (const auto& r : rs)
    if (r.link == l && r.t_tx_start >= t0 && r.t_tx_start < t1 && std::isfinite(r.sinr_db)) s += r.sinr_db, ++n;
  return n ? s / n : NAN;
}

}  // namespace

TEST(Simulation, SilentSourceProducesNoRecords) {
  auto c = base();
  c.traffic.onoff_off_s = std::numeric_limits<double>::infinity();
  const auto r = run_simulation(c);
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.generated, 0);
  EXPECT_FALSE(r.positions.empty());
}

TEST(Simulation, TotalFailureLosesEveryPacketOnTheLink) {
  auto c = base(120);
  c.anomalies.push_back({AnomalyKind::TotalFailure, 2, 40.0, 80.0, 0.0});
  const auto r = run_simulation(c);
  // Node 2 is starved while down, so its own link carries (almost) nothing;
  // the incoming link 3->2 shows the loss.
  int inside = 0;
  for (const auto& l : {LinkId{3, 2}, LinkId{2, 1}})
    for (const auto& rec : on_link(r.records, l))
      if (rec.transmitted() && rec.t_tx_start >= 40.0 && rec.t_tx_start < 80.0) {
        EXPECT_EQ(rec.outcome, Outcome::LostLink) << rec.t_tx_start;
        ++inside;
      }
  EXPECT_GT(inside, 100);
  ASSERT_EQ(r.truth.entries.size(), 1u);
  EXPECT_EQ(r.truth.entries[0].affected, (std::vector<LinkId>{{3, 2}, {2, 1}, {1, 0}}));
}

TEST(Simulation, TotalFailureOfReceiverLosesTransmissions) {
  auto c = base(60);
  c.anomalies.push_back({AnomalyKind::TotalFailure, 1, 20.0, 30.0, 0.0});
  const auto r = run_simulation(c);
  int inside = 0;
  for (const auto& rec : on_link(r.records, {2, 1}))
    if (rec.transmitted() && rec.t_tx_start >= 20.0 && rec.t_tx_start < 30.0) {
      EXPECT_EQ(rec.outcome, Outcome::LostLink);
      ++inside;
    }
  EXPECT_GT(inside, 50);
}

TEST(Simulation, LosslessChainDeliversEverything) {
  auto c = base(30);
  c.channel.rician_k = std::numeric_limits<double>::infinity();
  c.channel.tx_power_dbm = 60;
  c.channel.per_midpoint_db = -40;
  c.mac.queue_capacity = 10000;
  const auto r = run_simulation(c);
  EXPECT_GT(r.generated, 500);
  EXPECT_EQ(r.delivered_to_sink, r.generated);
  for (const auto& rec : r.records) EXPECT_EQ(rec.outcome, Outcome::Delivered);
}

TEST(Simulation, PacketConservationPerLink) {
  auto c = base(120);
  c.traffic.onoff_off_s = 1.0;
  c.anomalies.push_back({AnomalyKind::Attenuation, 2, 30.0, 60.0, 25.0});
  const auto r = run_simulation(c);
  std::map<LinkId, std::map<Outcome, std::int64_t>> count;
  for (const auto& rec : r.records) ++count[rec.link][rec.outcome];
  std::int64_t arriving = r.generated;
  for (const auto& l : chain_links(c.n_nodes)) {
    auto& m = count[l];
    const auto total = m[Outcome::Delivered] + m[Outcome::Corrupted] + m[Outcome::DroppedQueue] + m[Outcome::LostLink];
    EXPECT_EQ(total, arriving) << l.src << "->" << l.dst;
    arriving = m[Outcome::Delivered];
  }
  EXPECT_EQ(arriving, r.delivered_to_sink);
}

TEST(Simulation, DeterministicTrace) {
  auto c = base(60);
  c.traffic.onoff_off_s = 1.0;
  c.traffic.interval_jitter = 0.2;
  c.anomalies.push_back({AnomalyKind::TotalFailure, 1, 10.0, 20.0, 0.0});
  const auto a = run_simulation(c), b = run_simulation(c);
  EXPECT_EQ(io::trace_csv(a.records), io::trace_csv(b.records));
  c.seed = 8;
  EXPECT_NE(io::trace_csv(a.records), io::trace_csv(run_simulation(c).records));
}

TEST(Simulation, FifoPerLink) {
  auto c = base(90);
  c.anomalies.push_back({AnomalyKind::Attenuation, 2, 20.0, 50.0, 20.0});
  const auto r = run_simulation(c);
  for (const auto& l : chain_links(c.n_nodes)) {
    auto rs = on_link(r.records, l);
    rs.erase(std::remove_if(rs.begin(), rs.end(), [](const TraceRecord& x) { return !x.transmitted(); }), rs.end());
    std::sort(rs.begin(), rs.end(), [](const auto& x, const auto& y) { return x.seq < y.seq; });
    for (std::size_t i = 1; i < rs.size(); ++i) EXPECT_LE(rs[i - 1].t_tx_start, rs[i].t_tx_start);
  }
}

TEST(Simulation, DelayDecomposesIntoFourTerms) {
  auto c = base(60);
  const auto r = run_simulation(c);
  const double d_tx = c.traffic.packet_bytes * 8.0 / c.mac.link_rate_bps;
  int n = 0;
  for (const auto& rec : r.records) {
    if (rec.outcome != Outcome::Delivered) continue;
    const double d_output = rec.t_tx_start - rec.t_enqueue;
    const double d_prop = rec.distance_m / 299792458.0;
    EXPECT_NEAR(rec.t_rx_end - rec.t_enqueue, d_output + d_prop + d_tx + c.mac.d_input_s, 1e-6);
    EXPECT_LE(rec.t_enqueue, rec.t_tx_start);
    EXPECT_LE(rec.t_tx_start, rec.t_rx_end);
    ++n;
  }
  EXPECT_GT(n, 1000);
}

TEST(Simulation, ZeroAttenuationMatchesBaseline) {
  auto c = base(60);
  const auto a = run_simulation(c);
  c.anomalies.push_back({AnomalyKind::Attenuation, 2, 10.0, 50.0, 0.0});
  const auto b = run_simulation(c);
  EXPECT_EQ(io::trace_csv(a.records), io::trace_csv(b.records));
}

TEST(Simulation, FortyDbAttenuationLowersSinrByFortyDb) {
  auto c = base(150);
  c.channel.rician_k = std::numeric_limits<double>::infinity();
  c.channel.tx_power_dbm = 50;  // keep the attenuated link above the noise floor
  const auto a = run_simulation(c);
  c.anomalies.push_back({AnomalyKind::Attenuation, 3, 50.0, 100.0, 40.0});
  const auto b = run_simulation(c);
  const double drop = mean_sinr(a.records, {3, 2}, 50, 100) - mean_sinr(b.records, {3, 2}, 50, 100);
  EXPECT_NEAR(drop, 40.0, 1.0);
  EXPECT_NEAR(mean_sinr(a.records, {3, 2}, 0, 50), mean_sinr(b.records, {3, 2}, 0, 50), 1e-9);
}

TEST(Simulation, OverloadFillsTheQueue) {
  auto c = base(60);
  c.anomalies.push_back({AnomalyKind::Overload, 1, 20.0, 40.0, 200000.0});
  const auto r = run_simulation(c);
  int drops_in = 0, drops_out = 0;
  for (const auto& rec : r.records)
    if (rec.outcome == Outcome::DroppedQueue) {
      EXPECT_EQ(rec.link, (LinkId{1, 0}));
      (rec.t_enqueue >= 20.0 && rec.t_enqueue < 45.0 ? drops_in : drops_out)++;
    }
  EXPECT_GT(drops_in, 0);
  EXPECT_EQ(drops_out, 0);
}

TEST(Simulation, RecordsSortedByReferenceTime) {
  const auto r = run_simulation(base(30));
  for (std::size_t i = 1; i < r.records.size(); ++i)
    EXPECT_LE(r.records[i - 1].reference_time(), r.records[i].reference_time());
}

TEST(Simulation, PositionsSampledOnGrid) {
  auto c = base(10);
  const auto r = run_simulation(c);
  EXPECT_EQ(r.positions.size(), 101u * 4u);
  for (const auto& p : r.positions) {
    EXPECT_TRUE(c.mobility.bounds.contains(p.pos));
    if (p.node == 0) {
      EXPECT_EQ(p.pos, c.mobility.ground_station);
    }
  }
}

TEST(ScenarioValidation, RejectsBadConfigs) {
  auto bad = [](auto mutate) {
    auto c = base();
    mutate(c);
    EXPECT_THROW(run_simulation(c), InvalidArgument);
  };
  bad([](ScenarioConfig& c) { c.n_nodes = 1; });
  bad([](ScenarioConfig& c) { c.sim_duration_s = 0; });
  bad([](ScenarioConfig& c) { c.mac.queue_capacity = 0; });
  bad([](ScenarioConfig& c) { c.mac.max_retries = -1; });
  bad([](ScenarioConfig& c) { c.traffic.interval_jitter = 1.0; });
  bad([](ScenarioConfig& c) { c.mac.tx_start_jitter_s = 1.0; });
  bad([](ScenarioConfig& c) { c.anomalies.push_back({AnomalyKind::TotalFailure, 9, 1, 2, 0}); });
  bad([](ScenarioConfig& c) { c.anomalies.push_back({AnomalyKind::TotalFailure, 1, 5, 5, 0}); });
  bad([](ScenarioConfig& c) { c.anomalies.push_back({AnomalyKind::TotalFailure, 1, 10, 61, 0}); });
  bad([](ScenarioConfig& c) { c.anomalies.push_back({AnomalyKind::Attenuation, 1, 1, 2, -3}); });
  bad([](ScenarioConfig& c) { c.anomalies.push_back({AnomalyKind::Overload, 0, 1, 2, 1000}); });
}

TEST(InjectAnomaly, UnknownKindRejected) {
  AnomalyState s{4, 100, {}};
  AnomalyEvent e{static_cast<AnomalyKind>(42), 1, 0, 10, 0};
  EXPECT_THROW(inject_anomaly(s, e), InvalidArgument);
  s = inject_anomaly(s, {AnomalyKind::TotalFailure, 2, 10, 20, 0});
  EXPECT_TRUE(s.failed(2, 10));
  EXPECT_FALSE(s.failed(2, 20));
  EXPECT_FALSE(s.failed(1, 15));
}

TEST(InjectAnomaly, AttenuationStacksOnTouchingLinks) {
  AnomalyState s{4, 100, {}};
  s = inject_anomaly(s, {AnomalyKind::Attenuation, 2, 0, 50, 10});
  s = inject_anomaly(s, {AnomalyKind::Attenuation, 2, 25, 75, 5});
  EXPECT_DOUBLE_EQ(s.extra_loss_db(3, 2, 30), 15.0);
  EXPECT_DOUBLE_EQ(s.extra_loss_db(2, 1, 60), 5.0);
  EXPECT_DOUBLE_EQ(s.extra_loss_db(1, 0, 30), 0.0);
}

TEST(AffectedLinks, ByKind) {
  EXPECT_EQ(affected_links({AnomalyKind::Attenuation, 2, 0, 1, 1}, 4), (std::vector<LinkId>{{3, 2}, {2, 1}}));
  EXPECT_EQ(affected_links({AnomalyKind::Overload, 1, 0, 1, 1}, 4), (std::vector<LinkId>{{1, 0}}));
  EXPECT_EQ(affected_links({AnomalyKind::TotalFailure, 3, 0, 1, 0}, 4),
            (std::vector<LinkId>{{3, 2}, {2, 1}, {1, 0}}));
  EXPECT_EQ(chain_links(3), (std::vector<LinkId>{{2, 1}, {1, 0}}));
}

TEST(LinkId, ParseRoundTrip) {
  EXPECT_EQ(parse_link("3->2"), (LinkId{3, 2}));
  EXPECT_THROW(parse_link("3-2"), InvalidArgument);
  EXPECT_THROW(parse_link("a->2"), InvalidArgument);
}
