#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metadetect/errors.hpp"
#include "metadetect/metrics.hpp"
#include "metadetect/simcore.hpp"

namespace metadetect::io {

using sim::TraceRecord;

inline const char* kTraceHeader =
    "link_src,link_dst,seq,t_enqueue,t_tx_start,t_rx_end,outcome,rssi_dbm,sinr_db,lqi,retries,distance_m";
inline const char* kPositionsHeader = "t,node_id,x,y,z";

/// Raised for malformed input files; message names the row and column.
struct SchemaError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw IoError("failed reading " + path);
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("failed writing " + path);
}

/// FNV-1a 64-bit, hex encoded. Used as the run identifier of a trace.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- number formatting / parsing ----

/// Shortest text that reads back to the same double; empty for NaN.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

/// Iterates non-empty lines with 1-based line numbers.
struct Lines {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t number = 0;
  bool next(std::string_view& out) {
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      const auto end = nl == std::string_view::npos ? text.size() : nl;
      out = trim(text.substr(pos, end - pos));
      pos = end + 1;
      ++number;
      if (!out.empty()) return true;
    }
    return false;
  }
};

class RowReader {
 public:
  RowReader(std::string file, std::size_t line, std::vector<std::string_view> fields,
            const std::vector<std::string>& names)
      : file_(std::move(file)), line_(line), fields_(std::move(fields)), names_(names) {
    if (fields_.size() != names_.size())
      throw SchemaError(where() + ": expected " + std::to_string(names_.size()) + " columns, found " +
                        std::to_string(fields_.size()));
  }

  std::string_view raw(std::size_t c) const { return trim(fields_[c]); }

  double real(std::size_t c, bool allow_empty = true) const {
    const auto s = raw(c);
    if (s.empty()) {
      if (allow_empty) return sim::kNaN;
      fail(c, "value required");
    }
    if (s == "inf" || s == "+inf") return sim::kInf;
    if (s == "-inf") return -sim::kInf;
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail(c, "not a number: '" + std::string(s) + "'");
    return v;
  }

  std::int64_t integer(std::size_t c) const {
    const auto s = raw(c);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
      fail(c, "not an integer: '" + std::string(s) + "'");
    return v;
  }

  [[noreturn]] void fail(std::size_t c, const std::string& msg) const {
    throw SchemaError(where() + ", column " + names_[c] + ": " + msg);
  }
  std::string where() const { return file_ + ": row " + std::to_string(line_); }

 private:
  std::string file_;
  std::size_t line_;
  std::vector<std::string_view> fields_;
  const std::vector<std::string>& names_;
};

inline std::vector<std::string> header_names(std::string_view header) {
  std::vector<std::string> out;
  for (auto f : split(header)) out.emplace_back(trim(f));
  return out;
}

inline void expect_header(std::string_view got, std::string_view want, const std::string& name) {
  if (header_names(got) != header_names(want))
    throw SchemaError(name + ": row 1: header must be '" + std::string(want) + "'");
}

}  // namespace detail

// ---- trace CSV ----

inline std::string trace_csv(const std::vector<TraceRecord>& records) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.link.src) + ',' + std::to_string(r.link.dst) + ',' + std::to_string(r.seq) + ',' +
           fmt(r.t_enqueue) + ',' + fmt(r.t_tx_start) + ',' + fmt(r.t_rx_end) + ',' +
           std::string(sim::to_string(r.outcome)) + ',' + fmt(r.rssi_dbm) + ',' + fmt(r.sinr_db) + ',' +
           (r.lqi ? std::to_string(*r.lqi) : std::string()) + ',' + std::to_string(r.retries) + ',' +
           fmt(r.distance_m) + '\n';
  }
  return out;
}

/// Parse a trace. Accepts CSVs from other producers as long as the header
/// matches; rows are re-sorted by reference time if needed.
inline std::vector<TraceRecord> parse_trace_csv(std::string_view text, const std::string& name = "trace") {
  detail::Lines lines{text};
  std::string_view line;
  if (!lines.next(line)) throw SchemaError(name + ": empty file (header missing)");
  detail::expect_header(line, kTraceHeader, name);
  const auto names = detail::header_names(kTraceHeader);

  std::vector<TraceRecord> out;
  while (lines.next(line)) {
    detail::RowReader row(name, lines.number, detail::split(line), names);
    TraceRecord r;
    r.link.src = static_cast<int>(row.integer(0));
    r.link.dst = static_cast<int>(row.integer(1));
    if (r.link.src < 0 || r.link.dst < 0) row.fail(0, "node ids must be >= 0");
    r.seq = row.integer(2);
    r.t_enqueue = row.real(3, false);
    r.t_tx_start = row.real(4);
    r.t_rx_end = row.real(5);
    const auto outcome = sim::parse_outcome(row.raw(6));
    if (!outcome) row.fail(6, "unknown outcome '" + std::string(row.raw(6)) + "'");
    r.outcome = *outcome;
    r.rssi_dbm = row.real(7);
    r.sinr_db = row.real(8);
    if (!row.raw(9).empty()) {
      const auto q = row.integer(9);
      if (q < 0 || q > 255) row.fail(9, "lqi must be in 0..255");
      r.lqi = static_cast<int>(q);
    }
    r.retries = static_cast<int>(row.integer(10));
    if (r.retries < 0) row.fail(10, "retries must be >= 0");
    r.distance_m = row.real(11);
    if (r.transmitted() && !std::isfinite(r.t_tx_start)) row.fail(4, "transmitted packet needs t_tx_start");
    if (r.outcome == sim::Outcome::Delivered && !std::isfinite(r.t_rx_end)) row.fail(5, "delivered packet needs t_rx_end");
    if (std::isfinite(r.t_tx_start) && r.t_tx_start < r.t_enqueue) row.fail(4, "t_tx_start before t_enqueue");
    if (std::isfinite(r.t_rx_end) && std::isfinite(r.t_tx_start) && r.t_rx_end < r.t_tx_start)
      row.fail(5, "t_rx_end before t_tx_start");
    out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), [](const TraceRecord& a, const TraceRecord& b) {
    return a.reference_time() < b.reference_time();
  });
  return out;
}

// ---- positions CSV ----

inline std::string positions_csv(const std::vector<sim::PositionSample>& samples) {
  std::string out = std::string(kPositionsHeader) + "\n";
  for (const auto& p : samples)
    out += fmt(p.t) + ',' + std::to_string(p.node) + ',' + fmt(p.pos.x) + ',' + fmt(p.pos.y) + ',' + fmt(p.pos.z) + '\n';
  return out;
}

inline std::vector<sim::PositionSample> parse_positions_csv(std::string_view text, const std::string& name = "positions") {
  detail::Lines lines{text};
  std::string_view line;
  if (!lines.next(line)) throw SchemaError(name + ": empty file (header missing)");
  detail::expect_header(line, kPositionsHeader, name);
  const auto names = detail::header_names(kPositionsHeader);
  std::vector<sim::PositionSample> out;
  while (lines.next(line)) {
    detail::RowReader row(name, lines.number, detail::split(line), names);
    sim::PositionSample p;
    p.t = row.real(0, false);
    p.node = static_cast<int>(row.integer(1));
    p.pos = {row.real(2, false), row.real(3, false), row.real(4, false)};
    if (!std::isfinite(p.t) || !p.pos.finite()) row.fail(0, "non-finite value");
    if (p.node < 0) row.fail(1, "node must be >= 0");
    out.push_back(p);
  }
  return out;
}

// ---- metrics CSV ----

inline std::string metrics_csv(const std::vector<metrics::MetricWindow>& windows) {
  std::string out = "link_src,link_dst,t_start,t_end";
  for (const auto& n : metrics::metric_names()) out += "," + n;
  out += '\n';
  for (const auto& w : windows) {
    out += std::to_string(w.link.src) + ',' + std::to_string(w.link.dst) + ',' + fmt(w.t_start) + ',' + fmt(w.t_end);
    for (const auto& n : metrics::metric_names()) out += ',' + fmt(metrics::metric_value(w, n));
    out += '\n';
  }
  return out;
}

inline std::vector<metrics::MetricWindow> parse_metrics_csv(std::string_view text, const std::string& name = "metrics") {
  std::string header = "link_src,link_dst,t_start,t_end";
  for (const auto& n : metrics::metric_names()) header += "," + n;
  detail::Lines lines{text};
  std::string_view line;
  if (!lines.next(line)) throw SchemaError(name + ": empty file (header missing)");
  detail::expect_header(line, header, name);
  const auto names = detail::header_names(header);
  std::vector<metrics::MetricWindow> out;
  while (lines.next(line)) {
    detail::RowReader row(name, lines.number, detail::split(line), names);
    metrics::MetricWindow w;
    w.link = {static_cast<int>(row.integer(0)), static_cast<int>(row.integer(1))};
    w.t_start = row.real(2, false);
    w.t_end = row.real(3, false);
    std::size_t c = 4;
    w.rssi_dbm = row.real(c++);
    w.lqi = row.real(c++);
    w.sinr_db = row.real(c++);
    w.pcr = row.real(c++);
    w.sh_delay_s = row.real(c++);
    w.sh_jitter_s = row.real(c++);
    w.sh_throughput_bps = row.real(c++);
    w.sh_prr = row.real(c++);
    w.beta = row.real(c++);
    w.queue_drop_count = row.integer(c++);
    w.queue_occupancy = row.real(c++, false);
    w.packets_received = row.integer(c++);
    w.distance_m = row.real(c++);
    w.n_packets = row.integer(c++);
    out.push_back(w);
  }
  return out;
}

// ---- ground truth JSON ----

inline nlohmann::json to_json(const sim::AnomalyEvent& e) {
  return {{"kind", sim::to_string(e.kind)}, {"node", e.node}, {"t_start", e.t_start}, {"t_end", e.t_end},
          {"magnitude", e.magnitude}};
}

inline nlohmann::json ground_truth_json(const sim::GroundTruthLog& log, int n_nodes, const std::string& run_id) {
  auto events = nlohmann::json::array();
  for (const auto& g : log.entries) {
    auto j = to_json(g.event);
    auto links = nlohmann::json::array();
    for (const auto& l : g.affected) links.push_back(l.str());
    j["affected"] = links;
    events.push_back(j);
  }
  return {{"run_id", run_id}, {"n_nodes", n_nodes}, {"events", events}};
}

struct GroundTruthFile {
  std::string run_id;  // empty when the file carries none
  sim::GroundTruthLog log;
};

/// Accepts the object form written above or a bare array of events. Events
/// without an "affected" list need n_nodes (from the object or the caller).
inline GroundTruthFile parse_ground_truth(const nlohmann::json& j, int n_nodes_hint = 0) {
  GroundTruthFile out;
  const nlohmann::json* events = &j;
  int n_nodes = n_nodes_hint;
  if (j.is_object()) {
    out.run_id = j.value("run_id", std::string());
    n_nodes = j.value("n_nodes", n_nodes_hint);
    if (!j.contains("events")) throw SchemaError("ground truth: missing 'events'");
    events = &j.at("events");
  }
  if (!events->is_array()) throw SchemaError("ground truth: events must be an array");
  std::size_t i = 0;
  for (const auto& e : *events) {
    try {
      sim::GroundTruthEntry g;
      g.event.kind = sim::parse_anomaly_kind(e.at("kind").get<std::string>());
      g.event.node = e.at("node").get<int>();
      g.event.t_start = e.at("t_start").get<double>();
      g.event.t_end = e.at("t_end").get<double>();
      g.event.magnitude = e.value("magnitude", 0.0);
      if (e.contains("affected")) {
        for (const auto& l : e.at("affected")) g.affected.push_back(sim::parse_link(l.get<std::string>()));
      } else {
        if (n_nodes < 2) throw SchemaError("no 'affected' list and chain length unknown");
        g.affected = sim::affected_links(g.event, n_nodes);
      }
      out.log.entries.push_back(std::move(g));
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError("ground truth: event " + std::to_string(i) + ": " + ex.what());
    } catch (const InvalidArgument& ex) {
      throw SchemaError("ground truth: event " + std::to_string(i) + ": " + ex.what());
    }
    ++i;
  }
  return out;
}

inline nlohmann::json parse_json_text(std::string_view text, const std::string& name) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    throw SchemaError(name + ": " + ex.what());
  }
}

}  // namespace metadetect::io
