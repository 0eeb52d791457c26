#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "metadetect/errors.hpp"
#include "metadetect/io.hpp"
#include "metadetect/localize.hpp"
#include "metadetect/mrengine.hpp"
#include "metadetect/simcore.hpp"

// Small TOML subset: [section], [[array-of-tables]], key = value with numbers,
// inf, booleans, "strings" and flat numeric arrays; '#' comments.

namespace metadetect::config {

struct ConfigError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct Value {
  std::string raw;
  std::size_t line = 0;
  bool used = false;
};

struct Table {
  std::string name;
  std::size_t line = 0;
  std::map<std::string, Value> entries;
};

struct Document {
  std::string source;  // file name for diagnostics
  std::vector<Table> tables;  // first one is the unnamed root table

  [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + msg);
  }
};

namespace detail {
inline std::string_view trim(std::string_view s) { return io::detail::trim(s); }

inline std::string_view strip_comment(std::string_view s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

inline bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}
}  // namespace detail

inline Document parse(std::string_view text, const std::string& source = "config") {
  Document doc{source, {Table{"", 0, {}}}};
  std::set<std::string> seen_sections;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    const auto line = detail::trim(detail::strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    ++line_no;
    if (line.empty()) {
      if (nl == std::string_view::npos) break;
      continue;
    }
    if (line.front() == '[') {
      const bool array = line.starts_with("[[");
      if (array ? !line.ends_with("]]") : !line.ends_with("]")) doc.fail(line_no, "unterminated section header");
      const auto name = std::string(detail::trim(line.substr(array ? 2 : 1, line.size() - (array ? 4 : 2))));
      if (!detail::valid_key(name)) doc.fail(line_no, "bad section name '" + name + "'");
      if (!array && !seen_sections.insert(name).second) doc.fail(line_no, "section [" + name + "] defined twice");
      doc.tables.push_back({array ? "[]" + name : name, line_no, {}});
    } else {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) doc.fail(line_no, "expected key = value");
      const auto key = std::string(detail::trim(line.substr(0, eq)));
      const auto val = std::string(detail::trim(line.substr(eq + 1)));
      if (!detail::valid_key(key)) doc.fail(line_no, "bad key '" + key + "'");
      if (val.empty()) doc.fail(line_no, "missing value for '" + key + "'");
      auto& entries = doc.tables.back().entries;
      if (entries.count(key)) doc.fail(line_no, "duplicate key '" + key + "'");
      entries[key] = {val, line_no, false};
    }
    if (nl == std::string_view::npos) break;
  }
  return doc;
}

/// Typed access to one table; every read marks the key as used so leftover
/// (misspelt) keys can be reported.
class Section {
 public:
  Section(Document& doc, Table* t) : doc_(doc), t_(t) {}

  bool present() const { return t_ != nullptr; }
  std::size_t line() const { return t_ ? t_->line : 0; }

  std::optional<double> real(const std::string& key) {
    auto* v = find(key);
    if (!v) return std::nullopt;
    std::string_view s = v->raw;
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    if (s == "inf" || s == "+inf") return sim::kInf;
    if (s == "-inf") return -sim::kInf;
    if (s.starts_with('+')) s.remove_prefix(1);
    double d = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
    if (ec != std::errc{} || ptr != s.data() + s.size()) doc_.fail(v->line, "'" + key + "' must be a number");
    return d;
  }

  std::optional<std::int64_t> integer(const std::string& key) {
    auto* v = find(key);
    if (!v) return std::nullopt;
    std::string_view s = v->raw;
    if (s.starts_with('+')) s.remove_prefix(1);
    std::int64_t i = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
    if (ec != std::errc{} || ptr != s.data() + s.size()) doc_.fail(v->line, "'" + key + "' must be an integer");
    return i;
  }

  std::optional<std::uint64_t> unsigned_integer(const std::string& key) {
    auto* v = find(key);
    if (!v) return std::nullopt;
    std::uint64_t i = 0;
    auto [ptr, ec] = std::from_chars(v->raw.data(), v->raw.data() + v->raw.size(), i);
    if (ec != std::errc{} || ptr != v->raw.data() + v->raw.size())
      doc_.fail(v->line, "'" + key + "' must be a non-negative integer");
    return i;
  }

  std::optional<bool> boolean(const std::string& key) {
    auto* v = find(key);
    if (!v) return std::nullopt;
    if (v->raw == "true") return true;
    if (v->raw == "false") return false;
    doc_.fail(v->line, "'" + key + "' must be true or false");
  }

  std::optional<std::string> string(const std::string& key) {
    auto* v = find(key);
    if (!v) return std::nullopt;
    if (v->raw.size() < 2 || v->raw.front() != '"' || v->raw.back() != '"')
      doc_.fail(v->line, "'" + key + "' must be a quoted string");
    return v->raw.substr(1, v->raw.size() - 2);
  }

  std::optional<mobility::Vec3> vec3(const std::string& key) {
    auto* v = find(key);
    if (!v) return std::nullopt;
    std::string_view s = v->raw;
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') doc_.fail(v->line, "'" + key + "' must be [x, y, z]");
    auto parts = io::detail::split(s.substr(1, s.size() - 2));
    if (parts.size() != 3) doc_.fail(v->line, "'" + key + "' must have 3 components");
    double c[3];
    for (int i = 0; i < 3; ++i) {
      auto p = detail::trim(parts[static_cast<std::size_t>(i)]);
      auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), c[i]);
      if (p.empty() || ec != std::errc{} || ptr != p.data() + p.size())
        doc_.fail(v->line, "'" + key + "' component " + std::to_string(i) + " is not a number");
    }
    return mobility::Vec3{c[0], c[1], c[2]};
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    if (t_)
      for (const auto& [k, v] : t_->entries) out.push_back(k);
    return out;
  }

  std::size_t key_line(const std::string& key) const {
    if (!t_) return 0;
    auto it = t_->entries.find(key);
    return it == t_->entries.end() ? t_->line : it->second.line;
  }

 private:
  Value* find(const std::string& key) {
    if (!t_) return nullptr;
    auto it = t_->entries.find(key);
    if (it == t_->entries.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  Document& doc_;
  Table* t_;
};

/// Options for everything downstream of the trace.
struct DetectOptions {
  double window_s = 1.0;
  int max_lag = 5;
  bool spline = true;
  double cap_factor = 10.0;
  double grace_s = 5.0;
  std::vector<mr::MrSpec> specs = mr::default_mr_specs();
  std::string localize_metric = "sh_prr";
  localize::ExtractOptions extract;
  int packet_bytes = 100;
  int queue_capacity = 50;
  int parallel = 1;

  void validate() const {
    if (!(window_s > 0.0) || !std::isfinite(window_s)) throw InvalidArgument("window_s must be > 0");
    if (max_lag < 1) throw InvalidArgument("max_lag must be >= 1");
    if (!(cap_factor > 0.0)) throw InvalidArgument("cap_factor must be > 0");
    if (!(grace_s >= 0.0)) throw InvalidArgument("grace_s must be >= 0");
    if (packet_bytes < 1) throw InvalidArgument("packet_bytes must be >= 1");
    if (queue_capacity < 1) throw InvalidArgument("queue_capacity must be >= 1");
    if (parallel < 1) throw InvalidArgument("parallel must be >= 1");
    for (const auto& s : specs) s.validate();
    (void)metrics::metric_value(metrics::MetricWindow{}, localize_metric);
    if (extract.patch < 3 || extract.patch > 7 || extract.patch % 2 == 0)
      throw InvalidArgument("patch must be odd and in [3,7]");
    if (extract.warmup_rows < 1 || extract.min_line_rows < 1 || extract.min_run < 1 || extract.persistence < 1)
      throw InvalidArgument("warmup_rows, min_line_rows, min_run and persistence must be >= 1");
    if (!(extract.k_sigma > 0)) throw InvalidArgument("k_sigma must be > 0");
  }
};

struct RunConfig {
  sim::ScenarioConfig scenario;
  DetectOptions detect;
};

inline RunConfig load(std::string_view text, const std::string& source = "config") {
  Document doc = parse(text, source);
  RunConfig rc;
  auto& sc = rc.scenario;
  auto& dt = rc.detect;

  auto section = [&](const std::string& name) -> Section {
    for (auto& t : doc.tables)
      if (t.name == name) return Section(doc, &t);
    return Section(doc, nullptr);
  };

  static const std::set<std::string> known{"",        "simulation", "traffic",  "mac",      "channel",
                                           "mobility", "[]anomaly", "metrics",  "preprocess", "mrengine",
                                           "mrengine.signs", "localize"};
  for (const auto& t : doc.tables)
    if (!known.count(t.name)) doc.fail(t.line, "unknown section [" + t.name + "]");
  if (!doc.tables.front().entries.empty())
    doc.fail(doc.tables.front().entries.begin()->second.line, "keys must belong to a section");

  std::vector<std::pair<Section, std::vector<std::string>>> checked;  // for error-to-line mapping

  {
    auto s = section("simulation");
    if (auto v = s.integer("n_nodes")) sc.n_nodes = static_cast<int>(*v);
    if (auto v = s.real("sim_duration_s")) sc.sim_duration_s = *v;
    if (auto v = s.unsigned_integer("seed")) sc.seed = *v;
    checked.push_back({s, s.keys()});
  }
  {
    auto s = section("traffic");
    if (auto v = s.real("onoff_on_s")) sc.traffic.onoff_on_s = *v;
    if (auto v = s.real("onoff_off_s")) sc.traffic.onoff_off_s = *v;
    if (auto v = s.real("data_rate_bps")) sc.traffic.data_rate_bps = *v;
    if (auto v = s.integer("packet_bytes")) sc.traffic.packet_bytes = static_cast<int>(*v);
    if (auto v = s.real("interval_jitter")) sc.traffic.interval_jitter = *v;
    checked.push_back({s, s.keys()});
  }
  {
    auto s = section("mac");
    if (auto v = s.integer("queue_capacity")) sc.mac.queue_capacity = static_cast<int>(*v);
    if (auto v = s.integer("max_retries")) sc.mac.max_retries = static_cast<int>(*v);
    if (auto v = s.real("link_rate_bps")) sc.mac.link_rate_bps = *v;
    if (auto v = s.real("slot_guard_s")) sc.mac.slot_guard_s = *v;
    if (auto v = s.real("d_input_s")) sc.mac.d_input_s = *v;
    if (auto v = s.real("tx_start_jitter_s")) sc.mac.tx_start_jitter_s = *v;
    checked.push_back({s, s.keys()});
  }
  {
    auto s = section("channel");
    auto& c = sc.channel;
    if (auto v = s.real("tx_power_dbm")) c.tx_power_dbm = *v;
    if (auto v = s.real("pl_exponent")) c.pl_exponent = *v;
    if (auto v = s.real("pl_ref_db")) c.pl_ref_db = *v;
    if (auto v = s.real("rician_k")) c.rician_k = *v;
    if (auto v = s.real("noise_floor_dbm")) c.noise_floor_dbm = *v;
    if (auto v = s.real("per_midpoint_db")) c.per_midpoint_db = *v;
    if (auto v = s.real("per_slope")) c.per_slope = *v;
    if (auto v = s.real("lqi_min_db")) c.lqi_min_db = *v;
    if (auto v = s.real("lqi_max_db")) c.lqi_max_db = *v;
    checked.push_back({s, s.keys()});
  }
  {
    auto s = section("mobility");
    auto& m = sc.mobility;
    if (auto v = s.real("alpha")) m.alpha = *v;
    if (auto v = s.real("sigma_mps")) m.sigma_mps = *v;
    if (auto v = s.real("sample_interval_s")) m.sample_interval_s = *v;
    if (auto v = s.vec3("bounds_lo")) m.bounds.lo = *v;
    if (auto v = s.vec3("bounds_hi")) m.bounds.hi = *v;
    if (auto v = s.vec3("ground_station")) m.ground_station = *v;
    if (auto v = s.vec3("heading")) m.heading = *v;
    if (auto v = s.real("hop_spacing_m")) m.hop_spacing_m = *v;
    if (auto v = s.real("altitude_m")) m.altitude_m = *v;
    if (auto v = s.real("contraction_mps")) m.contraction_mps = *v;
    checked.push_back({s, s.keys()});
  }
  {
    auto s = section("metrics");
    if (auto v = s.real("window_s")) dt.window_s = *v;
    if (auto v = s.integer("max_lag")) dt.max_lag = static_cast<int>(*v);
    checked.push_back({s, s.keys()});
  }
  {
    auto s = section("preprocess");
    if (auto v = s.boolean("spline")) dt.spline = *v;
    if (auto v = s.real("cap_factor")) dt.cap_factor = *v;
    checked.push_back({s, s.keys()});
  }
  {
    auto s = section("mrengine");
    std::optional<mr::CorrKind> kind;
    if (auto v = s.string("corr")) {
      try {
        kind = mr::parse_corr_kind(*v);
      } catch (const InvalidArgument& e) {
        doc.fail(s.key_line("corr"), e.what());
      }
    }
    const auto tau = s.real("tau");
    const auto alpha = s.real("alpha");
    const auto len = s.integer("window_len");
    const auto step = s.integer("step");
    if (auto v = s.real("grace_s")) dt.grace_s = *v;
    for (auto& spec : dt.specs) {
      if (kind) spec.kind = *kind;
      if (tau) spec.tau = *tau;
      if (alpha) spec.alpha = *alpha;
      if (len) spec.window_len = static_cast<int>(*len);
      if (step) spec.step = static_cast<int>(*step);
    }
    checked.push_back({s, s.keys()});

    auto signs = section("mrengine.signs");
    for (const auto& key : signs.keys()) {
      auto it = std::find_if(dt.specs.begin(), dt.specs.end(), [&](const mr::MrSpec& m) { return m.id == key; });
      if (it == dt.specs.end()) doc.fail(signs.key_line(key), "unknown relation '" + key + "'");
      const auto v = signs.integer(key);
      if (*v != 1 && *v != -1) doc.fail(signs.key_line(key), "sign must be +1 or -1");
      it->anomalous_sign = static_cast<int>(*v);
    }
  }
  {
    auto s = section("localize");
    if (auto v = s.string("metric")) dt.localize_metric = *v;
    if (auto v = s.integer("patch")) dt.extract.patch = static_cast<int>(*v);
    if (auto v = s.integer("warmup_rows")) dt.extract.warmup_rows = static_cast<int>(*v);
    if (auto v = s.integer("min_line_rows")) dt.extract.min_line_rows = static_cast<int>(*v);
    if (auto v = s.integer("min_run")) dt.extract.min_run = static_cast<int>(*v);
    if (auto v = s.integer("persistence")) dt.extract.persistence = static_cast<int>(*v);
    if (auto v = s.real("k_sigma")) dt.extract.k_sigma = *v;
    checked.push_back({s, s.keys()});
  }

  for (auto& t : doc.tables) {
    if (t.name != "[]anomaly") continue;
    Section s(doc, &t);
    sim::AnomalyEvent e;
    const auto kind = s.string("kind");
    if (!kind) doc.fail(t.line, "anomaly needs 'kind'");
    try {
      e.kind = sim::parse_anomaly_kind(*kind);
    } catch (const InvalidArgument& ex) {
      doc.fail(s.key_line("kind"), ex.what());
    }
    const auto node = s.integer("node");
    const auto t0 = s.real("t_start");
    const auto t1 = s.real("t_end");
    if (!node || !t0 || !t1) doc.fail(t.line, "anomaly needs node, t_start and t_end");
    e.node = static_cast<int>(*node);
    e.t_start = *t0;
    e.t_end = *t1;
    if (auto v = s.real("magnitude")) e.magnitude = *v;
    if (sc.n_nodes >= 2 && sc.sim_duration_s > 0.0) {
      try {
        sim::validate_event(e, sc.n_nodes, sc.sim_duration_s);
      } catch (const InvalidArgument& ex) {
        doc.fail(t.line, ex.what());
      }
    }
    sc.anomalies.push_back(e);
  }

  for (const auto& t : doc.tables)
    for (const auto& [k, v] : t.entries)
      if (!v.used) doc.fail(v.line, "unknown key '" + k + "'");

  dt.packet_bytes = sc.traffic.packet_bytes;
  dt.queue_capacity = sc.mac.queue_capacity;

  // Map semantic errors back to the line of the key they name.
  auto locate = [&](const std::string& msg) -> std::size_t {
    for (auto& [s, keys] : checked)
      for (const auto& k : keys)
        if (msg.starts_with(k + " ") || msg.find(" " + k + " ") != std::string::npos ||
            msg.find(": " + k + " ") != std::string::npos)
          return s.key_line(k);
    return 0;
  };
  try {
    sc.validate();
    dt.validate();
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    std::size_t line = locate(msg);
    if (line == 0 && msg.starts_with("anomaly"))
      for (const auto& t : doc.tables)
        if (t.name == "[]anomaly") {
          line = t.line;
          break;
        }
    if (line) doc.fail(line, msg);
    throw ConfigError(source + ": " + msg);
  }
  return rc;
}

}  // namespace metadetect::config
