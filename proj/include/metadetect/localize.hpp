#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "metadetect/errors.hpp"
#include "metadetect/metrics.hpp"
#include "metadetect/preprocess.hpp"

namespace metadetect::localize {

using sim::LinkId;

/// Rows are time windows (top = earliest), columns are links in traffic
/// order. Row-major storage.
struct HeatMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> cells;
  std::vector<LinkId> links;        // one per column (may be empty for synthetic maps)
  std::vector<double> row_times;    // one per row (may be empty)

  HeatMap() = default;
  HeatMap(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), cells(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return cells[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  double row_time(std::size_t r) const { return r < row_times.size() ? row_times[r] : static_cast<double>(r); }
};

/// Lay out one metric as a heat map. Columns follow `chain`; when it is
/// empty the windows' own link order is used and must already be in traffic
/// direction. Missing cells are imputed per metric unless impute is false.
inline HeatMap build_heatmap(std::span<const metrics::MetricWindow> windows, const std::string& metric,
                             std::vector<LinkId> chain = {}, bool impute = true) {
  std::vector<LinkId> seen;
  for (const auto& w : windows)
    if (std::find(seen.begin(), seen.end(), w.link) == seen.end()) seen.push_back(w.link);
  if (chain.empty()) {
    for (std::size_t i = 1; i < seen.size(); ++i)
      if (seen[i].src >= seen[i - 1].src)
        throw InvalidArgument("build_heatmap: links not in traffic order; pass an explicit chain order");
    chain = seen;
  } else {
    for (const auto& l : seen)
      if (std::find(chain.begin(), chain.end(), l) == chain.end())
        throw InvalidArgument("build_heatmap: link " + l.str() + " is not in the chain order");
  }

  std::vector<double> times;
  for (const auto& w : windows) times.push_back(w.t_start);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  HeatMap m(times.size(), chain.size(), metrics::kNaN);
  m.links = chain;
  m.row_times = times;
  std::vector<std::size_t> filled(chain.size(), 0);
  for (const auto& w : windows) {
    const auto c = static_cast<std::size_t>(std::find(chain.begin(), chain.end(), w.link) - chain.begin());
    const auto r = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), w.t_start) - times.begin());
    m.at(r, c) = metrics::metric_value(w, metric);
    ++filled[c];
  }
  for (std::size_t c = 0; c < chain.size(); ++c)
    if (filled[c] != times.size())
      throw InvalidArgument("build_heatmap: ragged coverage for link " + chain[c].str());

  if (impute) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      preprocess::MetricSeries s{metric, {}, {}};
      for (std::size_t r = 0; r < m.rows; ++r) s.values.push_back(m.at(r, c));
      s = preprocess::impute(s);
      for (std::size_t r = 0; r < m.rows; ++r) m.at(r, c) = s.values[r];
    }
  }
  return m;
}

namespace detail {
inline void check_patch(const HeatMap& m, int patch) {
  if (patch < 3 || patch > 7 || patch % 2 == 0) throw InvalidArgument("patch must be odd and in [3,7]");
  if (static_cast<std::size_t>(patch) > std::min(m.rows, m.cols))
    throw InvalidArgument("patch larger than the map");
}
}  // namespace detail

/// Each cell becomes the number of in-bounds patch neighbours strictly less
/// than it.
inline HeatMap rank_transform(const HeatMap& m, int patch = 3) {
  detail::check_patch(m, patch);
  const int h = patch / 2;
  HeatMap out = m;
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) {
      int count = 0;
      const double v = m.at(r, c);
      for (int dr = -h; dr <= h; ++dr)
        for (int dc = -h; dc <= h; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const auto rr = static_cast<std::ptrdiff_t>(r) + dr, cc = static_cast<std::ptrdiff_t>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(m.rows) || cc >= static_cast<std::ptrdiff_t>(m.cols))
            continue;
          count += m.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) < v;
        }
      out.at(r, c) = count;
    }
  return out;
}

/// Bit k (patch scan order, centre skipped) is set when that neighbour is
/// strictly less than the centre; out-of-bounds neighbours give 0.
struct CensusMap {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint64_t> bits;
  std::uint64_t at(std::size_t r, std::size_t c) const { return bits[r * cols + c]; }
};

inline CensusMap census_transform(const HeatMap& m, int patch = 3) {
  detail::check_patch(m, patch);
  const int h = patch / 2;
  CensusMap out{m.rows, m.cols, std::vector<std::uint64_t>(m.rows * m.cols, 0)};
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::uint64_t code = 0;
      int bit = 0;
      const double v = m.at(r, c);
      for (int dr = -h; dr <= h; ++dr)
        for (int dc = -h; dc <= h; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const auto rr = static_cast<std::ptrdiff_t>(r) + dr, cc = static_cast<std::ptrdiff_t>(c) + dc;
          const bool in = rr >= 0 && cc >= 0 && rr < static_cast<std::ptrdiff_t>(m.rows) &&
                          cc < static_cast<std::ptrdiff_t>(m.cols);
          if (in && m.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) < v) code |= std::uint64_t{1} << bit;
          ++bit;
        }
      out.bits[r * m.cols + c] = code;
    }
  return out;
}

inline int hamming(const CensusMap& a, const CensusMap& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw InvalidArgument("hamming: shape mismatch");
  int d = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) d += __builtin_popcountll(a.bits[i] ^ b.bits[i]);
  return d;
}

struct LocalizationResult {
  std::size_t link_index = 0;  // heat-map column
  std::optional<LinkId> link;
  std::optional<int> node;     // receiver of the first degraded link
  std::size_t onset_row = 0;
  double onset_time_s = 0.0;
  double confidence = 0.0;
};

struct ExtractOptions {
  int patch = 3;
  int warmup_rows = 10;    // rows assumed anomaly-free
  int min_line_rows = 8;   // Hough segment length
  int min_run = 24;        // consecutive voting segments that make a line
  int persistence = 3;     // rows the order change must hold for the onset
  double k_sigma = 3.0;
  double floor = 0.5;      // E is integer-valued; keeps zero-variance warm-ups usable
  double min_flip_fraction = 0.8;  // share of line rows holding the new column order
  double min_flip_gain = 0.3;      // ... above its share during warm-up
};

/// Per-boundary edge response, accumulator and run data; exposed for tests
/// and for the localization JSON.
struct LineEvidence {
  std::vector<double> threshold;        // per boundary
  std::vector<int> votes;               // rows over threshold, per boundary
  std::vector<int> longest_run;         // per boundary
  std::vector<std::size_t> run_start;   // start row of that run
};

namespace detail {

/// Lower median of column 0 over the warm-up rows.
inline double reference_level(const HeatMap& m, std::size_t warm) {
  std::vector<double> v;
  for (std::size_t r = 0; r < warm; ++r) v.push_back(m.at(r, 0));
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

/// Prepend a constant column holding the healthy level of the first link,
/// so a degradation of the first link still forms a boundary.
inline HeatMap augment(const HeatMap& m, std::size_t warm) {
  HeatMap a(m.rows, m.cols + 1);
  const double ref = reference_level(m, warm);
  for (std::size_t r = 0; r < m.rows; ++r) {
    a.at(r, 0) = ref;
    for (std::size_t c = 0; c < m.cols; ++c) a.at(r, c + 1) = m.at(r, c);
  }
  a.row_times = m.row_times;
  return a;
}

inline std::size_t warmup_rows(const HeatMap& m, int requested) {
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(requested, 1)), 1, std::max<std::size_t>(1, m.rows / 2));
}

}  // namespace detail

/// Boundary responses of a rank map: E(r,b) = sum_dr w(dr) (R(r+dr,b+1) - R(r+dr,b)),
/// w = [1,2,1], rows clamped at the edges.
inline HeatMap boundary_sobel(const HeatMap& rank) {
  HeatMap e(rank.rows, rank.cols - 1);
  const double w[3] = {1.0, 2.0, 1.0};
  for (std::size_t r = 0; r < rank.rows; ++r)
    for (std::size_t b = 0; b + 1 < rank.cols; ++b) {
      double s = 0.0;
      for (int dr = -1; dr <= 1; ++dr) {
        const auto rr = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(r) + dr, 0, static_cast<std::ptrdiff_t>(rank.rows) - 1));
        s += w[dr + 1] * (rank.at(rr, b + 1) - rank.at(rr, b));
      }
      e.at(r, b) = s;
    }
  return e;
}

/// Vertical Hough vote: the accumulator for boundary b at row r is the signed
/// edge response summed over the segment [r, r + L), L = min_line_rows. A row
/// votes when that sum departs from its warm-up level by more than k_sigma
/// null standard deviations. The null spread comes from the MAD of differences
/// between disjoint segments over the whole column, which ignores a single
/// level shift and absorbs the row correlation left by the patch and kernel.
inline LineEvidence vertical_hough(const HeatMap& edges, std::size_t warm, const ExtractOptions& opt) {
  LineEvidence ev;
  const auto len = static_cast<std::size_t>(std::max(1, opt.min_line_rows));
  const double L = static_cast<double>(len);
  for (std::size_t b = 0; b < edges.cols; ++b) {
    std::vector<double> seg(edges.rows >= len ? edges.rows - len + 1 : 0, 0.0);
    for (std::size_t r = 0; r < seg.size(); ++r)
      for (std::size_t k = 0; k < len; ++k) seg[r] += edges.at(r + k, b);
    double mu = 0.0;
    for (std::size_t r = 0; r < warm; ++r) mu += edges.at(r, b);
    mu *= L / static_cast<double>(warm);
    std::vector<double> diff;
    for (std::size_t r = 0; r + len < seg.size(); ++r) diff.push_back(std::abs(seg[r + len] - seg[r]));
    double sigma = 0.0;
    if (!diff.empty()) {
      auto mid = diff.begin() + static_cast<std::ptrdiff_t>(diff.size() / 2);
      std::nth_element(diff.begin(), mid, diff.end());
      sigma = *mid / (0.6744897501960817 * std::sqrt(2.0));
    }
    const double theta = opt.k_sigma * sigma + opt.floor * L;

    int votes = 0, best = 0, run = 0;
    std::size_t best_start = 0, start = 0;
    for (std::size_t r = warm; r < seg.size(); ++r) {
      if (std::abs(seg[r] - mu) > theta) {
        ++votes;
        if (run++ == 0) start = r;
        if (run > best) best = run, best_start = start;
      } else {
        run = 0;
      }
    }
    ev.threshold.push_back(theta);
    ev.votes.push_back(votes);
    ev.longest_run.push_back(best);
    ev.run_start.push_back(best_start);
  }
  return ev;
}

/// Find the vertical edge of the anomaly pattern: rank transform, boundary
/// Sobel, vertical Hough vote. Returns nullopt when no boundary carries a
/// line. The onset is the first row where the order of the two columns
/// across the winning boundary departs from its warm-up state and holds.
inline std::optional<LocalizationResult> vertical_line_extract(const HeatMap& m, const ExtractOptions& opt = {}) {
  if (m.cols < 3 || m.rows < 5) throw InvalidArgument("vertical_line_extract: map must be at least 5x3");
  for (double v : m.cells)
    if (!std::isfinite(v)) throw InvalidArgument("vertical_line_extract: map has missing cells (impute first)");
  const std::size_t warm = detail::warmup_rows(m, opt.warmup_rows);
  const HeatMap aug = detail::augment(m, warm);
  const HeatMap rank = rank_transform(aug, opt.patch);
  const HeatMap edges = boundary_sobel(rank);
  const LineEvidence ev = vertical_hough(edges, warm, opt);

  auto order = [&](std::size_t r, std::size_t b) {
    const double d = aug.at(r, b) - aug.at(r, b + 1);
    return d > 0 ? 1 : (d < 0 ? -1 : 0);
  };
  auto share = [&](std::size_t b, int sign, std::size_t from, std::size_t to) {
    std::size_t n = 0;
    for (std::size_t r = from; r < to; ++r) n += order(r, b) == sign;
    return static_cast<double>(n) / static_cast<double>(std::max<std::size_t>(1, to - from));
  };
  // Rows a line covers for sure: a voting segment may start up to L-1 rows
  // before the change, so skip those.
  const auto seg = static_cast<std::size_t>(std::max(1, opt.min_line_rows));
  auto line_rows = [&](std::size_t b) {
    const std::size_t from = std::min(ev.run_start[b] + seg - 1, aug.rows);
    return std::pair{from, std::min(from + static_cast<std::size_t>(ev.longest_run[b]), aug.rows)};
  };
  // Dominant column order over the line.
  auto run_sign = [&](std::size_t b) {
    const auto [from, to] = line_rows(b);
    int best = 0;
    double best_share = -1.0;
    for (int sign : {-1, 0, 1})
      if (const double f = share(b, sign, from, to); f > best_share) best = sign, best_share = f;
    return std::pair{best, best_share};
  };
  // The rank transform puts a halo beside the true boundary; only a boundary
  // whose raw column order settles into a strict order that was uncommon
  // during warm-up carries the anomaly. Two columns that both collapse to the
  // same level tie, which is no contrast.
  auto order_flipped = [&](std::size_t b) {
    const auto [sign, f_run] = run_sign(b);
    return sign != 0 && f_run >= opt.min_flip_fraction && f_run - share(b, sign, 0, warm) >= opt.min_flip_gain;
  };

  std::optional<std::size_t> win;
  for (std::size_t b = 0; b < ev.longest_run.size(); ++b) {
    if (ev.longest_run[b] < opt.min_run || !order_flipped(b)) continue;
    if (!win || ev.longest_run[b] > ev.longest_run[*win]) win = b;
  }
  if (!win) return std::nullopt;
  const std::size_t b = *win;
  const int sign = run_sign(b).first;

  // Onset: split the column difference across the boundary at the midpoint
  // of its warm-up and in-line medians; the CUSUM change point of "past the
  // midpoint" between warm-up and the end of the line, then the first row
  // from there that stays past it for `persistence` rows.
  const auto [line_from, hi] = line_rows(b);
  auto diff = [&](std::size_t r) { return aug.at(r, b) - aug.at(r, b + 1); };
  auto median_diff = [&](std::size_t from, std::size_t to) {
    std::vector<double> v;
    for (std::size_t r = from; r < to; ++r) v.push_back(diff(r));
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
  };
  const double mid = 0.5 * (median_diff(0, warm) + median_diff(line_from, hi));
  auto past = [&](std::size_t r) { return sign * (diff(r) - mid) > 0; };
  auto past_share = [&](std::size_t from, std::size_t to) {
    std::size_t n = 0;
    for (std::size_t r = from; r < to; ++r) n += past(r);
    return static_cast<double>(n) / static_cast<double>(std::max<std::size_t>(1, to - from));
  };
  const double q = 0.5 * (past_share(0, warm) + past_share(line_from, hi));
  double acc = 0.0, best = -std::numeric_limits<double>::infinity();
  std::size_t onset = ev.run_start[b];
  for (std::size_t r = hi; r-- > warm;) {
    acc += (past(r) ? 1.0 : 0.0) - q;
    if (acc >= best) best = acc, onset = r;
  }
  for (std::size_t r = onset; r < hi; ++r) {
    bool holds = true;
    for (int k = 0; k < opt.persistence && holds; ++k) {
      const std::size_t rr = r + static_cast<std::size_t>(k);
      holds = rr < aug.rows && past(rr);
    }
    if (holds) {
      onset = r;
      break;
    }
  }

  int total = 0;
  for (int v : ev.votes) total += v;
  LocalizationResult res;
  res.link_index = b;
  if (b < m.links.size()) {
    res.link = m.links[b];
    res.node = m.links[b].dst;
  }
  res.onset_row = onset;
  res.onset_time_s = m.row_time(onset);
  res.confidence = total > 0 ? static_cast<double>(ev.votes[b]) / total : 0.0;
  return res;
}

// ---- export ----

inline void write_heatmap_csv(const HeatMap& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "t_start";
  for (std::size_t c = 0; c < m.cols; ++c) f << ',' << (c < m.links.size() ? m.links[c].str() : "col" + std::to_string(c));
  f << '\n';
  char buf[64];
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::snprintf(buf, sizeof buf, "%.6g", m.row_time(r));
    f << buf;
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.10g", m.at(r, c));
      f << ',' << buf;
    }
    f << '\n';
  }
  if (!f) throw IoError("failed writing " + path);
}

/// 8-bit binary PGM, min-max normalized; a constant map renders black.
inline std::vector<std::uint8_t> to_gray(const HeatMap& m) {
  double lo = 0, hi = 0;
  bool any = false;
  for (double v : m.cells)
    if (std::isfinite(v)) {
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  std::vector<std::uint8_t> px(m.cells.size(), 0);
  if (!any || hi <= lo) return px;
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::isfinite(m.cells[i]) ? m.cells[i] : lo;
    px[i] = static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / (hi - lo)));
  }
  return px;
}

inline void write_pgm(const HeatMap& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << "P5\n" << m.cols << ' ' << m.rows << "\n255\n";
  const auto px = to_gray(m);
  f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!f) throw IoError("failed writing " + path);
}

inline nlohmann::json to_json(const std::optional<LocalizationResult>& r, const std::string& metric) {
  nlohmann::json j{{"metric", metric}, {"anomaly", r.has_value()}};
  if (!r) return j;
  j["link_index"] = r->link_index;
  j["link"] = r->link ? nlohmann::json(r->link->str()) : nlohmann::json();
  j["node"] = r->node ? nlohmann::json(*r->node) : nlohmann::json();
  j["onset_row"] = r->onset_row;
  j["onset_time_s"] = r->onset_time_s;
  j["confidence"] = r->confidence;
  return j;
}

}  // namespace metadetect::localize
