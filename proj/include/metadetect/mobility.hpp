#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "metadetect/errors.hpp"
#include "metadetect/random.hpp"

namespace metadetect::mobility {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double k, Vec3 a) { return {k * a.x, k * a.y, k * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Meters.
using Position3 = Vec3;
/// Meters per second.
using Velocity3 = Vec3;

struct Box {
  Vec3 lo{0.0, 0.0, 0.0};
  Vec3 hi{500.0, 500.0, 100.0};

  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
  bool valid() const { return lo.finite() && hi.finite() && lo.x < hi.x && lo.y < hi.y && lo.z < hi.z; }
};

struct MobilityState {
  Position3 position;
  Velocity3 velocity;
  Velocity3 mean_velocity;
  double memory_alpha = 0.85;
  double noise_sigma = 0.5;
  Box bounds;

  void validate() const {
    if (!(memory_alpha >= 0.0 && memory_alpha <= 1.0))
      throw InvalidArgument("memory_alpha must lie in [0,1]");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
      throw InvalidArgument("noise_sigma must be finite and >= 0");
    if (!bounds.valid()) throw InvalidArgument("mobility bounds must be a non-empty box");
    if (!position.finite() || !velocity.finite() || !mean_velocity.finite())
      throw InvalidArgument("mobility state has non-finite components");
    if (!bounds.contains(position)) throw InvalidArgument("position outside mobility bounds");
  }
};

namespace detail {

// Mirror one coordinate back into [lo, hi]; flips the velocity component on
// every face hit. Loops because a long step can cross the box more than once.
inline void reflect_axis(double& p, double& v, double lo, double hi) {
  for (int guard = 0; guard < 64 && (p < lo || p > hi); ++guard) {
    if (p < lo) {
      p = 2.0 * lo - p;
    } else {
      p = 2.0 * hi - p;
    }
    v = -v;
  }
  if (p < lo || p > hi) p = p < lo ? lo : hi;
}

}  // namespace detail

/// One discrete Gauss-Markov step, per axis:
///   v' = a*v + (1-a)*v_mean + sigma*sqrt(1-a^2)*w,  w ~ N(0,1)
///   p' = p + v'*dt, reflected at the box faces.
inline MobilityState gm_step(const MobilityState& state, double dt, Rng& rng) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("gm_step: dt must be > 0");
  state.validate();

  const double a = state.memory_alpha;
  const double scale = state.noise_sigma * std::sqrt(std::max(0.0, 1.0 - a * a));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto axis = [&](double v, double mean) {
    // Always consume the draw so the stream position does not depend on sigma.
    const double w = normal(rng);
    return a * v + (1.0 - a) * mean + scale * w;
  };

  MobilityState next = state;
  next.velocity.x = axis(state.velocity.x, state.mean_velocity.x);
  next.velocity.y = axis(state.velocity.y, state.mean_velocity.y);
  next.velocity.z = axis(state.velocity.z, state.mean_velocity.z);
  next.position = state.position + dt * next.velocity;

  detail::reflect_axis(next.position.x, next.velocity.x, state.bounds.lo.x, state.bounds.hi.x);
  detail::reflect_axis(next.position.y, next.velocity.y, state.bounds.lo.y, state.bounds.hi.y);
  detail::reflect_axis(next.position.z, next.velocity.z, state.bounds.lo.z, state.bounds.hi.z);
  return next;
}

inline double euclidean_distance(const Position3& a, const Position3& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double dz = b.z - a.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Time-indexed distance samples for one adjacent pair.
struct DistanceSeries {
  std::vector<double> times;
  std::vector<double> values;

  void validate() const {
    if (times.size() != values.size()) throw InvalidArgument("DistanceSeries: length mismatch");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (i > 0 && !(times[i] > times[i - 1]))
        throw InvalidArgument("DistanceSeries: times must be strictly increasing");
      if (!(values[i] >= 0.0)) throw InvalidArgument("DistanceSeries: negative distance");
    }
  }
};

}  // namespace metadetect::mobility
