#pragma once

#include <cmath>
#include <limits>
#include <random>

#include "metadetect/errors.hpp"
#include "metadetect/random.hpp"

namespace metadetect::channel {

/// Log-distance path loss with Rician small-scale fading and a logistic
/// SINR -> packet-corruption model. rician_k = +inf disables fading.
struct ChannelParams {
  double tx_power_dbm = 20.0;
  double pl_exponent = 2.0;
  double pl_ref_db = 40.0;  // loss at 1 m
  double rician_k = 3.0;
  double noise_floor_dbm = -95.0;
  double per_midpoint_db = 5.0;  // SINR at which half the packets are corrupted
  double per_slope = 1.0;        // 1/dB
  double lqi_min_db = 0.0;
  double lqi_max_db = 30.0;

  void validate() const {
    if (!(pl_exponent > 0.0)) throw InvalidArgument("channel: pl_exponent must be > 0");
    if (!(per_slope > 0.0)) throw InvalidArgument("channel: per_slope must be > 0");
    if (!(rician_k >= 0.0)) throw InvalidArgument("channel: rician_k must be >= 0");
    if (!(lqi_min_db < lqi_max_db)) throw InvalidArgument("channel: lqi_min_db must be < lqi_max_db");
    if (!std::isfinite(tx_power_dbm) || !std::isfinite(pl_ref_db) || !std::isfinite(noise_floor_dbm) ||
        !std::isfinite(per_midpoint_db))
      throw InvalidArgument("channel: power and loss parameters must be finite");
  }
};

struct SignalSample {
  double rssi_dbm = 0.0;
  double sinr_linear = 0.0;
  int lqi = 0;
  bool corrupted = false;
};

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

/// Unit-mean Rician power gain |h|^2 with line-of-sight factor K.
inline double rician_power_gain(double k_factor, Rng& rng) {
  if (std::isinf(k_factor)) return 1.0;
  const double los = std::sqrt(k_factor / (k_factor + 1.0));
  const double sigma = std::sqrt(1.0 / (2.0 * (k_factor + 1.0)));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double re = los + sigma * normal(rng);
  const double im = sigma * normal(rng);
  return re * re + im * im;
}

/// Deterministic log-distance component of the loss, in dB.
inline double log_distance_loss_db(double distance_m, const ChannelParams& params) {
  if (!(distance_m > 0.0)) throw InvalidArgument("path loss: distance must be > 0");
  return params.pl_ref_db + 10.0 * params.pl_exponent * std::log10(distance_m);
}

/// Instantaneous path loss in dB: log-distance loss minus the fading gain
/// (a constructive fade lowers the loss).
inline double path_loss_db(double distance_m, const ChannelParams& params, Rng& rng) {
  const double deterministic = log_distance_loss_db(distance_m, params);
  const double gain = rician_power_gain(params.rician_k, rng);
  return deterministic - linear_to_db(gain);
}

inline double sinr(double p_signal_mw, double p_interference_plus_noise_mw) {
  if (!(p_interference_plus_noise_mw > 0.0))
    throw InvalidArgument("sinr: interference-plus-noise power must be > 0");
  if (!(p_signal_mw >= 0.0)) throw InvalidArgument("sinr: signal power must be >= 0");
  return p_signal_mw / p_interference_plus_noise_mw;
}

inline double corruption_prob(double sinr_db, const ChannelParams& params) {
  const double z = params.per_slope * (sinr_db - params.per_midpoint_db);
  // exp overflows to +inf for very negative SINR; 1/(1+inf) = 0 is what we want
  // on the other side, so only guard the NaN-producing case.
  if (z > 700.0) return 0.0;
  return 1.0 / (1.0 + std::exp(z));
}

/// Linear map of [lqi_min_db, lqi_max_db] onto 0..255, rounded half-up.
inline int lqi_from_sinr(double sinr_db, double lqi_min_db, double lqi_max_db) {
  if (!(lqi_min_db < lqi_max_db)) throw InvalidArgument("lqi_from_sinr: degenerate range");
  if (std::isnan(sinr_db)) return 0;
  if (sinr_db <= lqi_min_db) return 0;
  if (sinr_db >= lqi_max_db) return 255;
  const double scaled = 255.0 * (sinr_db - lqi_min_db) / (lqi_max_db - lqi_min_db);
  const int q = static_cast<int>(std::floor(scaled + 0.5));
  return q < 0 ? 0 : (q > 255 ? 255 : q);
}

}  // namespace metadetect::channel
