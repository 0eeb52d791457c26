#pragma once

#include <cstdint>
#include <random>

namespace metadetect {

/// Explicit random stream passed into every stochastic operation.
using Rng = std::mt19937_64;

/// Independent sub-stream for (seed, domain, index). Streams for different
/// domains/indices never share state, so e.g. changing the number of fading
/// draws on one link leaves mobility and other links untouched.
inline Rng make_stream(std::uint64_t seed, std::uint64_t domain, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(domain), static_cast<std::uint32_t>(index),
                    0x6d657461u};
  return Rng(seq);
}

namespace stream_domain {
inline constexpr std::uint64_t kMobility = 1;
inline constexpr std::uint64_t kLink = 2;
inline constexpr std::uint64_t kTraffic = 3;
}  // namespace stream_domain

}  // namespace metadetect
