#pragma once

#include <cstdint>
#include <random>

namespace trustfl {

using Rng = std::mt19937_64;

// Purpose tags keep the streams for different consumers disjoint even when
// they share (seed, round, agent).
enum class Stream : std::uint32_t {
  Init = 1,
  Dataset = 2,
  Holdout = 3,
  Partition = 4,
  Topology = 5,
  Corrupt = 6,
  Selection = 7,
  Train = 8,
  Poison = 9,
};

/// Independent generator for (seed, purpose, a, b). Typical use is
/// a = round, b = agent id, so per-agent work can run in any order.
inline Rng make_stream(std::uint64_t seed, Stream purpose, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), static_cast<std::uint32_t>(purpose),
                    lo(a),    hi(a),    lo(b),
                    hi(b)};
  return Rng(seq);
}

/// Uniform double in [0, 1) built from the top 53 bits; unlike
/// std::uniform_real_distribution the result is identical on every
/// standard library.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace trustfl
