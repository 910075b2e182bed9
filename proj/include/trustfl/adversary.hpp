#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "trustfl/comm_graph.hpp"
#include "trustfl/error.hpp"
#include "trustfl/param_vector.hpp"
#include "trustfl/rng.hpp"

namespace trustfl {

/// Model-poisoning setup: which fraction of agents lie, and how far beyond
/// the observed weight range their fabricated messages reach (mild a = 1,
/// hard a = 2).
struct AttackConfig {
  double corrupt_fraction = 0.0;
  double scale = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    require(corrupt_fraction >= 0.0 && corrupt_fraction < 1.0, Errc::InvalidArgument,
            "corrupt fraction must lie in [0, 1)");
    require(std::isfinite(scale) && scale > 0.0, Errc::InvalidArgument,
            "attack scale must be > 0");
  }

  /// floor(fraction * N); the small slack absorbs products such as
  /// 0.29 * 100 = 28.999999999999996.
  std::size_t corrupt_count(std::size_t nodes) const {
    return static_cast<std::size_t>(std::floor(corrupt_fraction * static_cast<double>(nodes) + 1e-9));
  }

  bool operator==(const AttackConfig&) const = default;
};

/// Seeded uniform subset of size floor(fraction * N), returned sorted.
inline std::vector<NodeId> select_corrupt(std::size_t nodes, const AttackConfig& cfg) {
  cfg.validate();
  std::vector<NodeId> ids(nodes);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  Rng rng = make_stream(cfg.seed, Stream::Corrupt);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(cfg.corrupt_count(nodes));
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Random weights in the interval spanned by a * (smallest entry) and
/// a * (largest entry) over everything received this round.
inline ParamVector poison_message(std::span<const ParamVector> received, double a, Rng& rng) {
  if (received.empty()) fail(Errc::EmptyNeighborhood, "attacker received no messages");
  require(a > 0.0, Errc::InvalidArgument, "attack scale must be > 0");
  const std::size_t dim = received.front().size();
  require(dim > 0, Errc::DimensionMismatch, "received an empty parameter vector");
  double w_min = received.front().values.at(0);
  double w_max = w_min;
  for (const auto& m : received) {
    require(m.size() == dim, Errc::DimensionMismatch, "received messages differ in length");
    for (double v : m.values) {
      w_min = std::min(w_min, v);
      w_max = std::max(w_max, v);
    }
  }
  const double lo = std::min(a * w_min, a * w_max);
  const double hi = std::max(a * w_min, a * w_max);
  ParamVector out(std::vector<double>(dim, lo), received.front().layers);
  if (hi > lo)
    for (double& v : out.values) v = lo + (hi - lo) * uniform01(rng);
  return out;
}

}  // namespace trustfl
