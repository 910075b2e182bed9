#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "trustfl/comm_graph.hpp"
#include "trustfl/error.hpp"
#include "trustfl/rng.hpp"

namespace trustfl {

struct TopologySpec {
  enum class Kind { Complete, Ring, RandomGeometric };

  Kind kind = Kind::Complete;
  std::size_t k = 1;        // ring: neighbors on each side
  double radius = 0.3;      // random geometric, unit square
  std::uint64_t seed = 0;   // random geometric; 0 means use the master seed
  std::size_t max_attempts = 100;

  static TopologySpec complete() { return {}; }
  static TopologySpec ring(std::size_t k) { return {Kind::Ring, k}; }
  static TopologySpec random_geometric(double radius, std::uint64_t seed = 0) {
    return {Kind::RandomGeometric, 1, radius, seed};
  }

  void validate(std::size_t nodes) const {
    require(nodes >= 2, Errc::InvalidTopology, "a topology needs at least two nodes");
    if (kind == Kind::Ring) {
      require(k >= 1, Errc::InvalidTopology, "ring needs k >= 1");
      require(k < nodes, Errc::InvalidTopology,
              "ring k=" + std::to_string(k) + " must be below N=" + std::to_string(nodes));
    }
    if (kind == Kind::RandomGeometric) {
      require(radius > 0.0 && std::isfinite(radius), Errc::InvalidTopology, "radius must be > 0");
      require(max_attempts >= 1, Errc::InvalidTopology, "max_attempts must be >= 1");
    }
  }

  bool operator==(const TopologySpec&) const = default;
};

namespace detail {

inline CommGraph ring_graph(std::size_t nodes, std::size_t k) {
  CommGraph g(nodes);
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t d = 1; d <= k; ++d) {
      const auto j = static_cast<NodeId>((i + d) % nodes);
      if (j != i) g.add_edge(static_cast<NodeId>(i), j);
    }
  return g;
}

inline CommGraph geometric_graph(std::size_t nodes, double radius, Rng& rng) {
  std::vector<double> x(nodes), y(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    x[i] = uniform01(rng);
    y[i] = uniform01(rng);
  }
  CommGraph g(nodes);
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = i + 1; j < nodes; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx * dx + dy * dy <= r2) g.add_edge(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
  return g;
}

}  // namespace detail

/// Builds the communication graph. Random-geometric graphs place N points
/// uniformly in the unit square and link pairs within `radius`; they are
/// redrawn until connected, and after `max_attempts` the last draw is kept
/// and a warning is appended to `warnings` (if given).
inline CommGraph build_topology(const TopologySpec& spec, std::size_t nodes,
                                std::uint64_t seed, std::vector<std::string>* warnings = nullptr) {
  spec.validate(nodes);
  switch (spec.kind) {
    case TopologySpec::Kind::Complete: return CommGraph::complete(nodes);
    case TopologySpec::Kind::Ring: return detail::ring_graph(nodes, spec.k);
    case TopologySpec::Kind::RandomGeometric: break;
  }
  const std::uint64_t s = spec.seed != 0 ? spec.seed : seed;
  CommGraph g;
  for (std::size_t attempt = 0; attempt < spec.max_attempts; ++attempt) {
    Rng rng = make_stream(s, Stream::Topology, attempt);
    g = detail::geometric_graph(nodes, spec.radius, rng);
    if (g.is_connected()) return g;
  }
  if (warnings)
    warnings->push_back("random geometric graph still disconnected after " +
                        std::to_string(spec.max_attempts) + " attempts; components train independently");
  return g;
}

}  // namespace trustfl
