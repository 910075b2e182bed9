#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trustfl/error.hpp"

namespace trustfl {

using NodeId = std::uint32_t;

/// Undirected, self-loop-free communication graph for one round.
/// Neighbor lists are kept sorted so every sum over N_i runs in
/// ascending id order.
class CommGraph {
 public:
  CommGraph() = default;
  explicit CommGraph(std::size_t nodes) : adjacency_(nodes) {}

  CommGraph(std::size_t nodes, std::span<const std::pair<NodeId, NodeId>> edges)
      : adjacency_(nodes) {
    for (auto [a, b] : edges) add_edge(a, b);
  }

  static CommGraph complete(std::size_t nodes) {
    CommGraph g(nodes);
    for (NodeId i = 0; i < nodes; ++i)
      for (NodeId j = 0; j < nodes; ++j)
        if (i != j) g.adjacency_[i].push_back(j);
    return g;
  }

  /// Adds {a, b}; duplicate edges are ignored.
  void add_edge(NodeId a, NodeId b) {
    require(a < size() && b < size(), Errc::InvalidTopology,
            "edge (" + std::to_string(a) + "," + std::to_string(b) + ") out of range");
    require(a != b, Errc::InvalidTopology, "self-loop on node " + std::to_string(a));
    insert_sorted(adjacency_[a], b);
    insert_sorted(adjacency_[b], a);
  }

  std::size_t size() const noexcept { return adjacency_.size(); }

  std::span<const NodeId> neighbors(NodeId i) const { return adjacency_.at(i); }

  std::size_t degree(NodeId i) const { return adjacency_.at(i).size(); }

  bool has_edge(NodeId a, NodeId b) const {
    const auto& row = adjacency_.at(a);
    return std::binary_search(row.begin(), row.end(), b);
  }

  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& row : adjacency_) twice += row.size();
    return twice / 2;
  }

  std::vector<std::pair<NodeId, NodeId>> edges() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    for (NodeId i = 0; i < size(); ++i)
      for (NodeId j : adjacency_[i])
        if (i < j) out.emplace_back(i, j);
    return out;
  }

  /// Component label per node, labels assigned in order of lowest member id.
  std::vector<std::size_t> components() const {
    constexpr auto unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> label(size(), unset);
    std::size_t next = 0;
    std::vector<NodeId> stack;
    for (NodeId s = 0; s < size(); ++s) {
      if (label[s] != unset) continue;
      label[s] = next;
      stack.assign(1, s);
      while (!stack.empty()) {
        NodeId u = stack.back();
        stack.pop_back();
        for (NodeId v : adjacency_[u])
          if (label[v] == unset) {
            label[v] = next;
            stack.push_back(v);
          }
      }
      ++next;
    }
    return label;
  }

  bool is_connected() const {
    if (size() == 0) return true;
    auto label = components();
    return std::all_of(label.begin(), label.end(), [](std::size_t c) { return c == 0; });
  }

  bool operator==(const CommGraph&) const = default;

 private:
  static void insert_sorted(std::vector<NodeId>& row, NodeId v) {
    auto it = std::lower_bound(row.begin(), row.end(), v);
    if (it == row.end() || *it != v) row.insert(it, v);
  }

  std::vector<std::vector<NodeId>> adjacency_;
};

}  // namespace trustfl
