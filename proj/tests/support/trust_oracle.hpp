#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "trustfl/comm_graph.hpp"
#include "trustfl/trust_core.hpp"

namespace oracle {

/// Limit of the global trust recursion solved directly. For trustee j the
/// recursion only couples nodes inside one component C of G - j:
///   t_C = W_C t_C,  W_C(i, l) = tau_il / sum_{l' in N_i \ j} tau_il'.
/// Constant vectors solve it; the one reached from t0 is (pi^T t0_C) 1,
/// with pi^T (I - W_C) = 0 and sum(pi) = 1. Nodes whose only neighbor is j
/// keep tau_ij.
inline trustfl::SquareMatrix global_trust_direct(const trustfl::SquareMatrix& tau,
                                                 const trustfl::CommGraph& g) {
  using trustfl::NodeId;
  const std::size_t n = g.size();
  trustfl::SquareMatrix out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;

  for (NodeId j = 0; j < n; ++j) {
    // components of G - j
    std::vector<int> comp(n, -1);
    int count = 0;
    for (NodeId s = 0; s < n; ++s) {
      if (s == j || comp[s] >= 0) continue;
      std::vector<NodeId> stack{s};
      comp[s] = count;
      while (!stack.empty()) {
        NodeId u = stack.back();
        stack.pop_back();
        for (NodeId v : g.neighbors(u))
          if (v != j && comp[v] < 0) {
            comp[v] = count;
            stack.push_back(v);
          }
      }
      ++count;
    }
    for (int c = 0; c < count; ++c) {
      std::vector<NodeId> members;
      for (NodeId v = 0; v < n; ++v)
        if (v != j && comp[v] == c) members.push_back(v);
      if (members.size() == 1) {
        out(members[0], j) = tau(members[0], j);
        continue;
      }
      const auto m = static_cast<Eigen::Index>(members.size());
      Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, m);
      for (Eigen::Index a = 0; a < m; ++a) {
        double den = 0.0;
        for (NodeId l : g.neighbors(members[a]))
          if (l != j) den += tau(members[a], l);
        for (Eigen::Index b = 0; b < m; ++b)
          if (g.has_edge(members[a], members[b])) W(a, b) = tau(members[a], members[b]) / den;
      }
      // Solve (I - W)^T pi = 0 with the last equation replaced by sum(pi) = 1.
      Eigen::MatrixXd A = (Eigen::MatrixXd::Identity(m, m) - W).transpose();
      A.row(m - 1).setOnes();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
      rhs(m - 1) = 1.0;
      Eigen::VectorXd pi = A.fullPivLu().solve(rhs);
      double value = 0.0;
      for (Eigen::Index a = 0; a < m; ++a) value += pi(a) * tau(members[a], j);
      for (NodeId v : members) out(v, j) = value;
    }
  }
  return out;
}

/// Every connected labeled graph on n nodes.
inline std::vector<trustfl::CommGraph> connected_graphs(std::size_t n) {
  std::vector<std::pair<trustfl::NodeId, trustfl::NodeId>> pairs;
  for (trustfl::NodeId a = 0; a < n; ++a)
    for (trustfl::NodeId b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  std::vector<trustfl::CommGraph> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << pairs.size()); ++mask) {
    trustfl::CommGraph g(n);
    for (std::size_t e = 0; e < pairs.size(); ++e)
      if (mask >> e & 1) g.add_edge(pairs[e].first, pairs[e].second);
    if (g.is_connected()) out.push_back(std::move(g));
  }
  return out;
}

}  // namespace oracle
