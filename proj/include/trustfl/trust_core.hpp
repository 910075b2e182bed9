#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustfl/comm_graph.hpp"
#include "trustfl/error.hpp"

namespace trustfl {

/// Beta-reputation evidence counters. The Beta parameters are r + 1 and
/// s + 1, so a fresh record is the uniform prior.
struct ReputationRecord {
  double r = 0.0;
  double s = 0.0;

  bool operator==(const ReputationRecord&) const = default;
};

/// Geometric discounts applied to old positive (rho1) and negative (rho2)
/// evidence before new evidence is added. Values above 1 would amplify.
struct ForgettingFactors {
  double rho1 = 0.9;
  double rho2 = 0.95;

  void validate() const {
    require(rho1 > 0.0 && rho1 < rho2 && rho2 <= 1.0, Errc::InvalidArgument,
            "forgetting factors must satisfy 0 < rho1 < rho2 <= 1");
  }

  bool operator==(const ForgettingFactors&) const = default;
};

/// Mean of Beta(r + 1, s + 1).
inline double expected_trust(const ReputationRecord& rec) {
  return (rec.r + 1.0) / (rec.r + rec.s + 2.0);
}

inline ReputationRecord update_reputation(const ReputationRecord& rec, double evidence,
                                          const ForgettingFactors& factors) {
  require(evidence >= 0.0 && evidence <= 1.0, Errc::InvalidEvidence,
          "evidence must lie in [0, 1], got " + std::to_string(evidence));
  factors.validate();
  return {factors.rho1 * rec.r + evidence, factors.rho2 * rec.s + 1.0 - evidence};
}

/// Dense n x n matrix of trust values, row = trustor, column = trustee.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  SquareMatrix(std::size_t n, double fill) : n_(n), data_(n * n, fill) {}

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * n_, n_}; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const SquareMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Local (first-hand) and global (propagated) opinions for one round.
struct TrustMatrix {
  SquareMatrix local;
  SquareMatrix global;
};

/// Normalised weights w_il = tau_il / sum tau over l in `neighbors`, l != excluded.
/// Throws EmptyNeighborhood when nothing is left after the exclusion.
inline std::map<NodeId, double> trust_weights(NodeId trustor, std::optional<NodeId> excluded,
                                              const std::map<NodeId, double>& local_row,
                                              std::span<const NodeId> neighbors) {
  std::vector<std::pair<NodeId, double>> kept;
  double total = 0.0;
  for (NodeId l : neighbors) {
    if (l == trustor) fail(Errc::InvalidArgument, "neighbor set contains the trustor itself");
    if (excluded && l == *excluded) continue;
    auto it = local_row.find(l);
    if (it == local_row.end())
      fail(Errc::InvalidArgument, "no local trust for neighbor " + std::to_string(l));
    require(it->second > 0.0, Errc::InvalidArgument, "local trust must be positive");
    kept.emplace_back(l, it->second);
    total += it->second;
  }
  if (kept.empty())
    fail(Errc::EmptyNeighborhood,
         "node " + std::to_string(trustor) + " has no neighbor besides the trustee");
  std::map<NodeId, double> out;
  for (auto [l, tau] : kept) out.emplace(l, tau / total);
  return out;
}

/// One synchronous sweep of the propagation rule:
///   t(i,i) = 1,   t(i,j) = sum_{l in N_i, l != j} w_il * t_prev(l,j).
/// When N_i \ {j} is empty only first-hand evidence exists and t(i,j) = tau(i,j).
inline SquareMatrix global_trust_step(const SquareMatrix& prev, const SquareMatrix& local,
                                      const CommGraph& graph) {
  const std::size_t n = graph.size();
  require(prev.size() == n && local.size() == n, Errc::DimensionMismatch,
          "trust matrices must match the graph size");
  SquareMatrix next(n, 0.0);
  for (NodeId i = 0; i < n; ++i) {
    auto nbrs = graph.neighbors(i);
    for (NodeId j = 0; j < n; ++j) {
      if (i == j) {
        next(i, j) = 1.0;
        continue;
      }
      double num = 0.0;
      double den = 0.0;
      bool any = false;
      for (NodeId l : nbrs) {
        if (l == j) continue;
        num += local(i, l) * prev(l, j);
        den += local(i, l);
        any = true;
      }
      next(i, j) = any ? num / den : local(i, j);
    }
  }
  return next;
}

struct GlobalTrustOptions {
  std::size_t max_iter = 50;
  double tol = 1e-6;
  // Each iterate is (1 - relaxation) * t + relaxation * step(t). The fixed
  // points are those of the plain step for any relaxation in (0, 1]; values
  // below 1 also converge on bipartite neighborhoods, where the plain sweep
  // oscillates.
  double relaxation = 0.5;

  void validate() const {
    require(max_iter >= 1, Errc::InvalidArgument, "max_iter must be >= 1");
    require(tol > 0.0, Errc::InvalidArgument, "tol must be > 0");
    require(relaxation > 0.0 && relaxation <= 1.0, Errc::InvalidArgument,
            "relaxation must lie in (0, 1]");
  }

  bool operator==(const GlobalTrustOptions&) const = default;
};

struct GlobalTrustResult {
  SquareMatrix trust;
  std::size_t iterations = 0;
  bool converged = false;
};

/// t^0 seeds every off-diagonal entry with the local opinion, diagonal 1.
inline SquareMatrix initial_global_trust(const SquareMatrix& local) {
  SquareMatrix t = local;
  for (std::size_t i = 0; i < t.size(); ++i) t(i, i) = 1.0;
  return t;
}

inline GlobalTrustResult global_trust_fixed_point(const SquareMatrix& local, const CommGraph& graph,
                                                  const GlobalTrustOptions& opts = {}) {
  opts.validate();
  GlobalTrustResult result{initial_global_trust(local), 0, false};
  SquareMatrix& t = result.trust;
  const std::size_t n = graph.size();
  for (std::size_t m = 1; m <= opts.max_iter; ++m) {
    SquareMatrix next = global_trust_step(t, local, graph);
    if (opts.relaxation != 1.0) {
      const double keep = 1.0 - opts.relaxation;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          next(i, j) = i == j ? 1.0 : keep * t(i, j) + opts.relaxation * next(i, j);
    }
    double change = 0.0;
    for (std::size_t k = 0; k < n * n; ++k)
      change = std::max(change, std::abs(next.data()[k] - t.data()[k]));
    t = std::move(next);
    result.iterations = m;
    if (change < opts.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace trustfl
