#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "trustfl/comm_graph.hpp"
#include "trustfl/error.hpp"
#include "trustfl/param_vector.hpp"

namespace trustfl {

/// How a trustor turns received parameters into per-round evidence.
struct EvalMethod {
  enum class Kind { Clustering, Distance };

  Kind kind = Kind::Clustering;
  double threshold = 1.5;  // only used by Clustering

  static EvalMethod clustering(double th = 1.5) { return {Kind::Clustering, th}; }
  static EvalMethod distance_based() { return {Kind::Distance, 1.5}; }

  void validate() const {
    if (kind == Kind::Clustering)
      require(threshold > 0.0, Errc::InvalidArgument, "clustering threshold must be > 0");
  }

  bool operator==(const EvalMethod&) const = default;
};

/// Mean squared distance from `target` to every vector in `weights`
/// (the evaluator's own vector included, the target contributing 0).
inline double clustering_deviation(NodeId target, const std::map<NodeId, ParamVector>& weights) {
  require(!weights.empty(), Errc::InvalidArgument, "clustering_deviation needs vectors");
  auto it = weights.find(target);
  require(it != weights.end(), Errc::InvalidArgument,
          "target " + std::to_string(target) + " not among the weights");
  const auto& ref = it->second.values;
  double sum = 0.0;
  for (const auto& [id, w] : weights) sum += squared_distance(w.values, ref);
  return sum / static_cast<double>(weights.size());
}

/// Median; even counts average the two middle order statistics.
inline double median(std::vector<double> values) {
  require(!values.empty(), Errc::InvalidArgument, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

/// I_j = 1 iff dev_j <= th * median(all deviations).
inline std::map<NodeId, int> clustering_indicator(const std::map<NodeId, double>& deviations,
                                                  double th) {
  require(!deviations.empty(), Errc::InvalidArgument, "clustering_indicator needs deviations");
  require(th > 0.0, Errc::InvalidArgument, "threshold must be > 0");
  std::vector<double> values;
  values.reserve(deviations.size());
  for (const auto& [id, dev] : deviations) values.push_back(dev);
  const double cut = th * median(std::move(values));
  std::map<NodeId, int> out;
  for (const auto& [id, dev] : deviations) out.emplace(id, dev <= cut ? 1 : 0);
  return out;
}

/// 1 iff the trustee's new message is no farther from the reference model
/// than its previous message was.
inline int distance_indicator(const ParamVector& own_prev, const ParamVector& msg_prev,
                              const ParamVector& msg_curr) {
  require_same_size(own_prev.values, msg_prev.values, "distance_indicator");
  require_same_size(own_prev.values, msg_curr.values, "distance_indicator");
  const double before = distance(own_prev.values, msg_prev.values);
  const double after = distance(own_prev.values, msg_curr.values);
  return before - after >= 0.0 ? 1 : 0;
}

}  // namespace trustfl
