#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trustfl/dataset.hpp"
#include "trustfl/error.hpp"
#include "trustfl/model.hpp"
#include "trustfl/rng.hpp"

namespace trustfl {

/// Per-round scalar schedule, k counted from 1.
///   constant:     base
///   inverse-time: base / (1 + decay * (k - 1))
///   exponential:  base * decay^(k - 1)
struct Schedule {
  enum class Kind { Constant, InverseTime, Exponential };

  Kind kind = Kind::Constant;
  double base = 0.1;
  double decay = 0.0;

  static Schedule constant(double v) { return {Kind::Constant, v, 0.0}; }

  double operator()(int k) const {
    const double steps = static_cast<double>(std::max(k, 1) - 1);
    switch (kind) {
      case Kind::Constant: return base;
      case Kind::InverseTime: return base / (1.0 + decay * steps);
      case Kind::Exponential: return base * std::pow(decay, steps);
    }
    return base;
  }

  void validate(const char* what) const {
    require(std::isfinite(base) && base > 0.0, Errc::InvalidArgument,
            std::string(what) + " base must be > 0");
    if (kind == Kind::InverseTime)
      require(decay >= 0.0, Errc::InvalidArgument, std::string(what) + " decay must be >= 0");
    if (kind == Kind::Exponential)
      require(decay > 0.0, Errc::InvalidArgument, std::string(what) + " decay must be > 0");
  }

  bool operator==(const Schedule&) const = default;
};

struct Hyperparams {
  Schedule learning_rate = Schedule::constant(0.1);
  std::size_t batch_size = 8;
  std::size_t local_passes = 1;

  void validate() const {
    learning_rate.validate("learning rate");
    require(batch_size >= 1, Errc::InvalidArgument, "batch size must be >= 1");
    require(local_passes >= 1, Errc::InvalidArgument, "local passes must be >= 1");
  }

  bool operator==(const Hyperparams&) const = default;
};

/// Local mini-batch SGD: `local_passes` passes, each visiting the partition
/// in a freshly shuffled order (drawn from `rng`) split into batches of
/// `batch_size`; the last batch of a pass may be smaller.
inline ParamVector model_update(const ModelSpec& spec, const ParamVector& w_start,
                                const SampleStore& store, std::span<const std::size_t> partition,
                                const Hyperparams& hp, int round, Rng& rng) {
  require(!partition.empty(), Errc::InvalidArgument, "model_update needs local data");
  const double mu = hp.learning_rate(round);
  ParamVector psi = w_start;
  if (psi.layers.empty()) psi.layers = spec.layers();
  std::vector<std::size_t> order;
  for (std::size_t pass = 0; pass < hp.local_passes; ++pass) {
    order.assign(partition.begin(), partition.end());
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t stop = std::min(order.size(), start + hp.batch_size);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      const ParamVector g = gradient(spec, psi, indexed(store, batch));
      for (std::size_t p = 0; p < psi.size(); ++p) psi.values[p] -= mu * g.values[p];
    }
  }
  return psi;
}

/// F(w) = sum_i q_i * F_i(w), with F_i the mean loss over partition i.
inline double global_objective(const ModelSpec& spec, const ParamVector& w,
                               const SampleStore& store, std::span<const Partition> partitions,
                               std::span<const double> q) {
  require(q.size() == partitions.size(), Errc::DimensionMismatch,
          "one weight per partition required");
  double mass = 0.0;
  for (double v : q) {
    if (!(v >= 0.0)) fail(Errc::WeightSumViolation, "weights must be nonnegative");
    mass += v;
  }
  if (std::abs(mass - 1.0) > 1e-9)
    fail(Errc::WeightSumViolation, "weights sum to " + std::to_string(mass));
  double total = 0.0;
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    if (q[i] == 0.0) continue;
    total += q[i] * loss(spec, w, indexed(store, partitions[i].indices));
  }
  return total;
}

/// q_i = D_i / D.
inline std::vector<double> data_size_weights(std::span<const Partition> partitions) {
  double total = 0.0;
  for (const auto& p : partitions) total += static_cast<double>(p.size());
  std::vector<double> q;
  q.reserve(partitions.size());
  for (const auto& p : partitions) q.push_back(static_cast<double>(p.size()) / total);
  return q;
}

}  // namespace trustfl
