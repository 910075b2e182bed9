#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "trustfl/error.hpp"

namespace trustfl {

/// Flat model parameters plus the layer widths that produced them. This is
/// also the wire message exchanged between agents.
struct ParamVector {
  std::vector<double> values;
  // Layer widths, input first: {d_in, d_out} or {d_in, hidden, d_out}.
  // Empty for free-standing vectors that carry no model shape.
  std::vector<std::size_t> layers;

  ParamVector() = default;
  explicit ParamVector(std::vector<double> v, std::vector<std::size_t> shape = {})
      : values(std::move(v)), layers(std::move(shape)) {}

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  std::span<const double> view() const noexcept { return values; }

  bool operator==(const ParamVector&) const = default;
};

/// Number of weights and biases for a dense network with the given widths.
inline std::size_t param_count_for(std::span<const std::size_t> layers) {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) count += (layers[l] + 1) * layers[l + 1];
  return count;
}

inline bool shape_consistent(const ParamVector& w) {
  return w.layers.empty() || param_count_for(w.layers) == w.values.size();
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void require_same_size(std::span<const double> a, std::span<const double> b,
                              const char* where) {
  if (a.size() != b.size())
    fail(Errc::DimensionMismatch, std::string(where) + ": lengths " + std::to_string(a.size()) +
                                      " and " + std::to_string(b.size()));
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "squared_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

inline double max_abs_difference(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "max_abs_difference");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace trustfl
