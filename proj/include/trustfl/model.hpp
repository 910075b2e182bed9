#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <random>
#include <ranges>
#include <span>
#include <string>
#include <vector>

#include "trustfl/dataset.hpp"
#include "trustfl/error.hpp"
#include "trustfl/param_vector.hpp"
#include "trustfl/rng.hpp"

namespace trustfl {

enum class Architecture { LinearSoftmax, Mlp };
enum class LossKind { CrossEntropy, SquaredError };

/// Dense network: Linear-Softmax is a single affine layer producing logits,
/// Mlp adds one tanh hidden layer. Cross-entropy applies softmax to the
/// logits; squared error is 1/2 ||logits - y||^2.
struct ModelSpec {
  Architecture architecture = Architecture::LinearSoftmax;
  LossKind loss = LossKind::CrossEntropy;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t hidden = 16;

  std::vector<std::size_t> layers() const {
    if (architecture == Architecture::Mlp) return {d_in, hidden, d_out};
    return {d_in, d_out};
  }

  std::size_t param_count() const { return param_count_for(layers()); }

  void validate() const {
    require(d_in >= 1 && d_out >= 1, Errc::InvalidArgument, "model dims must be >= 1");
    if (architecture == Architecture::Mlp)
      require(hidden >= 1, Errc::InvalidArgument, "hidden width must be >= 1");
  }

  bool operator==(const ModelSpec&) const = default;
};

template <class R>
concept SampleRange = std::ranges::input_range<R> &&
                      std::convertible_to<std::ranges::range_reference_t<R>, const Sample&>;

/// View of store[indices[k]] without copying samples.
inline auto indexed(const SampleStore& store, std::span<const std::size_t> indices) {
  return indices | std::views::transform([&store](std::size_t i) -> const Sample& {
           return store.samples[i];
         });
}

/// Gaussian initialisation scaled by scale / sqrt(fan_in); biases start at 0.
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed, double scale = 1.0) {
  spec.validate();
  const auto layers = spec.layers();
  ParamVector w(std::vector<double>(spec.param_count(), 0.0), layers);
  Rng rng = make_stream(seed, Stream::Init);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const std::size_t in = layers[l], out = layers[l + 1];
    const double s = scale / std::sqrt(static_cast<double>(in));
    for (std::size_t k = 0; k < in * out; ++k) w.values[off + k] = s * gauss(rng);
    off += in * out + out;
  }
  return w;
}

namespace detail {

struct PerSample {
  double loss = 0.0;
  bool correct = false;
};

class DenseNet {
 public:
  DenseNet(const ModelSpec& spec, std::span<const double> w)
      : spec_(spec), layers_(spec.layers()), w_(w) {
    spec.validate();
    if (w.size() != param_count_for(layers_))
      fail(Errc::DimensionMismatch, "parameter vector has " + std::to_string(w.size()) +
                                        " entries, model needs " +
                                        std::to_string(param_count_for(layers_)));
    if (!all_finite(w)) fail(Errc::NonFinite, "parameter vector contains NaN or inf");
    act_.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) act_[l].resize(layers_[l]);
    delta_.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) delta_[l].resize(layers_[l]);
  }

  /// Runs one sample; when `grad` is non-empty the per-sample gradient is
  /// added into it.
  PerSample run(const Sample& s, std::span<double> grad) {
    if (s.x.size() != spec_.d_in || s.y.size() != spec_.d_out)
      fail(Errc::DimensionMismatch, "sample dims do not match the model");
    forward(s.x);
    const auto& z = act_.back();
    auto& dz = delta_.back();
    PerSample out;
    if (spec_.loss == LossKind::CrossEntropy) {
      const double m = *std::max_element(z.begin(), z.end());
      double sum_exp = 0.0;
      for (double v : z) sum_exp += std::exp(v - m);
      const double lse = m + std::log(sum_exp);
      double y_mass = 0.0;
      for (std::size_t c = 0; c < z.size(); ++c) {
        out.loss += s.y[c] * (lse - z[c]);
        y_mass += s.y[c];
      }
      for (std::size_t c = 0; c < z.size(); ++c) dz[c] = std::exp(z[c] - lse) * y_mass - s.y[c];
    } else {
      for (std::size_t c = 0; c < z.size(); ++c) {
        const double r = z[c] - s.y[c];
        out.loss += 0.5 * r * r;
        dz[c] = r;
      }
    }
    out.correct = std::max_element(z.begin(), z.end()) - z.begin() ==
                  std::max_element(s.y.begin(), s.y.end()) - s.y.begin();
    if (!grad.empty()) backward(grad);
    return out;
  }

 private:
  void forward(const std::vector<double>& x) {
    std::copy(x.begin(), x.end(), act_[0].begin());
    std::size_t off = 0;
    const std::size_t last = layers_.size() - 1;
    for (std::size_t l = 0; l < last; ++l) {
      const std::size_t in = layers_[l], out = layers_[l + 1];
      const double* W = w_.data() + off;
      const double* b = W + in * out;
      const auto& a = act_[l];
      auto& next = act_[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        const double* row = W + o * in;
        for (std::size_t k = 0; k < in; ++k) acc += row[k] * a[k];
        next[o] = (l + 1 < last) ? std::tanh(acc) : acc;
      }
      off += in * out + out;
    }
  }

  void backward(std::span<double> grad) {
    std::vector<std::size_t> offsets(layers_.size(), 0);
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
      offsets[l + 1] = offsets[l] + layers_[l] * layers_[l + 1] + layers_[l + 1];
    for (std::size_t l = layers_.size() - 1; l-- > 0;) {
      const std::size_t in = layers_[l], out = layers_[l + 1];
      const double* W = w_.data() + offsets[l];
      double* gW = grad.data() + offsets[l];
      double* gb = gW + in * out;
      const auto& a = act_[l];
      const auto& d = delta_[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        double* grow = gW + o * in;
        for (std::size_t k = 0; k < in; ++k) grow[k] += d[o] * a[k];
        gb[o] += d[o];
      }
      if (l > 0) {
        auto& prev = delta_[l];
        for (std::size_t k = 0; k < in; ++k) {
          double acc = 0.0;
          for (std::size_t o = 0; o < out; ++o) acc += W[o * in + k] * d[o];
          prev[k] = acc * (1.0 - a[k] * a[k]);
        }
      }
    }
  }

  const ModelSpec& spec_;
  std::vector<std::size_t> layers_;
  std::span<const double> w_;
  std::vector<std::vector<double>> act_;
  std::vector<std::vector<double>> delta_;
};

}  // namespace detail

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

template <SampleRange R>
Evaluation evaluate(const ModelSpec& spec, const ParamVector& w, R&& batch) {
  detail::DenseNet net(spec, w.values);
  double loss = 0.0;
  std::size_t hits = 0, count = 0;
  for (const Sample& s : batch) {
    auto r = net.run(s, {});
    loss += r.loss;
    hits += r.correct ? 1 : 0;
    ++count;
  }
  require(count > 0, Errc::InvalidArgument, "empty batch");
  return {loss / static_cast<double>(count),
          static_cast<double>(hits) / static_cast<double>(count)};
}

/// Mean per-sample loss over the batch.
template <SampleRange R>
double loss(const ModelSpec& spec, const ParamVector& w, R&& batch) {
  return evaluate(spec, w, std::forward<R>(batch)).loss;
}

/// Analytic gradient of `loss` with respect to w.
template <SampleRange R>
ParamVector gradient(const ModelSpec& spec, const ParamVector& w, R&& batch) {
  detail::DenseNet net(spec, w.values);
  ParamVector g(std::vector<double>(w.size(), 0.0), spec.layers());
  std::size_t count = 0;
  for (const Sample& s : batch) {
    net.run(s, g.values);
    ++count;
  }
  require(count > 0, Errc::InvalidArgument, "empty batch");
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : g.values) v *= inv;
  return g;
}

}  // namespace trustfl
