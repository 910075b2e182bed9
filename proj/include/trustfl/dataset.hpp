#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trustfl/comm_graph.hpp"
#include "trustfl/error.hpp"
#include "trustfl/rng.hpp"

namespace trustfl {

struct Sample {
  std::vector<double> x;
  std::vector<double> y;  // one-hot for classification

  bool operator==(const Sample&) const = default;
};

struct SampleStore {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  const Sample& operator[](std::size_t i) const { return samples[i]; }

  bool operator==(const SampleStore&) const = default;
};

/// Index set P_i of one agent into the training store.
struct Partition {
  NodeId owner = 0;
  std::vector<std::size_t> indices;

  std::size_t size() const noexcept { return indices.size(); }

  bool operator==(const Partition&) const = default;
};

inline std::vector<double> one_hot(std::size_t label, std::size_t classes) {
  std::vector<double> y(classes, 0.0);
  y.at(label) = 1.0;
  return y;
}

/// Isotropic Gaussian clusters. Class centers are unit vectors drawn from the
/// seed and scaled by `separation`; `spread` is the per-coordinate noise
/// standard deviation. Samples are stored class by class.
inline SampleStore synth_dataset(std::size_t d_in, std::size_t classes, std::size_t per_class,
                                 double spread, std::uint64_t seed, double separation = 3.0) {
  require(classes >= 2, Errc::InvalidArgument, "synthetic dataset needs at least two classes");
  require(d_in >= 1, Errc::InvalidArgument, "synthetic dataset needs d_in >= 1");
  require(spread >= 0.0 && separation > 0.0, Errc::InvalidArgument,
          "spread must be >= 0 and separation > 0");

  SampleStore store{d_in, classes, {}};
  store.samples.reserve(classes * per_class);

  Rng center_rng = make_stream(seed, Stream::Dataset, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(d_in));
  for (auto& c : centers) {
    double norm = 0.0;
    do {
      for (double& v : c) v = gauss(center_rng);
      norm = std::sqrt(std::inner_product(c.begin(), c.end(), c.begin(), 0.0));
    } while (norm == 0.0);
    for (double& v : c) v = separation * v / norm;
  }

  for (std::size_t k = 0; k < classes; ++k) {
    Rng noise = make_stream(seed, Stream::Dataset, 1, k);
    for (std::size_t n = 0; n < per_class; ++n) {
      Sample s{centers[k], one_hot(k, classes)};
      if (spread > 0.0)
        for (double& v : s.x) v += spread * gauss(noise);
      store.samples.push_back(std::move(s));
    }
  }
  return store;
}

/// Seeded split into (training, validation); the validation part takes
/// round(fraction * D) samples and is never handed to agents.
inline std::pair<SampleStore, SampleStore> split_holdout(const SampleStore& store, double fraction,
                                                         std::uint64_t seed) {
  require(fraction >= 0.0 && fraction < 1.0, Errc::InvalidArgument,
          "validation fraction must lie in [0, 1)");
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_stream(seed, Stream::Holdout);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * store.size()));
  SampleStore train{store.d_in, store.d_out, {}};
  SampleStore val{store.d_in, store.d_out, {}};
  // Keep the original relative order inside each side.
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  for (auto i : train_idx) train.samples.push_back(store[i]);
  for (auto i : val_idx) val.samples.push_back(store[i]);
  return {std::move(train), std::move(val)};
}

/// Random permutation cut into `agents` contiguous chunks; the first
/// D mod agents chunks receive one extra sample.
inline std::vector<Partition> partition_iid(std::size_t samples, std::size_t agents,
                                            std::uint64_t seed) {
  require(agents >= 1, Errc::InvalidArgument, "need at least one agent");
  require(samples >= agents, Errc::InvalidArgument,
          "cannot partition " + std::to_string(samples) + " samples over " +
              std::to_string(agents) + " agents");
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_stream(seed, Stream::Partition);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Partition> parts(agents);
  const std::size_t base = samples / agents;
  const std::size_t extra = samples % agents;
  std::size_t pos = 0;
  for (std::size_t a = 0; a < agents; ++a) {
    const std::size_t len = base + (a < extra ? 1 : 0);
    parts[a].owner = static_cast<NodeId>(a);
    parts[a].indices.assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }
  return parts;
}

inline std::vector<Partition> partition_iid(const SampleStore& store, std::size_t agents,
                                            std::uint64_t seed) {
  return partition_iid(store.size(), agents, seed);
}

/// Headerless CSV: feature columns followed by one integer label column.
/// `classes` = 0 infers max(label) + 1.
inline SampleStore load_csv(const std::string& path, std::size_t classes = 0) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::Io, "cannot open " + path);

  std::vector<std::vector<double>> features;
  std::vector<long> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    const std::string where = path + ":" + std::to_string(line_no);
    require(cells.size() >= 2, Errc::InvalidArgument, where + ": need features and a label");
    if (width == 0) width = cells.size();
    require(cells.size() == width, Errc::InvalidArgument,
            where + ": ragged row (" + std::to_string(cells.size()) + " columns, expected " +
                std::to_string(width) + ")");
    auto trim = [](std::string_view s) {
      while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
      while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
      return s;
    };
    std::vector<double> x(width - 1);
    for (std::size_t c = 0; c + 1 < width; ++c) {
      auto cell = trim(cells[c]);
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x[c]);
      require(ec == std::errc{} && p == cell.data() + cell.size(), Errc::InvalidArgument,
              where + ": bad number '" + std::string(cell) + "'");
    }
    long label = 0;
    auto cell = trim(cells.back());
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    require(ec == std::errc{} && p == cell.data() + cell.size() && label >= 0,
            Errc::InvalidArgument, where + ": bad label '" + std::string(cell) + "'");
    features.push_back(std::move(x));
    labels.push_back(label);
  }
  require(!labels.empty(), Errc::InvalidArgument, path + ": no samples");

  const auto max_label = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()));
  if (classes == 0) classes = std::max<std::size_t>(2, max_label + 1);
  require(max_label < classes, Errc::InvalidArgument, path + ": label exceeds class count");

  SampleStore store{width - 1, classes, {}};
  for (std::size_t i = 0; i < labels.size(); ++i)
    store.samples.push_back({std::move(features[i]), one_hot(labels[i], classes)});
  return store;
}

}  // namespace trustfl
