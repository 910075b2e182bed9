#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "frozen_oracles.hpp"
#include "test_util.hpp"
#include "trustfl/dataset.hpp"
#include "trustfl/model.hpp"
#include "trustfl/sgd.hpp"

using namespace trustfl;
using testutil::expect_error;

namespace {

ModelSpec tiny_spec(Architecture arch, LossKind loss) {
  ModelSpec s;
  s.architecture = arch;
  s.loss = loss;
  s.d_in = 3;
  s.d_out = 3;
  s.hidden = 4;
  return s;
}

std::vector<std::size_t> all_indices(const SampleStore& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

TEST(SynthDataset, ZeroSpreadGivesCenters) {
  auto s = synth_dataset(5, 3, 4, 0.0, 9);
  for (std::size_t c = 0; c < 3; ++c) {
    double norm = 0.0;
    for (double v : s[c * 4].x) norm += v * v;
    EXPECT_NEAR(std::sqrt(norm), 3.0, 1e-12);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(s[c * 4 + k].x, s[c * 4].x);
    EXPECT_EQ(s[c * 4].y, one_hot(c, 3));
  }
}

TEST(SynthDataset, DeterministicAndCounted) {
  auto a = synth_dataset(4, 2, 100, 1.0, 5);
  auto b = synth_dataset(4, 2, 100, 1.0, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 200u);
  EXPECT_NE(a, synth_dataset(4, 2, 100, 1.0, 6));
  expect_error(Errc::InvalidArgument, [] { synth_dataset(4, 1, 10, 1.0, 1); });
}

TEST(SplitHoldout, SizesAndDisjoint) {
  auto s = synth_dataset(3, 2, 50, 1.0, 2);
  auto [train, val] = split_holdout(s, 0.2, 7);
  EXPECT_EQ(val.size(), 20u);
  EXPECT_EQ(train.size(), 80u);
  auto again = split_holdout(s, 0.2, 7);
  EXPECT_EQ(again.first, train);
  EXPECT_EQ(again.second, val);
}

TEST(PartitionIid, Sizes) {
  auto p = partition_iid(6, 3, 1);
  for (const auto& part : p) EXPECT_EQ(part.size(), 2u);
  auto q = partition_iid(7, 3, 1);
  std::multiset<std::size_t> sizes;
  for (const auto& part : q) sizes.insert(part.size());
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{2, 2, 3}));
}

TEST(PartitionIid, DisjointCoverDeterministic) {
  auto p = partition_iid(103, 10, 4);
  EXPECT_EQ(p, partition_iid(103, 10, 4));
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    EXPECT_EQ(p[a].owner, a);
    total += p[a].size();
    for (auto i : p[a].indices) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(total, 103u);
  EXPECT_EQ(seen.size(), 103u);
  expect_error(Errc::InvalidArgument, [] { partition_iid(3, 4, 1); });
}

TEST(Loss, UniformLogitsGiveLogC) {
  for (std::size_t c : {2u, 3u, 7u}) {
    ModelSpec s{Architecture::LinearSoftmax, LossKind::CrossEntropy, 4, c};
    ParamVector w(std::vector<double>(s.param_count(), 0.0), s.layers());
    SampleStore batch{4, c, {}};
    batch.samples.push_back({{1, 2, 3, 4}, one_hot(0, c)});
    batch.samples.push_back({{-1, 0, 2, 1}, one_hot(c - 1, c)});
    EXPECT_NEAR(loss(s, w, batch.samples), std::log(static_cast<double>(c)), 1e-14);
  }
}

TEST(Loss, SquaredErrorZeroAtExactFit) {
  ModelSpec s{Architecture::LinearSoftmax, LossKind::SquaredError, 2, 3};
  ParamVector w(std::vector<double>(s.param_count(), 0.0), s.layers());
  // bias = target, weights = 0
  w.values[6] = 0.0;
  w.values[7] = 1.0;
  w.values[8] = 0.0;
  SampleStore batch{2, 3, {}};
  batch.samples.push_back({{0.4, -2.0}, one_hot(1, 3)});
  EXPECT_EQ(loss(s, w, batch.samples), 0.0);
  auto g = gradient(s, w, batch.samples);
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Loss, MatchesIndependentImplementation) {
  const auto batch = testutil::tiny_batch();
  struct Case {
    Architecture arch;
    LossKind loss;
    double value;
    const double* grad;
    std::size_t count;
  };
  const Case cases[] = {
      {Architecture::LinearSoftmax, LossKind::CrossEntropy, oracle::linear_ce_loss,
       oracle::linear_ce_grad, std::size(oracle::linear_ce_grad)},
      {Architecture::LinearSoftmax, LossKind::SquaredError, oracle::linear_se_loss,
       oracle::linear_se_grad, std::size(oracle::linear_se_grad)},
      {Architecture::Mlp, LossKind::CrossEntropy, oracle::mlp_ce_loss, oracle::mlp_ce_grad,
       std::size(oracle::mlp_ce_grad)},
      {Architecture::Mlp, LossKind::SquaredError, oracle::mlp_se_loss, oracle::mlp_se_grad,
       std::size(oracle::mlp_se_grad)},
  };
  for (const auto& c : cases) {
    auto spec = tiny_spec(c.arch, c.loss);
    ASSERT_EQ(spec.param_count(), c.count);
    ParamVector w(testutil::tiny_params(c.count), spec.layers());
    EXPECT_NEAR(loss(spec, w, batch.samples), c.value, 1e-13);
    auto g = gradient(spec, w, batch.samples);
    for (std::size_t k = 0; k < c.count; ++k) EXPECT_NEAR(g.values[k], c.grad[k], 1e-13) << k;
  }
}

TEST(Gradient, MeanOfPerSampleGradients) {
  const auto batch = testutil::tiny_batch();
  auto spec = tiny_spec(Architecture::Mlp, LossKind::CrossEntropy);
  ParamVector w(testutil::tiny_params(spec.param_count()), spec.layers());
  auto g = gradient(spec, w, batch.samples);
  std::vector<double> mean(g.size(), 0.0);
  for (const auto& s : batch.samples) {
    std::vector<Sample> one{s};
    auto gi = gradient(spec, w, one);
    for (std::size_t k = 0; k < g.size(); ++k) mean[k] += gi.values[k] / 3.0;
  }
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(g.values[k], mean[k], 1e-15);
}

TEST(Gradient, CentralDifferencesSpotCheck) {
  const auto batch = testutil::tiny_batch();
  for (auto arch : {Architecture::LinearSoftmax, Architecture::Mlp})
    for (auto lk : {LossKind::CrossEntropy, LossKind::SquaredError}) {
      auto spec = tiny_spec(arch, lk);
      ParamVector w(testutil::tiny_params(spec.param_count()), spec.layers());
      auto g = gradient(spec, w, batch.samples);
      for (std::size_t k = 0; k < w.size(); ++k) {
        auto plus = w, minus = w;
        plus.values[k] += 1e-5;
        minus.values[k] -= 1e-5;
        const double fd = (loss(spec, plus, batch.samples) - loss(spec, minus, batch.samples)) / 2e-5;
        EXPECT_NEAR(g.values[k], fd, 1e-8);
      }
    }
}

TEST(Loss, Errors) {
  auto spec = tiny_spec(Architecture::LinearSoftmax, LossKind::CrossEntropy);
  const auto batch = testutil::tiny_batch();
  ParamVector short_w(std::vector<double>(5, 0.0));
  expect_error(Errc::DimensionMismatch, [&] { loss(spec, short_w, batch.samples); });
  ParamVector nan_w(std::vector<double>(spec.param_count(), 0.0));
  nan_w.values[3] = std::nan("");
  expect_error(Errc::NonFinite, [&] { loss(spec, nan_w, batch.samples); });
  ParamVector w(std::vector<double>(spec.param_count(), 0.0));
  SampleStore wrong{2, 3, {{{1.0, 2.0}, one_hot(0, 3)}}};
  expect_error(Errc::DimensionMismatch, [&] { loss(spec, w, wrong.samples); });
  std::vector<Sample> empty;
  expect_error(Errc::InvalidArgument, [&] { loss(spec, w, empty); });
}

TEST(InitParams, ShapeAndDeterminism) {
  auto spec = tiny_spec(Architecture::Mlp, LossKind::CrossEntropy);
  auto a = init_params(spec, 3);
  EXPECT_EQ(a.size(), spec.param_count());
  EXPECT_TRUE(shape_consistent(a));
  EXPECT_EQ(a, init_params(spec, 3));
  EXPECT_NE(a, init_params(spec, 4));
}

TEST(ModelUpdate, ZeroStepIsIdentity) {
  auto spec = tiny_spec(Architecture::Mlp, LossKind::CrossEntropy);
  const auto store = testutil::tiny_batch();
  ParamVector w(testutil::tiny_params(spec.param_count()), spec.layers());
  Hyperparams hp;
  hp.learning_rate = Schedule::constant(0.0);
  hp.batch_size = 2;
  Rng rng = make_stream(1, Stream::Train);
  EXPECT_EQ(model_update(spec, w, store, all_indices(store), hp, 1, rng), w);
}

TEST(ModelUpdate, SingleSampleSingleStep) {
  auto spec = tiny_spec(Architecture::LinearSoftmax, LossKind::CrossEntropy);
  const auto store = testutil::tiny_batch();
  ParamVector w(testutil::tiny_params(spec.param_count()), spec.layers());
  Hyperparams hp;
  hp.learning_rate = Schedule::constant(0.3);
  std::vector<std::size_t> one{1};
  Rng rng = make_stream(1, Stream::Train);
  auto out = model_update(spec, w, store, one, hp, 1, rng);
  std::vector<Sample> batch{store[1]};
  auto g = gradient(spec, w, batch);
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_EQ(out.values[k], w.values[k] - 0.3 * g.values[k]);
}

TEST(ModelUpdate, TwoPassesEqualTwoSinglePasses) {
  auto spec = tiny_spec(Architecture::Mlp, LossKind::SquaredError);
  auto store = synth_dataset(3, 3, 7, 1.0, 2);
  ParamVector w = init_params(spec, 5);
  Hyperparams two;
  two.local_passes = 2;
  two.batch_size = 4;
  Hyperparams one = two;
  one.local_passes = 1;
  Rng a = make_stream(9, Stream::Train, 1, 2);
  Rng b = make_stream(9, Stream::Train, 1, 2);
  auto joint = model_update(spec, w, store, all_indices(store), two, 1, a);
  auto first = model_update(spec, w, store, all_indices(store), one, 1, b);
  auto second = model_update(spec, first, store, all_indices(store), one, 1, b);
  EXPECT_EQ(joint, second);
}

TEST(ModelUpdate, DescentOnConvexFullBatch) {
  ModelSpec spec{Architecture::LinearSoftmax, LossKind::CrossEntropy, 4, 3};
  auto store = synth_dataset(4, 3, 30, 1.0, 3);
  ParamVector w = init_params(spec, 1);
  Hyperparams hp;
  hp.learning_rate = Schedule::constant(0.05);
  hp.batch_size = store.size();
  double prev = loss(spec, w, store.samples);
  for (int k = 1; k <= 50; ++k) {
    Rng rng = make_stream(1, Stream::Train, static_cast<std::uint64_t>(k));
    w = model_update(spec, w, store, all_indices(store), hp, k, rng);
    const double now = loss(spec, w, store.samples);
    EXPECT_LE(now, prev + 1e-15);
    prev = now;
  }
}

TEST(Schedule, Kinds) {
  Schedule c = Schedule::constant(0.2);
  EXPECT_EQ(c(1), 0.2);
  EXPECT_EQ(c(50), 0.2);
  Schedule inv{Schedule::Kind::InverseTime, 1.0, 0.5};
  EXPECT_DOUBLE_EQ(inv(1), 1.0);
  EXPECT_DOUBLE_EQ(inv(3), 0.5);
  Schedule ex{Schedule::Kind::Exponential, 2.0, 0.5};
  EXPECT_DOUBLE_EQ(ex(1), 2.0);
  EXPECT_DOUBLE_EQ(ex(4), 0.25);
  expect_error(Errc::InvalidArgument, [] { Schedule::constant(0.0).validate("lr"); });
}

TEST(GlobalObjective, Reductions) {
  ModelSpec spec{Architecture::LinearSoftmax, LossKind::CrossEntropy, 3, 2};
  auto store = synth_dataset(3, 2, 20, 1.0, 8);
  ParamVector w = init_params(spec, 2);
  auto parts = partition_iid(store, 4, 3);

  std::vector<Partition> same(3, parts[0]);
  std::vector<double> uniform(3, 1.0 / 3.0);
  EXPECT_NEAR(global_objective(spec, w, store, same, uniform),
              loss(spec, w, indexed(store, parts[0].indices)), 1e-14);

  std::vector<double> point{0, 0, 1, 0};
  EXPECT_EQ(global_objective(spec, w, store, parts, point),
            loss(spec, w, indexed(store, parts[2].indices)));

  auto q = data_size_weights(parts);
  EXPECT_NEAR(global_objective(spec, w, store, parts, q), loss(spec, w, store.samples), 1e-14);

  std::vector<double> bad{0.5, 0.5, 0.5, 0.0};
  expect_error(Errc::WeightSumViolation, [&] { global_objective(spec, w, store, parts, bad); });
  std::vector<double> neg{1.5, -0.5, 0.0, 0.0};
  expect_error(Errc::WeightSumViolation, [&] { global_objective(spec, w, store, parts, neg); });
}

TEST(LoadCsv, ParsesAndRejects) {
  auto dir = testutil::scratch_dir("csv");
  {
    std::ofstream f(dir / "ok.csv");
    f << "0.5,1.0,0\n-1,2,2\n3.25, 4 ,1\n";
  }
  auto s = load_csv((dir / "ok.csv").string());
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.d_in, 2u);
  EXPECT_EQ(s.d_out, 3u);
  EXPECT_EQ(s[2].x, (std::vector<double>{3.25, 4.0}));
  EXPECT_EQ(s[1].y, one_hot(2, 3));
  {
    std::ofstream f(dir / "ragged.csv");
    f << "1,2,0\n1,0\n";
  }
  expect_error(Errc::InvalidArgument, [&] { load_csv((dir / "ragged.csv").string()); });
  {
    std::ofstream f(dir / "text.csv");
    f << "1,abc,0\n";
  }
  expect_error(Errc::InvalidArgument, [&] { load_csv((dir / "text.csv").string()); });
  expect_error(Errc::Io, [&] { load_csv((dir / "missing.csv").string()); });
}
