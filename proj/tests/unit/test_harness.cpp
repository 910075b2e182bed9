#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "trustfl/trustfl.hpp"

using namespace trustfl;
using testutil::expect_error;

namespace {

ExperimentConfig small_config(const std::string& name) {
  ExperimentConfig c;
  c.agents = 6;
  c.rounds = 6;
  c.seed = 3;
  c.dataset.d_in = 4;
  c.dataset.classes = 3;
  c.dataset.per_class = 30;
  c.training.learning_rate = Schedule::constant(0.05);
  c.training.batch_size = 4;
  c.attack.corrupt_fraction = 0.2;
  c.output.dir = testutil::scratch_dir(name).string();
  c.output.snapshot_every = 2;
  return c;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Topology, Complete) {
  auto g = build_topology(TopologySpec::complete(), 5, 1);
  for (NodeId i = 0; i < 5; ++i) EXPECT_EQ(g.neighbors(i).size(), 4u);
}

TEST(Topology, Ring) {
  auto g = build_topology(TopologySpec::ring(1), 6, 1);
  for (NodeId i = 0; i < 6; ++i) {
    auto n = g.neighbors(i);
    ASSERT_EQ(n.size(), 2u);
    EXPECT_TRUE(g.has_edge(i, static_cast<NodeId>((i + 1) % 6)));
    EXPECT_TRUE(g.has_edge(i, static_cast<NodeId>((i + 5) % 6)));
  }
  auto g2 = build_topology(TopologySpec::ring(2), 7, 1);
  for (NodeId i = 0; i < 7; ++i) EXPECT_EQ(g2.neighbors(i).size(), 4u);
}

TEST(Topology, Errors) {
  expect_error(Errc::InvalidTopology, [] { build_topology(TopologySpec::ring(3), 3, 1); });
  expect_error(Errc::InvalidTopology, [] { build_topology(TopologySpec::ring(0), 5, 1); });
  expect_error(Errc::InvalidTopology, [] { build_topology(TopologySpec::complete(), 1, 1); });
  expect_error(Errc::InvalidTopology,
               [] { build_topology(TopologySpec::random_geometric(0.0), 5, 1); });
}

TEST(Topology, GeometricIsConnectedAndSeeded) {
  auto a = build_topology(TopologySpec::random_geometric(0.3), 80, 4);
  EXPECT_TRUE(a.is_connected());
  auto b = build_topology(TopologySpec::random_geometric(0.3), 80, 4);
  for (NodeId i = 0; i < 80; ++i) EXPECT_EQ(a.neighbors(i).size(), b.neighbors(i).size());
  auto pinned = build_topology(TopologySpec::random_geometric(0.3, 4), 80, 999);
  for (NodeId i = 0; i < 80; ++i) EXPECT_EQ(a.neighbors(i).size(), pinned.neighbors(i).size());
}

TEST(Topology, DisconnectedGeometricWarns) {
  auto spec = TopologySpec::random_geometric(0.01);
  spec.max_attempts = 3;
  std::vector<std::string> warnings;
  auto g = build_topology(spec, 40, 2, &warnings);
  EXPECT_FALSE(g.is_connected());
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("disconnected"), std::string::npos);
}

TEST(Config, RoundTrip) {
  auto c = small_config("cfg_rt");
  c.round.protocol = Protocol::TrustedFedAvg;
  c.round.epsilon = {Schedule::Kind::Exponential, 0.8, 0.99};
  c.round.eval = EvalMethod::distance_based();
  c.topology = TopologySpec::ring(2);
  c.model.architecture = Architecture::Mlp;
  c.model.hidden = 7;
  auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
  EXPECT_EQ(back.round, c.round);
  EXPECT_EQ(back.topology, c.topology);
  EXPECT_EQ(back.training, c.training);
}

TEST(Config, ShippedConfigsLoad) {
  const std::filesystem::path dir = std::filesystem::path(TRUSTFL_SOURCE_DIR) / "configs";
  std::size_t count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 4u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  auto base = config_to_json(small_config("cfg_bad"));
  {
    auto j = base;
    j["trust"]["thresold"] = 1.5;
    expect_error(Errc::InvalidConfig, [&] { config_from_json(j); });
  }
  {
    auto j = base;
    j["extra"] = 1;
    expect_error(Errc::InvalidConfig, [&] { config_from_json(j); });
  }
  {
    auto j = base;
    j["protocol"]["variant"] = "gossip";
    expect_error(Errc::InvalidConfig, [&] { config_from_json(j); });
  }
  {
    auto j = base;
    j["agents"] = "many";
    expect_error(Errc::InvalidConfig, [&] { config_from_json(j); });
  }
  {
    auto j = base;
    j["rounds"] = 0;
    auto c = config_from_json(j);
    expect_error(Errc::InvalidConfig, [&] { c.validate(); });
  }
  {
    auto j = base;
    j["topology"]["kind"] = "ring";
    j["topology"]["k"] = 6;
    auto c = config_from_json(j);
    expect_error(Errc::InvalidConfig, [&] { c.validate(); });
  }
  expect_error(Errc::InvalidConfig, [] { parse_json_text("{\"agents\": ", "inline"); });
  expect_error(Errc::Io, [] { read_json_file("/nonexistent/trustfl.json"); });
}

TEST(Config, Overrides) {
  auto j = config_to_json(small_config("cfg_ovr"));
  apply_override(j, "protocol.variant=consensus");
  apply_override(j, "trust.threshold=2.5");
  apply_override(j, "agents=9");
  apply_override(j, "output.dir=\"elsewhere\"");
  auto c = config_from_json(j);
  EXPECT_EQ(c.round.protocol, Protocol::Consensus);
  EXPECT_EQ(c.round.eval.threshold, 2.5);
  EXPECT_EQ(c.agents, 9u);
  EXPECT_EQ(c.output.dir, "elsewhere");
  expect_error(Errc::InvalidConfig, [&] { apply_override(j, "novalue"); });
  expect_error(Errc::InvalidConfig, [&] { apply_override(j, "agents.x=1"); });
}

TEST(Harness, OneRoundOneRecord) {
  auto c = small_config("one_round");
  c.rounds = 1;
  auto s = run_experiment(c);
  EXPECT_EQ(s.rounds, 1u);
  auto lines = lines_of(testutil::slurp(std::filesystem::path(c.output.dir) / "metrics.jsonl"));
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(json::parse(lines[0]).at("round"), 1);
}

TEST(Harness, ArtifactsAreWellFormed) {
  auto c = small_config("artifacts");
  auto s = run_experiment(c);
  const std::filesystem::path dir(c.output.dir);
  auto lines = lines_of(testutil::slurp(dir / "metrics.jsonl"));
  ASSERT_EQ(lines.size(), c.rounds);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    auto j = json::parse(lines[k]);
    EXPECT_EQ(j.at("round"), k + 1);
    EXPECT_TRUE(j.at("val_loss").is_number());
    for (const auto& row : j.at("coefficients")) {
      double sum = 0.0;
      for (double v : row.at("values")) sum += v;
      if (!row.at("values").empty()) {
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    }
  }
  auto summary = json::parse(testutil::slurp(dir / "summary.json"));
  EXPECT_EQ(summary.at("rounds"), c.rounds);
  EXPECT_EQ(summary.at("final_val_loss").get<double>(), *s.final_val_loss);
  EXPECT_EQ(summary.at("corrupt").size(), 1u);

  auto snaps = lines_of(testutil::slurp(dir / "trust_snapshots.csv"));
  ASSERT_FALSE(snaps.empty());
  EXPECT_EQ(snaps[0], "round,trustor,trustee,tau,t");
  std::set<int> rounds;
  for (std::size_t k = 1; k < snaps.size(); ++k) rounds.insert(std::stoi(snaps[k]));
  EXPECT_EQ(rounds, (std::set<int>{0, 2, 4, 6}));
  // complete graph of 6: 30 directed pairs per snapshot
  EXPECT_EQ(snaps.size() - 1, 4u * 30u);

  auto resolved = config_from_json(json::parse(testutil::slurp(dir / "config.resolved")));
  EXPECT_EQ(config_to_json(resolved).dump(), config_to_json(c).dump());
}

TEST(Harness, RerunsAreByteIdentical) {
  auto a = small_config("rerun_a");
  auto b = small_config("rerun_b");
  run_experiment(a);
  run_experiment(b);
  for (const char* f : {"metrics.jsonl", "trust_snapshots.csv", "summary.json"})
    EXPECT_EQ(testutil::slurp(std::filesystem::path(a.output.dir) / f),
              testutil::slurp(std::filesystem::path(b.output.dir) / f))
        << f;
}

TEST(Harness, ThreadCountDoesNotChangeArtifacts) {
  auto a = small_config("threads_a");
  auto b = small_config("threads_b");
  b.output.threads = 4;
  run_experiment(a);
  run_experiment(b);
  EXPECT_EQ(testutil::slurp(std::filesystem::path(a.output.dir) / "metrics.jsonl"),
            testutil::slurp(std::filesystem::path(b.output.dir) / "metrics.jsonl"));
}

TEST(Harness, CentralizedRunServerSnapshots) {
  auto c = small_config("central");
  c.round.protocol = Protocol::TrustedFedAvg;
  c.round.selection_fraction = 0.5;
  auto s = run_experiment(c);
  EXPECT_TRUE(s.final_val_loss.has_value());
  auto snaps = lines_of(testutil::slurp(std::filesystem::path(c.output.dir) / "trust_snapshots.csv"));
  ASSERT_GT(snaps.size(), 1u);
  EXPECT_EQ(snaps[1].rfind("0,server,", 0), 0u) << snaps[1];
}

TEST(Harness, ParseArms) {
  auto arms = parse_arms("consensus:clean,trusted-consensus,consensus");
  ASSERT_EQ(arms.size(), 3u);
  EXPECT_TRUE(arms[0].clean);
  EXPECT_EQ(arms[1].protocol, Protocol::TrustedConsensus);
  EXPECT_FALSE(arms[2].clean);
  expect_error(Errc::InvalidConfig, [] { parse_arms("consensus:dirty"); });
  expect_error(Errc::InvalidConfig, [] { parse_arms("gossip"); });
  expect_error(Errc::InvalidConfig, [] { parse_arms(""); });
}

TEST(Harness, CompareSingleArmMatchesRun) {
  auto base = small_config("cmp_single");
  auto cmp = compare_arms(base, parse_arms("trusted-consensus"));
  auto direct = small_config("cmp_direct");
  auto run = run_experiment(direct);
  ASSERT_EQ(cmp.runs.size(), 1u);
  EXPECT_EQ(cmp.runs[0].loss_curve, run.loss_curve);
  auto table = lines_of(testutil::slurp(std::filesystem::path(base.output.dir) / "comparison.csv"));
  ASSERT_EQ(table.size(), base.rounds + 1);
  EXPECT_EQ(table[0], "round,trusted-consensus");
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(base.output.dir) / "trusted-consensus" /
                                      "metrics.jsonl"));
}

TEST(Harness, CompareIdenticalArmsAgree) {
  auto base = small_config("cmp_same");
  auto cmp = compare_arms(base, parse_arms("consensus,consensus"));
  EXPECT_EQ(cmp.runs[0].loss_curve, cmp.runs[1].loss_curve);
}

TEST(Harness, CompareCleanArmHasNoAdversaries) {
  auto base = small_config("cmp_clean");
  auto cmp = compare_arms(base, parse_arms("consensus:clean,consensus"));
  EXPECT_TRUE(cmp.runs[0].corrupt.empty());
  EXPECT_EQ(cmp.runs[1].corrupt.size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(base.output.dir) / "consensus_clean"));
}

TEST(Harness, NeutralityAcrossArms) {
  auto base = small_config("cmp_neutral");
  base.attack.corrupt_fraction = 0.0;
  base.round.trust_mode = TrustMode::Pinned;
  base.round.pinned_trust = 0.6;
  auto cmp = compare_arms(base, parse_arms("consensus,trusted-consensus"));
  EXPECT_EQ(cmp.runs[0].loss_curve, cmp.runs[1].loss_curve);
  auto central = compare_arms(base, parse_arms("fedavg,trusted-fedavg"));
  EXPECT_EQ(central.runs[0].loss_curve, central.runs[1].loss_curve);
}

TEST(Harness, ReplayFromSavedState) {
  auto c = small_config("replay");
  Simulation full(c);
  for (int k = 0; k < 3; ++k) full.step();
  const auto saved = state_to_json(full).dump();

  std::vector<std::string> tail_full;
  for (int k = 0; k < 3; ++k) tail_full.push_back(to_json(full.measure(full.step())).dump());

  Simulation resumed(c);
  restore_state(resumed, json::parse(saved));
  EXPECT_EQ(resumed.round(), 3);
  for (int k = 0; k < 3; ++k)
    EXPECT_EQ(to_json(resumed.measure(resumed.step())).dump(), tail_full[static_cast<std::size_t>(k)]);
}

TEST(Harness, ReplayCentralized) {
  auto c = small_config("replay_c");
  c.round.protocol = Protocol::TrustedFedAvg;
  c.round.selection_fraction = 0.5;
  Simulation full(c);
  full.step();
  full.step();
  const auto saved = state_to_json(full);
  Simulation resumed(c);
  restore_state(resumed, saved);
  EXPECT_EQ(resumed.federation(), full.federation());
  full.step();
  resumed.step();
  EXPECT_EQ(resumed.federation(), full.federation());
}

TEST(Harness, AgentCountAboveSamplesRejected) {
  auto c = small_config("too_many");
  c.agents = 500;
  expect_error(Errc::InvalidConfig, [&] { c.validate(); });
}
