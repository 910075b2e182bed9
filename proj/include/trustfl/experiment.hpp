#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "trustfl/adversary.hpp"
#include "trustfl/config.hpp"
#include "trustfl/dataset.hpp"
#include "trustfl/model.hpp"
#include "trustfl/parallel.hpp"
#include "trustfl/protocols.hpp"
#include "trustfl/topology.hpp"

namespace trustfl {

/// Data, partitions, corrupt set, initial model and graph for one config.
/// Everything is a function of the config alone, so arms built from the
/// same config share all of it.
struct ExperimentData {
  ModelSpec spec;
  SampleStore train;
  SampleStore validation;
  std::vector<Partition> partitions;
  std::vector<NodeId> corrupt;
  ParamVector w0;
  CommGraph graph;
  std::vector<std::string> warnings;
};

inline ExperimentData prepare_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentData d;
  const auto& ds = cfg.dataset;
  SampleStore all = ds.kind == DatasetSpec::Kind::Synthetic
                        ? synth_dataset(ds.d_in, ds.classes, ds.per_class, ds.spread, cfg.seed,
                                        ds.separation)
                        : load_csv(ds.path);
  auto [train, val] = split_holdout(all, ds.validation_fraction, cfg.seed);
  require(val.size() > 0, Errc::InvalidConfig, "validation set is empty");
  d.train = std::move(train);
  d.validation = std::move(val);
  d.spec = cfg.model;
  d.spec.d_in = d.train.d_in;
  d.spec.d_out = d.train.d_out;
  d.partitions = partition_iid(d.train, cfg.agents, cfg.seed);
  AttackConfig attack = cfg.attack;
  attack.seed = cfg.attack_seed();
  d.corrupt = select_corrupt(cfg.agents, attack);
  d.w0 = init_params(d.spec, cfg.seed, cfg.init_scale);
  if (is_centralized(cfg.round.protocol)) {
    d.graph = CommGraph(cfg.agents);
  } else {
    d.graph = build_topology(cfg.topology, cfg.agents, cfg.seed, &d.warnings);
    if (!d.graph.is_connected() && d.warnings.empty())
      d.warnings.push_back("communication graph is disconnected");
  }
  return d;
}

/// Mean trust held by benign agents toward corrupt and toward other benign
/// agents, over graph edges only.
struct TrustSummary {
  std::optional<double> benign_to_corrupt;
  std::optional<double> benign_to_benign;
};

struct MetricsRecord {
  int round = 0;
  std::optional<double> val_loss;  // empty when diverged
  std::optional<double> val_accuracy;
  bool diverged = false;
  std::vector<std::optional<double>> agent_loss;  // decentralized only
  TrustSummary trust;
  std::size_t global_trust_iterations = 0;
  bool global_trust_converged = true;
  std::vector<CoefficientRow> coefficients;
};

/// One protocol instance advanced round by round.
class Simulation {
 public:
  Simulation(ExperimentConfig cfg, ExperimentData data)
      : cfg_(std::move(cfg)), data_(std::move(data)) {
    if (centralized())
      state_ = make_federation(data_.partitions, data_.w0, data_.corrupt);
    else
      state_ = make_network(data_.partitions, data_.w0, data_.corrupt, data_.graph);
  }

  explicit Simulation(const ExperimentConfig& cfg) : Simulation(cfg, prepare_experiment(cfg)) {}

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const ExperimentData& data() const noexcept { return data_; }
  bool centralized() const { return is_centralized(cfg_.round.protocol); }
  int round() const {
    return centralized() ? federation().server.round : network().round;
  }

  Network& network() { return std::get<Network>(state_); }
  const Network& network() const { return std::get<Network>(state_); }
  Federation& federation() { return std::get<Federation>(state_); }
  const Federation& federation() const { return std::get<Federation>(state_); }

  RoundReport step() {
    RoundEnv env{data_.spec, data_.train, cfg_.training, cfg_.seed, cfg_.attack.scale,
                 cfg_.output.threads};
    const bool trusted = is_trusted(cfg_.round.protocol);
    if (centralized()) return centralized_round(federation(), env, cfg_.round, trusted);
    return decentralized_round(network(), data_.graph, env, cfg_.round, trusted);
  }

  MetricsRecord measure(RoundReport report) const {
    MetricsRecord m;
    m.round = report.round;
    m.global_trust_iterations = report.global_trust_iterations;
    m.global_trust_converged = report.global_trust_converged;
    m.coefficients = std::move(report.coefficients);
    if (centralized()) {
      auto e = safe_evaluate(federation().server.global);
      if (e) {
        m.val_loss = e->loss;
        m.val_accuracy = e->accuracy;
      }
      m.diverged = !e.has_value();
      m.trust = server_trust_summary();
      return m;
    }
    const auto& agents = network().agents;
    std::vector<std::optional<Evaluation>> evals(agents.size());
    parallel_for(agents.size(), cfg_.output.threads,
                 [&](std::size_t i) { evals[i] = safe_evaluate(agents[i].params); });
    double loss = 0.0, acc = 0.0;
    std::size_t benign = 0;
    bool diverged = false;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      m.agent_loss.push_back(evals[i] ? std::optional<double>(evals[i]->loss) : std::nullopt);
      if (agents[i].behavior != Behavior::Benign) continue;
      ++benign;
      if (!evals[i]) {
        diverged = true;
        continue;
      }
      loss += evals[i]->loss;
      acc += evals[i]->accuracy;
    }
    if (benign > 0 && !diverged && std::isfinite(loss)) {
      m.val_loss = loss / static_cast<double>(benign);
      m.val_accuracy = acc / static_cast<double>(benign);
    }
    m.diverged = !m.val_loss.has_value();
    m.trust = network_trust_summary();
    return m;
  }

  /// (trustor, trustee, tau, t) over graph edges; the server is trustor -1.
  struct TrustEntry {
    long trustor;
    NodeId trustee;
    double tau;
    double t;
  };

  std::vector<TrustEntry> trust_entries() const {
    std::vector<TrustEntry> out;
    if (centralized()) {
      for (const auto& [i, rec] : federation().server.records) {
        const double tau = expected_trust(rec);
        out.push_back({-1, i, tau, trust_for(tau)});
      }
      return out;
    }
    const auto& net = network();
    const bool global = cfg_.round.trust_mode == TrustMode::Global;
    for (NodeId i = 0; i < data_.graph.size(); ++i)
      for (NodeId j : data_.graph.neighbors(i)) {
        const double tau = net.trust.local(i, j);
        out.push_back({static_cast<long>(i), j, tau, trust_for(global ? net.trust.global(i, j) : tau)});
      }
    return out;
  }

 private:
  double trust_for(double v) const {
    if (!is_trusted(cfg_.round.protocol)) return 1.0;
    return cfg_.round.trust_mode == TrustMode::Pinned ? cfg_.round.pinned_trust : v;
  }

  std::optional<Evaluation> safe_evaluate(const ParamVector& w) const {
    if (!all_finite(w.values)) return std::nullopt;
    auto e = evaluate(data_.spec, w, data_.validation.samples);
    if (!std::isfinite(e.loss)) return std::nullopt;
    return e;
  }

  bool is_corrupt(NodeId id) const {
    return std::binary_search(data_.corrupt.begin(), data_.corrupt.end(), id);
  }

  TrustSummary network_trust_summary() const {
    const auto& tau = network().trust.local;
    double bc = 0.0, bb = 0.0;
    std::size_t nbc = 0, nbb = 0;
    for (NodeId i = 0; i < data_.graph.size(); ++i) {
      if (is_corrupt(i)) continue;
      for (NodeId j : data_.graph.neighbors(i)) {
        if (is_corrupt(j)) {
          bc += tau(i, j);
          ++nbc;
        } else {
          bb += tau(i, j);
          ++nbb;
        }
      }
    }
    TrustSummary s;
    if (nbc) s.benign_to_corrupt = bc / static_cast<double>(nbc);
    if (nbb) s.benign_to_benign = bb / static_cast<double>(nbb);
    return s;
  }

  TrustSummary server_trust_summary() const {
    double bc = 0.0, bb = 0.0;
    std::size_t nbc = 0, nbb = 0;
    for (const auto& [i, rec] : federation().server.records) {
      if (is_corrupt(i)) {
        bc += expected_trust(rec);
        ++nbc;
      } else {
        bb += expected_trust(rec);
        ++nbb;
      }
    }
    TrustSummary s;
    if (nbc) s.benign_to_corrupt = bc / static_cast<double>(nbc);
    if (nbb) s.benign_to_benign = bb / static_cast<double>(nbb);
    return s;
  }

  ExperimentConfig cfg_;
  ExperimentData data_;
  std::variant<Network, Federation> state_;
};

// ---------------------------------------------------------------- output

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json to_json(const MetricsRecord& m) {
  json j;
  j["round"] = m.round;
  j["val_loss"] = optional_json(m.val_loss);
  j["val_accuracy"] = optional_json(m.val_accuracy);
  j["diverged"] = m.diverged;
  if (!m.agent_loss.empty()) {
    json losses = json::array();
    for (const auto& l : m.agent_loss) losses.push_back(optional_json(l));
    j["agent_loss"] = std::move(losses);
  }
  j["trust"] = {{"benign_to_corrupt", optional_json(m.trust.benign_to_corrupt)},
                {"benign_to_benign", optional_json(m.trust.benign_to_benign)}};
  j["global_trust"] = {{"iterations", m.global_trust_iterations},
                       {"converged", m.global_trust_converged}};
  json rows = json::array();
  for (const auto& r : m.coefficients) {
    json row;
    row["owner"] = r.owner == kServerId ? json("server") : json(r.owner);
    row["sources"] = r.sources;
    row["values"] = r.values;
    rows.push_back(std::move(row));
  }
  j["coefficients"] = std::move(rows);
  return j;
}

struct RunSummary {
  std::size_t rounds = 0;
  std::optional<double> final_val_loss;
  std::optional<double> final_val_accuracy;
  bool diverged = false;
  std::size_t trust_nonconverged_rounds = 0;
  std::vector<NodeId> corrupt;
  std::vector<std::string> warnings;
  std::vector<std::optional<double>> loss_curve;
};

inline json to_json(const RunSummary& s, const ExperimentConfig& cfg) {
  json j;
  j["protocol"] = detail::name_of(detail::kProtocols, cfg.round.protocol);
  j["rounds"] = s.rounds;
  j["final_val_loss"] = optional_json(s.final_val_loss);
  j["final_val_accuracy"] = optional_json(s.final_val_accuracy);
  j["diverged"] = s.diverged;
  j["global_trust_nonconverged_rounds"] = s.trust_nonconverged_rounds;
  j["corrupt"] = s.corrupt;
  j["warnings"] = s.warnings;
  return j;
}

struct RunOptions {
  bool write_files = true;
  std::function<void(const MetricsRecord&)> on_round;
};

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::Io, "cannot write " + p.string());
  return out;
}

inline void write_snapshot(std::ostream& out, int round, const Simulation& sim) {
  for (const auto& e : sim.trust_entries()) {
    out << round << ',' << (e.trustor < 0 ? std::string("server") : std::to_string(e.trustor))
        << ',' << e.trustee << ',' << format_double(e.tau) << ',' << format_double(e.t) << '\n';
  }
}

}  // namespace detail

/// Runs `cfg.rounds` rounds. With write_files the output directory receives
/// metrics.jsonl (one line per round, flushed as it is written),
/// summary.json, trust_snapshots.csv and config.resolved.
inline RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  Simulation sim(cfg);
  RunSummary summary;
  summary.corrupt = sim.data().corrupt;
  summary.warnings = sim.data().warnings;

  namespace fs = std::filesystem;
  const fs::path dir(cfg.output.dir);
  std::ofstream metrics, snapshots;
  if (opts.write_files) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
    auto resolved = detail::open_output(dir / "config.resolved");
    resolved << config_to_json(cfg).dump(2) << '\n';
    metrics = detail::open_output(dir / "metrics.jsonl");
    snapshots = detail::open_output(dir / "trust_snapshots.csv");
    snapshots << "round,trustor,trustee,tau,t\n";
    if (cfg.output.snapshot_every > 0) detail::write_snapshot(snapshots, 0, sim);
  }

  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    MetricsRecord rec = sim.measure(sim.step());
    summary.rounds = static_cast<std::size_t>(rec.round);
    summary.final_val_loss = rec.val_loss;
    summary.final_val_accuracy = rec.val_accuracy;
    summary.diverged = rec.diverged;
    summary.loss_curve.push_back(rec.val_loss);
    if (!rec.global_trust_converged) ++summary.trust_nonconverged_rounds;
    if (opts.write_files) {
      metrics << to_json(rec).dump() << '\n' << std::flush;
      const auto every = cfg.output.snapshot_every;
      if (every > 0 && static_cast<std::size_t>(rec.round) % every == 0) {
        detail::write_snapshot(snapshots, rec.round, sim);
        snapshots.flush();
      }
    }
    if (opts.on_round) opts.on_round(rec);
  }

  if (opts.write_files) {
    auto out = detail::open_output(dir / "summary.json");
    out << to_json(summary, cfg).dump(2) << '\n';
  }
  return summary;
}

// ---------------------------------------------------------------- arms

/// "variant" or "variant:clean"; clean arms run without corrupt agents.
struct Arm {
  std::string label;
  Protocol protocol = Protocol::TrustedConsensus;
  bool clean = false;
};

inline Arm parse_arm(const std::string& text) {
  Arm arm;
  arm.label = text;
  std::string variant = text;
  if (auto colon = text.find(':'); colon != std::string::npos) {
    const std::string flag = text.substr(colon + 1);
    require(flag == "clean", Errc::InvalidConfig, "unknown arm flag '" + flag + "'");
    arm.clean = true;
    variant = text.substr(0, colon);
  }
  arm.protocol = detail::value_of(detail::kProtocols, variant, "arm");
  return arm;
}

inline std::vector<Arm> parse_arms(const std::string& list) {
  std::vector<Arm> arms;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    std::string item = list.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!item.empty()) arms.push_back(parse_arm(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  require(!arms.empty(), Errc::InvalidConfig, "no arms given");
  return arms;
}

inline ExperimentConfig arm_config(const ExperimentConfig& base, const Arm& arm) {
  ExperimentConfig cfg = base;
  cfg.round.protocol = arm.protocol;
  if (arm.clean) cfg.attack.corrupt_fraction = 0.0;
  std::string dir = arm.label;
  for (char& ch : dir)
    if (ch == ':') ch = '_';
  cfg.output.dir = (std::filesystem::path(base.output.dir) / dir).string();
  return cfg;
}

struct Comparison {
  std::vector<Arm> arms;
  std::vector<RunSummary> runs;
};

/// Runs every arm from the same config (same data, partitions, initial
/// model and, for non-clean arms, the same corrupt set) and writes an
/// aligned per-round loss table to comparison.csv.
inline Comparison compare_arms(const ExperimentConfig& base, const std::vector<Arm>& arms,
                               const RunOptions& opts = {}) {
  require(!arms.empty(), Errc::InvalidConfig, "no arms given");
  Comparison cmp;
  cmp.arms = arms;
  for (const auto& arm : arms) {
    try {
      cmp.runs.push_back(run_experiment(arm_config(base, arm), opts));
    } catch (const Error& e) {
      throw e.with_context("arm " + arm.label);
    }
  }
  if (opts.write_files) {
    std::filesystem::create_directories(base.output.dir);
    auto out = detail::open_output(std::filesystem::path(base.output.dir) / "comparison.csv");
    out << "round";
    for (const auto& arm : arms) out << ',' << arm.label;
    out << '\n';
    for (std::size_t r = 0; r < base.rounds; ++r) {
      out << r + 1;
      for (const auto& run : cmp.runs) {
        out << ',';
        if (r < run.loss_curve.size() && run.loss_curve[r]) out << format_double(*run.loss_curve[r]);
      }
      out << '\n';
    }
  }
  return cmp;
}

// ---------------------------------------------------------------- state

namespace detail {

inline json records_json(const std::map<NodeId, ReputationRecord>& records) {
  json out = json::array();
  for (const auto& [id, rec] : records) out.push_back({id, rec.r, rec.s});
  return out;
}

inline std::map<NodeId, ReputationRecord> records_from(const json& j) {
  std::map<NodeId, ReputationRecord> out;
  for (const auto& e : j) out[e.at(0).get<NodeId>()] = {e.at(1).get<double>(), e.at(2).get<double>()};
  return out;
}

inline json messages_json(const std::map<NodeId, ParamVector>& msgs) {
  json out = json::array();
  for (const auto& [id, m] : msgs) out.push_back({id, m.values});
  return out;
}

inline std::map<NodeId, ParamVector> messages_from(const json& j, const std::vector<std::size_t>& layers) {
  std::map<NodeId, ParamVector> out;
  for (const auto& e : j)
    out[e.at(0).get<NodeId>()] = ParamVector(e.at(1).get<std::vector<double>>(), layers);
  return out;
}

inline json matrix_json(const SquareMatrix& m) {
  return {{"n", m.size()}, {"values", std::vector<double>(m.data().begin(), m.data().end())}};
}

inline SquareMatrix matrix_from(const json& j) {
  const auto n = j.at("n").get<std::size_t>();
  const auto v = j.at("values").get<std::vector<double>>();
  require(v.size() == n * n, Errc::InvalidArgument, "trust matrix size mismatch");
  SquareMatrix m(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) m(i, k) = v[i * n + k];
  return m;
}

inline json agent_json(const AgentState& a) {
  return {{"id", a.id},
          {"partition", a.partition.indices},
          {"params", a.params.values},
          {"message", a.message.values},
          {"prev_messages", messages_json(a.prev_messages)},
          {"records", records_json(a.records)},
          {"adversary", a.behavior == Behavior::Adversary}};
}

inline AgentState agent_from(const json& j, const std::vector<std::size_t>& layers) {
  AgentState a;
  a.id = j.at("id").get<NodeId>();
  a.partition = {a.id, j.at("partition").get<std::vector<std::size_t>>()};
  a.params = ParamVector(j.at("params").get<std::vector<double>>(), layers);
  a.message = ParamVector(j.at("message").get<std::vector<double>>(), layers);
  a.prev_messages = messages_from(j.at("prev_messages"), layers);
  a.records = records_from(j.at("records"));
  a.behavior = j.at("adversary").get<bool>() ? Behavior::Adversary : Behavior::Benign;
  return a;
}

}  // namespace detail

/// Complete between-round state; doubles survive the round trip exactly.
inline json state_to_json(const Simulation& sim) {
  json j;
  if (sim.centralized()) {
    const auto& f = sim.federation();
    j["round"] = f.server.round;
    j["server"] = {{"global", f.server.global.values},
                   {"records", detail::records_json(f.server.records)},
                   {"prev_messages", detail::messages_json(f.server.prev_messages)}};
    json agents = json::array();
    for (const auto& a : f.agents) agents.push_back(detail::agent_json(a));
    j["agents"] = std::move(agents);
  } else {
    const auto& n = sim.network();
    j["round"] = n.round;
    j["trust"] = {{"local", detail::matrix_json(n.trust.local)},
                  {"global", detail::matrix_json(n.trust.global)}};
    json agents = json::array();
    for (const auto& a : n.agents) agents.push_back(detail::agent_json(a));
    j["agents"] = std::move(agents);
  }
  return j;
}

inline void restore_state(Simulation& sim, const json& j) {
  try {
    const auto layers = sim.data().spec.layers();
    std::vector<AgentState> agents;
    for (const auto& a : j.at("agents")) agents.push_back(detail::agent_from(a, layers));
    if (sim.centralized()) {
      auto& f = sim.federation();
      const auto& s = j.at("server");
      f.server.round = j.at("round").get<int>();
      f.server.global = ParamVector(s.at("global").get<std::vector<double>>(), layers);
      f.server.records = detail::records_from(s.at("records"));
      f.server.prev_messages = detail::messages_from(s.at("prev_messages"), layers);
      f.agents = std::move(agents);
    } else {
      auto& n = sim.network();
      n.round = j.at("round").get<int>();
      n.trust.local = detail::matrix_from(j.at("trust").at("local"));
      n.trust.global = detail::matrix_from(j.at("trust").at("global"));
      n.agents = std::move(agents);
    }
  } catch (const json::exception& e) {
    fail(Errc::InvalidArgument, std::string("bad state: ") + e.what());
  }
}

}  // namespace trustfl
