#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "trustfl/adversary.hpp"
#include "trustfl/comm_graph.hpp"
#include "trustfl/dataset.hpp"
#include "trustfl/error.hpp"
#include "trustfl/model.hpp"
#include "trustfl/parallel.hpp"
#include "trustfl/param_vector.hpp"
#include "trustfl/rng.hpp"
#include "trustfl/sgd.hpp"
#include "trustfl/trust_core.hpp"
#include "trustfl/trust_eval.hpp"

namespace trustfl {

enum class Protocol { FedAvg, TrustedFedAvg, Consensus, TrustedConsensus };

inline bool is_centralized(Protocol p) {
  return p == Protocol::FedAvg || p == Protocol::TrustedFedAvg;
}
inline bool is_trusted(Protocol p) {
  return p == Protocol::TrustedFedAvg || p == Protocol::TrustedConsensus;
}

/// Which trust value weights aggregation.
///   Local:  first-hand expected trust tau.
///   Global: propagated trust t (decentralized only; the server has no peers
///           to consult, so centralized runs treat it as Local).
///   Pinned: every value replaced by `pinned_trust`; evidence is still
///           collected. Used for neutrality checks and ablations.
enum class TrustMode { Local, Global, Pinned };

/// Sampling weights q_i for server-side agent selection.
enum class SelectionWeights { DataSize, Uniform };

enum class Behavior { Benign, Adversary };

struct RoundConfig {
  Protocol protocol = Protocol::TrustedConsensus;
  double selection_fraction = 0.1;
  Schedule epsilon = Schedule::constant(0.5);
  EvalMethod eval = EvalMethod::clustering();
  ForgettingFactors factors;
  TrustMode trust_mode = TrustMode::Global;
  double pinned_trust = 1.0;
  GlobalTrustOptions global_trust;
  SelectionWeights selection_weights = SelectionWeights::DataSize;

  /// n = round(c * N).
  std::size_t selected_count(std::size_t agents) const {
    return static_cast<std::size_t>(std::llround(selection_fraction * static_cast<double>(agents)));
  }

  void validate(std::size_t agents) const {
    require(selection_fraction > 0.0 && selection_fraction <= 1.0, Errc::InvalidArgument,
            "selection fraction must lie in (0, 1]");
    if (is_centralized(protocol))
      require(selected_count(agents) >= 1, Errc::InvalidArgument,
              "selection fraction selects no agent");
    epsilon.validate("consensus step");
    require(epsilon.base <= 1.0, Errc::InvalidArgument, "consensus step must lie in (0, 1]");
    if (epsilon.kind == Schedule::Kind::Exponential)
      require(epsilon.decay <= 1.0, Errc::InvalidArgument,
              "consensus step decay above 1 would leave (0, 1]");
    eval.validate();
    factors.validate();
    global_trust.validate();
    require(pinned_trust > 0.0 && pinned_trust <= 1.0, Errc::InvalidArgument,
            "pinned trust must lie in (0, 1]");
  }

  bool operator==(const RoundConfig&) const = default;
};

struct AgentState {
  NodeId id = 0;
  Partition partition;
  ParamVector params;   // w_i
  ParamVector message;  // m_i, what the neighbors receive next
  std::map<NodeId, ParamVector> prev_messages;
  std::map<NodeId, ReputationRecord> records;
  Behavior behavior = Behavior::Benign;

  bool operator==(const AgentState&) const = default;
};

/// Server side of the centralized protocols.
struct ServerState {
  ParamVector global;
  std::map<NodeId, ReputationRecord> records;
  std::map<NodeId, ParamVector> prev_messages;
  int round = 0;

  bool operator==(const ServerState&) const = default;
};

struct Federation {
  ServerState server;
  std::vector<AgentState> agents;

  bool operator==(const Federation&) const = default;
};

/// Decentralized network state between rounds.
struct Network {
  std::vector<AgentState> agents;
  TrustMatrix trust;
  int round = 0;

  bool operator==(const Network& o) const {
    return agents == o.agents && trust.local == o.trust.local && trust.global == o.trust.global &&
           round == o.round;
  }
};

/// Read-only context shared by every agent in a round.
struct RoundEnv {
  const ModelSpec& spec;
  const SampleStore& train;
  const Hyperparams& hp;
  std::uint64_t seed = 0;
  double attack_scale = 1.0;
  std::size_t threads = 1;
};

inline constexpr NodeId kServerId = std::numeric_limits<NodeId>::max();

/// Normalised mixing weights of one aggregator over its sources.
struct CoefficientRow {
  NodeId owner = kServerId;
  std::vector<NodeId> sources;
  std::vector<double> values;
};

struct RoundReport {
  int round = 0;
  std::vector<NodeId> participants;
  std::vector<CoefficientRow> coefficients;
  std::size_t global_trust_iterations = 0;
  bool global_trust_converged = true;
};

/// Weighted sampling without replacement: each draw picks among the
/// remaining agents with probability proportional to q. Returned sorted.
inline std::vector<NodeId> select_agents(std::span<const double> q, std::size_t n, Rng& rng) {
  const std::size_t total = q.size();
  require(n <= total, Errc::InvalidArgument, "cannot select more agents than exist");
  std::vector<NodeId> chosen;
  if (n == total) {
    for (NodeId i = 0; i < total; ++i) chosen.push_back(i);
    return chosen;
  }
  std::size_t positive = 0;
  for (double v : q) {
    require(v >= 0.0 && std::isfinite(v), Errc::InvalidArgument, "q must be nonnegative");
    positive += v > 0.0 ? 1 : 0;
  }
  if (positive < n)
    fail(Errc::DegenerateWeights, std::to_string(positive) + " agents with q > 0, need " +
                                      std::to_string(n));
  std::vector<double> remaining(q.begin(), q.end());
  for (std::size_t draw = 0; draw < n; ++draw) {
    double mass = 0.0;
    for (double v : remaining) mass += v;
    const double u = uniform01(rng) * mass;
    double acc = 0.0;
    std::size_t pick = total;
    std::size_t last_positive = total;
    for (std::size_t i = 0; i < total; ++i) {
      if (remaining[i] <= 0.0) continue;
      last_positive = i;
      acc += remaining[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    if (pick == total) pick = last_positive;  // u landed on the rounding edge
    chosen.push_back(static_cast<NodeId>(pick));
    remaining[pick] = 0.0;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

/// c_j = D_j t_j / sum_l D_l t_l. Trust is divided by its maximum first:
/// the mathematical value is unchanged and any common constant becomes
/// exactly 1, so uniform trust reproduces the size-only weights bit for bit.
inline std::vector<double> aggregation_coefficients(std::span<const double> sizes,
                                                    std::span<const double> trust) {
  require(sizes.size() == trust.size(), Errc::DimensionMismatch, "one trust value per size");
  require(!sizes.empty(), Errc::InvalidArgument, "no sources to aggregate");
  double t_max = 0.0;
  for (double t : trust) {
    require(t >= 0.0 && std::isfinite(t), Errc::InvalidArgument, "trust must be finite and >= 0");
    t_max = std::max(t_max, t);
  }
  if (t_max <= 0.0) fail(Errc::ZeroMass, "all trust values are zero");
  std::vector<double> mass(sizes.size());
  double total = 0.0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    mass[k] = sizes[k] * (trust[k] / t_max);
    total += mass[k];
  }
  if (!(total > 0.0)) fail(Errc::ZeroMass, "sum of D_i * t_i is zero");
  for (double& m : mass) m /= total;
  return mass;
}

namespace detail {

template <class T>
std::vector<double> values_for(const std::map<NodeId, T>& source,
                               const std::map<NodeId, ParamVector>& keys, const char* what) {
  std::vector<double> out;
  out.reserve(keys.size());
  for (const auto& [id, msg] : keys) {
    auto it = source.find(id);
    if (it == source.end()) fail(Errc::InvalidArgument, std::string("missing ") + what + " for " +
                                                            std::to_string(id));
    out.push_back(static_cast<double>(it->second));
  }
  return out;
}

}  // namespace detail

/// Trust- and size-weighted convex combination of the messages.
inline ParamVector aggregate_trusted(const std::map<NodeId, ParamVector>& messages,
                                     const std::map<NodeId, double>& sizes,
                                     const std::map<NodeId, double>& trust,
                                     std::vector<double>* coefficients_out = nullptr) {
  require(!messages.empty(), Errc::InvalidArgument, "no messages to aggregate");
  auto coef = aggregation_coefficients(detail::values_for(sizes, messages, "size"),
                                       detail::values_for(trust, messages, "trust"));
  const std::size_t dim = messages.begin()->second.size();
  ParamVector out(std::vector<double>(dim, 0.0), messages.begin()->second.layers);
  std::size_t k = 0;
  for (const auto& [id, m] : messages) {
    require(m.size() == dim, Errc::DimensionMismatch, "messages differ in length");
    const double c = coef[k++];
    for (std::size_t p = 0; p < dim; ++p) out.values[p] += c * m.values[p];
  }
  if (coefficients_out) *coefficients_out = std::move(coef);
  return out;
}

/// Psi = m_i + eps * sum_j c_j (m_j - w_i) with precomputed c (ascending j).
inline ParamVector consensus_fuse(const ParamVector& own, const ParamVector& own_message,
                                  const std::map<NodeId, ParamVector>& messages,
                                  std::span<const double> coefficients, double eps) {
  require(coefficients.size() == messages.size(), Errc::DimensionMismatch,
          "one coefficient per neighbor message");
  require_same_size(own.values, own_message.values, "consensus_fuse");
  ParamVector psi = own_message;
  std::size_t k = 0;
  for (const auto& [j, m] : messages) {
    require_same_size(own.values, m.values, "consensus_fuse");
    const double step = eps * coefficients[k++];
    for (std::size_t p = 0; p < psi.size(); ++p) psi.values[p] += step * (m.values[p] - own.values[p]);
  }
  return psi;
}

/// Consensus fusion with weights D_j t_ij / sum D t over the received messages.
/// An empty neighborhood leaves Psi = m_i.
inline ParamVector consensus_fuse(const ParamVector& own,
                                  const std::map<NodeId, ParamVector>& messages,
                                  const std::map<NodeId, double>& trust,
                                  const std::map<NodeId, double>& sizes, double eps,
                                  const ParamVector* own_message = nullptr) {
  require(eps >= 0.0 && eps <= 1.0, Errc::InvalidArgument, "consensus step must lie in [0, 1]");
  const ParamVector& start = own_message ? *own_message : own;
  if (messages.empty()) return start;
  auto coef = aggregation_coefficients(detail::values_for(sizes, messages, "size"),
                                       detail::values_for(trust, messages, "trust"));
  return consensus_fuse(own, start, messages, coef, eps);
}

namespace detail {

inline std::string where(int round, NodeId agent) {
  return "round " + std::to_string(round) + ", agent " + std::to_string(agent);
}

template <class Fn>
void for_each_agent(std::size_t n, std::size_t threads, int round,
                    std::span<const NodeId> ids, Fn&& fn) {
  parallel_for(n, threads, [&](std::size_t k) {
    try {
      fn(k);
    } catch (const Error& e) {
      throw e.with_context(where(round, ids[k]));
    }
  });
}

inline double trust_value(const RoundConfig& cfg, double value) {
  return cfg.trust_mode == TrustMode::Pinned ? cfg.pinned_trust : value;
}

/// Honest local training, or the fabricated message for adversaries.
inline ParamVector produce_message(const AgentState& agent, const ParamVector& start,
                                   std::span<const ParamVector> received, const RoundEnv& env,
                                   int round) {
  if (agent.behavior == Behavior::Adversary) {
    if (received.empty()) return agent.message;
    Rng rng = make_stream(env.seed, Stream::Poison, static_cast<std::uint64_t>(round), agent.id);
    return poison_message(received, env.attack_scale, rng);
  }
  Rng rng = make_stream(env.seed, Stream::Train, static_cast<std::uint64_t>(round), agent.id);
  ParamVector w = model_update(env.spec, start, env.train, agent.partition.indices, env.hp, round, rng);
  if (!all_finite(w.values)) fail(Errc::NonFinite, "local update produced non-finite parameters");
  return w;
}

inline std::vector<NodeId> ids_of(const std::vector<AgentState>& agents) {
  std::vector<NodeId> ids;
  for (const auto& a : agents) ids.push_back(a.id);
  return ids;
}

inline void check_ids(const std::vector<AgentState>& agents) {
  for (std::size_t k = 0; k < agents.size(); ++k)
    require(agents[k].id == k, Errc::InvalidArgument, "agent ids must be 0..N-1 in order");
}

}  // namespace detail

/// One centralized round. `trusted` switches between plain FedAvg
/// (coefficients D_i / sum D) and Trusted FedAvg, where the server scores
/// each selected agent, updates its first-hand reputation record and
/// weights by D_i t_Si. Unselected agents' records are left untouched.
inline RoundReport centralized_round(Federation& fed, const RoundEnv& env, const RoundConfig& cfg,
                                     bool trusted) {
  auto& server = fed.server;
  auto& agents = fed.agents;
  detail::check_ids(agents);
  const int k = server.round + 1;
  const std::size_t total = agents.size();
  cfg.validate(total);

  std::vector<double> q;
  if (cfg.selection_weights == SelectionWeights::Uniform) {
    q.assign(total, 1.0 / static_cast<double>(total));
  } else {
    std::vector<Partition> parts;
    for (const auto& a : agents) parts.push_back(a.partition);
    q = data_size_weights(parts);
  }
  Rng selection = make_stream(env.seed, Stream::Selection, static_cast<std::uint64_t>(k));
  const auto selected = select_agents(q, cfg.selected_count(total), selection);

  // The server's global model is the only thing a selected agent receives.
  const std::vector<ParamVector> broadcast{server.global};
  std::vector<ParamVector> outgoing(selected.size());
  detail::for_each_agent(selected.size(), env.threads, k, selected, [&](std::size_t s) {
    const auto& agent = agents[selected[s]];
    outgoing[s] = detail::produce_message(agent, server.global, broadcast, env, k);
  });

  std::map<NodeId, ParamVector> messages;
  for (std::size_t s = 0; s < selected.size(); ++s) messages.emplace(selected[s], outgoing[s]);

  std::map<NodeId, double> sizes, trust;
  for (NodeId i : selected) {
    sizes[i] = static_cast<double>(agents[i].partition.size());
    trust[i] = 1.0;
  }

  if (trusted) {
    std::map<NodeId, int> evidence;
    if (cfg.eval.kind == EvalMethod::Kind::Clustering) {
      // The server's own vector in N^+ is the model it broadcast this round.
      std::map<NodeId, ParamVector> pool = messages;
      pool.emplace(kServerId, server.global);
      std::map<NodeId, double> devs;
      for (NodeId i : selected) devs[i] = clustering_deviation(i, pool);
      evidence = clustering_indicator(devs, cfg.eval.threshold);
    } else {
      for (NodeId i : selected) {
        auto prev = server.prev_messages.find(i);
        evidence[i] = prev == server.prev_messages.end()
                          ? 1
                          : distance_indicator(server.global, prev->second, messages.at(i));
      }
    }
    for (NodeId i : selected) {
      auto& rec = server.records[i];
      rec = update_reputation(rec, evidence.at(i), cfg.factors);
      trust[i] = detail::trust_value(cfg, expected_trust(rec));
      server.prev_messages[i] = messages.at(i);
    }
  }

  RoundReport report;
  report.round = k;
  report.participants = selected;
  CoefficientRow row{kServerId, selected, {}};
  try {
    server.global = aggregate_trusted(messages, sizes, trust, &row.values);
  } catch (const Error& e) {
    throw e.with_context("round " + std::to_string(k) + ", server");
  }
  report.coefficients.push_back(std::move(row));
  server.round = k;
  return report;
}

inline RoundReport trusted_fedavg_round(Federation& fed, const RoundEnv& env,
                                        const RoundConfig& cfg) {
  return centralized_round(fed, env, cfg, true);
}

inline RoundReport fedavg_round(Federation& fed, const RoundEnv& env, const RoundConfig& cfg) {
  return centralized_round(fed, env, cfg, false);
}

/// Fills the local trust matrix from every agent's reputation records;
/// pairs without a record hold the prior mean 0.5.
inline SquareMatrix local_trust_matrix(const std::vector<AgentState>& agents) {
  SquareMatrix tau(agents.size(), expected_trust({}));
  for (const auto& a : agents)
    for (const auto& [j, rec] : a.records)
      if (j < agents.size()) tau(a.id, j) = expected_trust(rec);
  return tau;
}

/// One synchronous decentralized round over `graph`. Every agent reads the
/// messages broadcast at the end of the previous round; nothing written in
/// this round is visible until all agents are done.
///
/// Trusted variant, per agent i:
///   1. evidence I_ij for each neighbor j (clustering or distance method),
///   2. reputation update -> tau_ij,
///   3. t_ij = tau_ij, or the propagated fixed point over the whole graph
///      (trust mode Global), or the pinned constant,
///   4. consensus fusion weighted by D_j t_ij, then local SGD.
/// The distance method's reference model is i's own model from the same
/// round that produced m_j, i.e. its current model.
inline RoundReport decentralized_round(Network& net, const CommGraph& graph, const RoundEnv& env,
                                       const RoundConfig& cfg, bool trusted) {
  auto& agents = net.agents;
  detail::check_ids(agents);
  const std::size_t n = agents.size();
  require(graph.size() == n, Errc::DimensionMismatch, "graph size differs from agent count");
  cfg.validate(n);
  const int k = net.round + 1;
  const auto ids = detail::ids_of(agents);

  std::vector<std::map<NodeId, ReputationRecord>> records(n);
  RoundReport report;
  report.round = k;
  report.participants = ids;

  if (trusted) {
    // Pairwise squared distances between this round's messages, shared by
    // every clustering evaluation.
    SquareMatrix d2;
    if (cfg.eval.kind == EvalMethod::Kind::Clustering) {
      d2 = SquareMatrix(n, 0.0);
      std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
      parallel_for(n, env.threads, [&](std::size_t a) {
        for (std::size_t b = 0; b < n; ++b)
          if (a != b)
            rows[a][b] = squared_distance(agents[a].message.values, agents[b].message.values);
      });
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) d2(a, b) = rows[a][b];
    }

    detail::for_each_agent(n, env.threads, k, ids, [&](std::size_t i) {
      const auto& me = agents[i];
      auto nbrs = graph.neighbors(static_cast<NodeId>(i));
      std::map<NodeId, int> evidence;
      if (nbrs.empty()) {
        // nothing received, nothing to score
      } else if (cfg.eval.kind == EvalMethod::Kind::Clustering) {
        // N_i^+ in ascending id order, with i's own model standing in for itself.
        std::vector<NodeId> plus(nbrs.begin(), nbrs.end());
        plus.insert(std::lower_bound(plus.begin(), plus.end(), static_cast<NodeId>(i)),
                    static_cast<NodeId>(i));
        std::map<NodeId, double> devs;
        for (NodeId j : nbrs) {
          double sum = 0.0;
          for (NodeId l : plus)
            sum += l == i ? squared_distance(me.params.values, agents[j].message.values)
                          : d2(l, j);
          devs[j] = sum / static_cast<double>(plus.size());
        }
        evidence = clustering_indicator(devs, cfg.eval.threshold);
      } else {
        for (NodeId j : nbrs) {
          auto prev = me.prev_messages.find(j);
          evidence[j] = prev == me.prev_messages.end()
                            ? 1
                            : distance_indicator(me.params, prev->second, agents[j].message);
        }
      }
      auto& out = records[i];
      out = me.records;
      for (auto [j, ind] : evidence) out[j] = update_reputation(out[j], ind, cfg.factors);
    });
    for (std::size_t i = 0; i < n; ++i) agents[i].records = std::move(records[i]);

    net.trust.local = local_trust_matrix(agents);
    if (cfg.trust_mode == TrustMode::Global) {
      auto fixed = global_trust_fixed_point(net.trust.local, graph, cfg.global_trust);
      net.trust.global = std::move(fixed.trust);
      report.global_trust_iterations = fixed.iterations;
      report.global_trust_converged = fixed.converged;
    } else {
      net.trust.global = initial_global_trust(net.trust.local);
    }
  }

  const double eps = cfg.epsilon(k);
  std::vector<ParamVector> new_params(n), new_messages(n);
  std::vector<CoefficientRow> rows(n);
  detail::for_each_agent(n, env.threads, k, ids, [&](std::size_t i) {
    const auto& me = agents[i];
    auto nbrs = graph.neighbors(static_cast<NodeId>(i));
    std::map<NodeId, ParamVector> received;
    std::vector<double> sizes, trust;
    for (NodeId j : nbrs) {
      received.emplace(j, agents[j].message);
      sizes.push_back(static_cast<double>(agents[j].partition.size()));
      double t = 1.0;
      if (trusted)
        t = detail::trust_value(cfg, cfg.trust_mode == TrustMode::Global ? net.trust.global(i, j)
                                                                         : net.trust.local(i, j));
      trust.push_back(t);
    }
    rows[i].owner = static_cast<NodeId>(i);
    rows[i].sources.assign(nbrs.begin(), nbrs.end());

    // Adversaries keep a fused (untrained) model for their own evaluations
    // but broadcast a fabricated message.
    const bool adversary = me.behavior == Behavior::Adversary;
    const ParamVector& start = adversary ? me.params : me.message;
    ParamVector psi = start;
    if (!received.empty()) {
      rows[i].values = aggregation_coefficients(sizes, trust);
      psi = consensus_fuse(me.params, start, received, rows[i].values, eps);
    }
    std::vector<ParamVector> heard;
    for (auto& [j, m] : received) heard.push_back(m);
    if (adversary) {
      new_params[i] = std::move(psi);
      new_messages[i] = detail::produce_message(me, new_params[i], heard, env, k);
    } else {
      new_params[i] = detail::produce_message(me, psi, heard, env, k);
      new_messages[i] = new_params[i];
    }
  });

  for (std::size_t i = 0; i < n; ++i) {
    auto& me = agents[i];
    for (NodeId j : graph.neighbors(static_cast<NodeId>(i))) me.prev_messages[j] = agents[j].message;
  }
  for (std::size_t i = 0; i < n; ++i) {
    agents[i].params = std::move(new_params[i]);
    agents[i].message = std::move(new_messages[i]);
  }
  report.coefficients = std::move(rows);
  net.round = k;
  return report;
}

inline RoundReport trusted_decentralized_round(Network& net, const CommGraph& graph,
                                               const RoundEnv& env, const RoundConfig& cfg) {
  return decentralized_round(net, graph, env, cfg, true);
}

inline RoundReport consensus_fl_round(Network& net, const CommGraph& graph, const RoundEnv& env,
                                      const RoundConfig& cfg) {
  return decentralized_round(net, graph, env, cfg, false);
}

/// Every agent starts from the same w0; messages for round 1 are w0 as well.
inline std::vector<AgentState> make_agents(const std::vector<Partition>& partitions,
                                           const ParamVector& w0,
                                           std::span<const NodeId> corrupt) {
  std::vector<AgentState> agents;
  for (const auto& p : partitions) {
    AgentState a;
    a.id = p.owner;
    a.partition = p;
    a.params = w0;
    a.message = w0;
    a.behavior = std::binary_search(corrupt.begin(), corrupt.end(), p.owner) ? Behavior::Adversary
                                                                             : Behavior::Benign;
    agents.push_back(std::move(a));
  }
  return agents;
}

inline Network make_network(const std::vector<Partition>& partitions, const ParamVector& w0,
                            std::span<const NodeId> corrupt, const CommGraph& graph) {
  Network net;
  net.agents = make_agents(partitions, w0, corrupt);
  for (auto& a : net.agents)
    for (NodeId j : graph.neighbors(a.id)) a.records.emplace(j, ReputationRecord{});
  net.trust.local = local_trust_matrix(net.agents);
  net.trust.global = initial_global_trust(net.trust.local);
  return net;
}

inline Federation make_federation(const std::vector<Partition>& partitions, const ParamVector& w0,
                                  std::span<const NodeId> corrupt) {
  Federation fed;
  fed.server.global = w0;
  fed.agents = make_agents(partitions, w0, corrupt);
  for (const auto& a : fed.agents) fed.server.records.emplace(a.id, ReputationRecord{});
  return fed;
}

}  // namespace trustfl
