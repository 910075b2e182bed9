#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trustfl/adversary.hpp"
#include "trustfl/error.hpp"
#include "trustfl/model.hpp"
#include "trustfl/protocols.hpp"
#include "trustfl/sgd.hpp"
#include "trustfl/topology.hpp"

namespace trustfl {

using json = nlohmann::ordered_json;

struct DatasetSpec {
  enum class Kind { Synthetic, Csv };

  Kind kind = Kind::Synthetic;
  std::size_t d_in = 10;
  std::size_t classes = 4;
  std::size_t per_class = 500;
  double spread = 1.0;
  double separation = 3.0;
  std::string path;           // csv only
  double validation_fraction = 0.2;

  bool operator==(const DatasetSpec&) const = default;
};

struct OutputSpec {
  std::string dir = "out";
  std::size_t snapshot_every = 5;  // 0 disables trust snapshots
  std::size_t threads = 1;

  bool operator==(const OutputSpec&) const = default;
};

/// Everything that determines one run.
struct ExperimentConfig {
  TopologySpec topology;
  std::size_t agents = 80;
  ModelSpec model;           // d_in / d_out are filled from the dataset
  double init_scale = 1.0;
  Hyperparams training;
  RoundConfig round;         // carries the protocol variant
  AttackConfig attack{0.0, 1.0, 0};  // seed 0 means the master seed
  DatasetSpec dataset;
  std::size_t rounds = 120;
  std::uint64_t seed = 1;
  OutputSpec output;

  std::uint64_t attack_seed() const { return attack.seed != 0 ? attack.seed : seed; }

  void validate() const {
    require(rounds >= 1, Errc::InvalidConfig, "rounds must be >= 1");
    require(agents >= 2, Errc::InvalidConfig, "need at least two agents");
    require(init_scale >= 0.0, Errc::InvalidConfig, "init_scale must be >= 0");
    require(output.threads >= 1, Errc::InvalidConfig, "threads must be >= 1");
    const auto& d = dataset;
    require(d.validation_fraction >= 0.0 && d.validation_fraction < 1.0, Errc::InvalidConfig,
            "validation_fraction must lie in [0, 1)");
    if (d.kind == DatasetSpec::Kind::Synthetic) {
      require(d.classes >= 2 && d.d_in >= 1, Errc::InvalidConfig,
              "synthetic data needs classes >= 2 and d_in >= 1");
      require(d.spread >= 0.0 && d.separation > 0.0, Errc::InvalidConfig,
              "spread must be >= 0 and separation > 0");
      const std::size_t total = d.classes * d.per_class;
      const auto val = static_cast<std::size_t>(std::llround(d.validation_fraction * total));
      require(total - val >= agents, Errc::InvalidConfig,
              "fewer training samples than agents");
    } else {
      require(!d.path.empty(), Errc::InvalidConfig, "csv dataset needs a path");
    }
    try {
      if (model.architecture == Architecture::Mlp)
        require(model.hidden >= 1, Errc::InvalidArgument, "hidden width must be >= 1");
      training.validate();
      round.validate(agents);
      attack.validate();
      topology.validate(agents);
    } catch (const Error& e) {
      fail(Errc::InvalidConfig, e.detail());
    }
  }

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<Protocol> kProtocols[] = {
    {Protocol::FedAvg, "fedavg"},
    {Protocol::TrustedFedAvg, "trusted-fedavg"},
    {Protocol::Consensus, "consensus"},
    {Protocol::TrustedConsensus, "trusted-consensus"},
};
inline constexpr EnumName<TrustMode> kTrustModes[] = {
    {TrustMode::Local, "local"}, {TrustMode::Global, "global"}, {TrustMode::Pinned, "pinned"}};
inline constexpr EnumName<SelectionWeights> kSelection[] = {
    {SelectionWeights::DataSize, "data-size"}, {SelectionWeights::Uniform, "uniform"}};
inline constexpr EnumName<EvalMethod::Kind> kEval[] = {
    {EvalMethod::Kind::Clustering, "clustering"}, {EvalMethod::Kind::Distance, "distance"}};
inline constexpr EnumName<Schedule::Kind> kSchedules[] = {
    {Schedule::Kind::Constant, "constant"},
    {Schedule::Kind::InverseTime, "inverse-time"},
    {Schedule::Kind::Exponential, "exponential"}};
inline constexpr EnumName<Architecture> kArchitectures[] = {
    {Architecture::LinearSoftmax, "linear-softmax"}, {Architecture::Mlp, "mlp"}};
inline constexpr EnumName<LossKind> kLosses[] = {
    {LossKind::CrossEntropy, "cross-entropy"}, {LossKind::SquaredError, "squared-error"}};
inline constexpr EnumName<TopologySpec::Kind> kTopologies[] = {
    {TopologySpec::Kind::Complete, "complete"},
    {TopologySpec::Kind::Ring, "ring"},
    {TopologySpec::Kind::RandomGeometric, "random-geometric"}};
inline constexpr EnumName<DatasetSpec::Kind> kDatasets[] = {
    {DatasetSpec::Kind::Synthetic, "synthetic"}, {DatasetSpec::Kind::Csv, "csv"}};

template <class E, std::size_t N>
const char* name_of(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <class E, std::size_t N>
E value_of(const EnumName<E> (&table)[N], const std::string& name, const std::string& key) {
  for (const auto& e : table)
    if (name == e.name) return e.value;
  std::string options;
  for (const auto& e : table) options += std::string(options.empty() ? "" : ", ") + e.name;
  fail(Errc::InvalidConfig, key + ": unknown value '" + name + "' (expected one of " + options + ")");
}

/// Strict view of one JSON object: every key must be consumed, and each
/// read checks the JSON type.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(Errc::InvalidConfig, label() + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    auto it = j_.find(key);
    seen_.insert(key);
    if (it == j_.end()) return;
    const std::string where = path_.empty() ? key : path_ + "." + key;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) fail(Errc::InvalidConfig, where + " must be a string");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) fail(Errc::InvalidConfig, where + " must be a number");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_integer() || (!it->is_number_unsigned() && it->template get<long long>() < 0))
          fail(Errc::InvalidConfig, where + " must be a nonnegative integer");
      }
      out = it->template get<T>();
    } catch (const json::exception& e) {
      fail(Errc::InvalidConfig, where + ": " + e.what());
    }
  }

  template <class E, std::size_t N>
  void read_enum(const char* key, const EnumName<E> (&table)[N], E& out) {
    std::string name = name_of(table, out);
    read(key, name);
    out = value_of(table, name, path_.empty() ? key : path_ + "." + key);
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  ObjectReader child(const char* key) { return {j_.at(key), path_.empty() ? key : path_ + "." + key}; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        fail(Errc::InvalidConfig, "unknown key '" + (path_.empty() ? it.key() : path_ + "." + it.key()) + "'");
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_schedule(ObjectReader& parent, const char* key, Schedule& s) {
  if (!parent.has(key)) return;
  auto r = parent.child(key);
  r.read_enum("kind", kSchedules, s.kind);
  r.read("base", s.base);
  r.read("decay", s.decay);
  r.finish();
}

inline json write_schedule(const Schedule& s) {
  return {{"kind", name_of(kSchedules, s.kind)}, {"base", s.base}, {"decay", s.decay}};
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  using namespace detail;
  ExperimentConfig c;
  ObjectReader r(j, "");
  r.read("agents", c.agents);
  r.read("rounds", c.rounds);
  r.read("seed", c.seed);
  if (r.has("topology")) {
    auto t = r.child("topology");
    t.read_enum("kind", kTopologies, c.topology.kind);
    t.read("k", c.topology.k);
    t.read("radius", c.topology.radius);
    t.read("seed", c.topology.seed);
    t.read("max_attempts", c.topology.max_attempts);
    t.finish();
  }
  if (r.has("model")) {
    auto m = r.child("model");
    m.read_enum("architecture", kArchitectures, c.model.architecture);
    m.read_enum("loss", kLosses, c.model.loss);
    m.read("hidden", c.model.hidden);
    m.read("init_scale", c.init_scale);
    m.finish();
  }
  if (r.has("training")) {
    auto t = r.child("training");
    read_schedule(t, "learning_rate", c.training.learning_rate);
    t.read("batch_size", c.training.batch_size);
    t.read("local_passes", c.training.local_passes);
    t.finish();
  }
  if (r.has("protocol")) {
    auto p = r.child("protocol");
    auto& rc = c.round;
    p.read_enum("variant", kProtocols, rc.protocol);
    p.read("selection_fraction", rc.selection_fraction);
    p.read_enum("selection_weights", kSelection, rc.selection_weights);
    read_schedule(p, "epsilon", rc.epsilon);
    p.finish();
  }
  if (r.has("trust")) {
    auto t = r.child("trust");
    auto& rc = c.round;
    t.read_enum("eval", kEval, rc.eval.kind);
    t.read("threshold", rc.eval.threshold);
    t.read("rho1", rc.factors.rho1);
    t.read("rho2", rc.factors.rho2);
    t.read_enum("mode", kTrustModes, rc.trust_mode);
    t.read("pinned_value", rc.pinned_trust);
    t.read("max_iter", rc.global_trust.max_iter);
    t.read("tol", rc.global_trust.tol);
    t.read("relaxation", rc.global_trust.relaxation);
    t.finish();
  }
  if (r.has("attack")) {
    auto a = r.child("attack");
    a.read("corrupt_fraction", c.attack.corrupt_fraction);
    a.read("scale", c.attack.scale);
    a.read("seed", c.attack.seed);
    a.finish();
  }
  if (r.has("dataset")) {
    auto d = r.child("dataset");
    d.read_enum("kind", kDatasets, c.dataset.kind);
    d.read("d_in", c.dataset.d_in);
    d.read("classes", c.dataset.classes);
    d.read("per_class", c.dataset.per_class);
    d.read("spread", c.dataset.spread);
    d.read("separation", c.dataset.separation);
    d.read("path", c.dataset.path);
    d.read("validation_fraction", c.dataset.validation_fraction);
    d.finish();
  }
  if (r.has("output")) {
    auto o = r.child("output");
    o.read("dir", c.output.dir);
    o.read("snapshot_every", c.output.snapshot_every);
    o.read("threads", c.output.threads);
    o.finish();
  }
  r.finish();
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  using namespace detail;
  const auto& rc = c.round;
  json j;
  j["agents"] = c.agents;
  j["rounds"] = c.rounds;
  j["seed"] = c.seed;
  j["topology"] = {{"kind", name_of(kTopologies, c.topology.kind)},
                   {"k", c.topology.k},
                   {"radius", c.topology.radius},
                   {"seed", c.topology.seed},
                   {"max_attempts", c.topology.max_attempts}};
  j["model"] = {{"architecture", name_of(kArchitectures, c.model.architecture)},
                {"loss", name_of(kLosses, c.model.loss)},
                {"hidden", c.model.hidden},
                {"init_scale", c.init_scale}};
  j["training"] = {{"learning_rate", write_schedule(c.training.learning_rate)},
                   {"batch_size", c.training.batch_size},
                   {"local_passes", c.training.local_passes}};
  j["protocol"] = {{"variant", name_of(kProtocols, rc.protocol)},
                   {"selection_fraction", rc.selection_fraction},
                   {"selection_weights", name_of(kSelection, rc.selection_weights)},
                   {"epsilon", write_schedule(rc.epsilon)}};
  j["trust"] = {{"eval", name_of(kEval, rc.eval.kind)},
                {"threshold", rc.eval.threshold},
                {"rho1", rc.factors.rho1},
                {"rho2", rc.factors.rho2},
                {"mode", name_of(kTrustModes, rc.trust_mode)},
                {"pinned_value", rc.pinned_trust},
                {"max_iter", rc.global_trust.max_iter},
                {"tol", rc.global_trust.tol},
                {"relaxation", rc.global_trust.relaxation}};
  j["attack"] = {{"corrupt_fraction", c.attack.corrupt_fraction},
                 {"scale", c.attack.scale},
                 {"seed", c.attack.seed}};
  j["dataset"] = {{"kind", name_of(kDatasets, c.dataset.kind)},
                  {"d_in", c.dataset.d_in},
                  {"classes", c.dataset.classes},
                  {"per_class", c.dataset.per_class},
                  {"spread", c.dataset.spread},
                  {"separation", c.dataset.separation},
                  {"path", c.dataset.path},
                  {"validation_fraction", c.dataset.validation_fraction}};
  j["output"] = {{"dir", c.output.dir},
                 {"snapshot_every", c.output.snapshot_every},
                 {"threads", c.output.threads}};
  return j;
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::InvalidConfig, origin + ": " + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::Io, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_json_text(buf.str(), path);
}

/// Applies "a.b.c=value" to raw config JSON. The value is read as JSON when
/// it parses (numbers, booleans, quoted strings) and as a bare string
/// otherwise, so `protocol.variant=consensus` works unquoted.
inline void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string_view::npos && eq > 0, Errc::InvalidConfig,
          "override '" + std::string(assignment) + "' is not key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    require(!part.empty(), Errc::InvalidConfig, "override key '" + key + "' has an empty segment");
    if (!node->is_object()) fail(Errc::InvalidConfig, "override key '" + key + "' crosses a value");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  json j = read_json_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  auto cfg = config_from_json(j);
  cfg.validate();
  return cfg;
}

}  // namespace trustfl
