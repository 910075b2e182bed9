// Command-line front end: run, compare, validate.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trustfl/trustfl.hpp"

namespace {

trustfl::RunOptions progress(bool quiet) {
  trustfl::RunOptions opts;
  if (!quiet)
    opts.on_round = [](const trustfl::MetricsRecord& m) {
      std::fprintf(stderr, "round %d loss %s\n", m.round,
                   m.val_loss ? trustfl::format_double(*m.val_loss).c_str() : "diverged");
    };
  return opts;
}

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

trustfl::ExperimentConfig load(const Common& c) {
  auto overrides = c.overrides;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  if (c.out) overrides.push_back("output.dir=" + trustfl::json(*c.out).dump());
  return trustfl::load_config(c.config, overrides);
}

void print_loss(const char* label, const std::optional<double>& v) {
  if (v)
    std::printf("%s %.6g\n", label, *v);
  else
    std::printf("%s diverged\n", label);
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--override", c.overrides, "key=value, e.g. attack.scale=2")
      ->allow_extra_args(false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trust-aware federated learning simulator"};
  app.require_subcommand(1);

  Common run_opts, cmp_opts, val_opts;
  std::string arms;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "run one experiment");
  add_common(run, run_opts);
  run->add_flag("--quiet", quiet, "no per-round progress");

  auto* cmp = app.add_subcommand("compare", "run several protocol arms on shared data");
  add_common(cmp, cmp_opts);
  cmp->add_option("--arms", arms, "comma list of variant[:clean]")->required();
  cmp->add_flag("--quiet", quiet, "no per-round progress");

  auto* val = app.add_subcommand("validate", "parse and check a config");
  val->add_option("--config", val_opts.config, "experiment config (JSON)")->required();
  val->add_option("--override", val_opts.overrides, "key=value")->allow_extra_args(false);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    if (*val) {
      auto cfg = load(val_opts);
      std::cout << trustfl::config_to_json(cfg).dump(2) << '\n';
      std::cerr << "config ok\n";
      return 0;
    }

    if (*run) {
      auto cfg = load(run_opts);
      auto summary = trustfl::run_experiment(cfg, progress(quiet));
      for (const auto& w : summary.warnings) std::cerr << "warning: " << w << '\n';
      print_loss("final_val_loss", summary.final_val_loss);
      std::printf("output %s\n", cfg.output.dir.c_str());
      std::fprintf(stderr, "wall time %.2fs\n", elapsed());
      return 0;
    }

    if (*cmp) {
      auto cfg = load(cmp_opts);
      auto cmp_result = trustfl::compare_arms(cfg, trustfl::parse_arms(arms), progress(quiet));
      for (std::size_t a = 0; a < cmp_result.arms.size(); ++a)
        print_loss(cmp_result.arms[a].label.c_str(), cmp_result.runs[a].final_val_loss);
      std::printf("output %s/comparison.csv\n", cfg.output.dir.c_str());
      std::fprintf(stderr, "wall time %.2fs\n", elapsed());
      return 0;
    }
  } catch (const trustfl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
