#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "phev/harness.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string soc;
  std::string cycle;
  std::optional<int> repeats;
  std::string unit;
  std::string out;
  std::string controller;
  std::string checkpoint;
  std::optional<long long> steps;
};

phev::ExperimentConfig build_config(const Flags& f) {
  const auto file = f.config.empty() ? phev::ConfigFile::parse("") : phev::ConfigFile::load(f.config);
  // Output root: --out, then the config file, then PHEV_EMS_OUT.
  const bool config_sets_out = file.section("experiment").has("out");
  phev::ExperimentConfig cfg = phev::load_experiment(file);
  if (!config_sets_out) {
    if (const char* env = std::getenv("PHEV_EMS_OUT")) cfg.out_dir = env;
  }
  if (f.seed) cfg.seed = f.seed;
  if (!f.soc.empty()) cfg.soc_init = phev::parse_soc(f.soc);
  if (!f.cycle.empty()) cfg.cycle = f.cycle;
  if (f.repeats) cfg.repeats = *f.repeats;
  if (!f.unit.empty()) {
    try {
      cfg.unit = phev::parse_speed_unit(f.unit);
    } catch (const phev::CycleError& e) {
      throw phev::ConfigError(e.what());
    }
  }
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.controller.empty()) cfg.controller = f.controller;
  if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;
  if (f.steps) cfg.train_steps = *f.steps;
  cfg.validate();
  if (cfg.cycle != "synth" && !std::filesystem::exists(cfg.cycle)) {
    throw phev::ConfigError(fmt::format("cycle file not found: {}", cfg.cycle));
  }
  return cfg;
}

void print_totals(const std::string& name, const phev::RolloutTotals& t) {
  fmt::print("{:<8} cost {:.4f} CNY  fuel {:.4f} L  battery {:.4f} kWh  clutch {:.2f}%  final soc {:.4f}\n", name,
             t.cost_cny, t.fuel_l, t.electricity_kwh, t.engagement_pct, t.soc_final);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PHEV energy-management workbench"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--soc", f.soc, "initial SOC in [0,1] or 'random'");
    sub->add_option("--cycle", f.cycle, "cycle CSV path or 'synth'");
    sub->add_option("--repeats", f.repeats, "number of cycle repetitions");
    sub->add_option("--unit", f.unit, "speed unit of the cycle CSV (kmh|ms)");
    sub->add_option("--out", f.out, "output directory (default $PHEV_EMS_OUT or ./out)");
  };

  auto* simulate = app.add_subcommand("simulate", "run one controller over a cycle");
  add_common(simulate);
  simulate->add_option("--controller", f.controller, "cdcs | agent | dp");
  simulate->add_option("--checkpoint", f.checkpoint, "agent checkpoint");

  auto* dp = app.add_subcommand("dp", "solve the DP benchmark");
  add_common(dp);

  auto* train = app.add_subcommand("train", "train the PDQN-TD3 agent");
  add_common(train);
  train->add_option("--steps", f.steps, "environment steps");
  train->add_option("--checkpoint", f.checkpoint, "resume from checkpoint");

  auto* compare = app.add_subcommand("compare", "DP vs agent vs CD-CS report");
  add_common(compare);
  compare->add_option("--checkpoint", f.checkpoint, "agent checkpoint")->required();

  auto* info = app.add_subcommand("cycle-info", "print cycle statistics");
  add_common(info);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto cfg = build_config(f);
    if (simulate->parsed()) {
      const auto res = phev::cmd_simulate(cfg);
      print_totals(cfg.controller, res.rollout.totals);
      fmt::print("trace written to {}\n", res.trace.string());
    } else if (dp->parsed()) {
      const auto sol = phev::cmd_dp(cfg);
      print_totals("dp", sol.trajectory.totals);
      fmt::print("cost-to-go written to {}\n", (cfg.out_dir / "cost_to_go.csv").string());
    } else if (train->parsed()) {
      const auto curve = phev::cmd_train(cfg);
      fmt::print("{} episodes recorded\n", curve.size());
      if (!curve.empty()) fmt::print("last episode return {:.4f}\n", curve.back().return_cny);
      fmt::print("checkpoint written to {}\n", (cfg.out_dir / "agent.json").string());
    } else if (compare->parsed()) {
      const auto report = phev::cmd_compare(cfg);
      for (const auto& r : report.results) {
        print_totals(r.name, r.totals);
      }
      fmt::print("report written to {}\n", (cfg.out_dir / "report.txt").string());
    } else if (info->parsed()) {
      fmt::print("{}", phev::cmd_cycle_info(cfg));
    }
  } catch (const phev::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const phev::MapFormatError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const phev::CycleError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 3;
  }
  return 0;
}
