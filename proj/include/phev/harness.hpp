#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "phev/cdcs.hpp"
#include "phev/config.hpp"
#include "phev/dp.hpp"
#include "phev/drive_cycle.hpp"
#include "phev/ems_env.hpp"
#include "phev/pdqn_td3.hpp"

namespace phev {

/// Everything one command needs. Built from a config file, then overridden
/// by command-line flags.
struct ExperimentConfig {
  Powertrain powertrain = Powertrain::defaults();
  RewardParams reward;
  StateScale scale;
  DpConfig dp;
  RuleThresholds rules;
  AgentHyperparams agent;

  std::string cycle = "synth";  // file path or "synth"
  std::uint64_t synth_seed = 0;
  SpeedUnit unit = SpeedUnit::kmh;
  int repeats = 1;
  std::optional<double> soc_init = 0.8;  // empty = drawn from U[0.3, 0.8]
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = "out";

  std::string controller = "cdcs";  // simulate: cdcs | agent | dp
  std::filesystem::path checkpoint;  // agent checkpoint for simulate/compare; resume point for train
  long long train_steps = 170000;
  long long checkpoint_every = 0;

  void validate() const;
};

// Reads [experiment], [reward], [dp], [rules], [agent], [train] and the
// powertrain sections. Unknown keys are errors.
ExperimentConfig load_experiment(const ConfigFile& file);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Parses "random" or a number in [0, 1].
std::optional<double> parse_soc(const std::string& text);

DriveCycle build_cycle(const ExperimentConfig& cfg);
// The configured initial SOC, or a seeded draw from U[0.3, 0.8].
double resolve_soc(const ExperimentConfig& cfg);

struct ControllerResult {
  std::string name;
  RolloutTotals totals;
  double gap_pct = 0.0;  // (cost - cost_dp) / cost_dp * 100
};

struct ComparisonReport {
  double soc_init = 0.0;
  std::string cycle;
  std::vector<ControllerResult> results;  // dp first

  const ControllerResult& find(const std::string& name) const;
};

struct SimulateResult {
  Rollout rollout;
  std::filesystem::path trace;
};

SimulateResult cmd_simulate(const ExperimentConfig& cfg);
DpSolution cmd_dp(const ExperimentConfig& cfg);
std::vector<EpisodeRecord> cmd_train(const ExperimentConfig& cfg);
ComparisonReport cmd_compare(const ExperimentConfig& cfg);
std::string cmd_cycle_info(const ExperimentConfig& cfg);

void write_summary(const RolloutTotals& t, double soc_init, const std::filesystem::path& path);
void write_report(const ComparisonReport& r, const std::filesystem::path& csv, const std::filesystem::path& text);

// Engine-on operating points (`t,speed_rpm,torque_nm,bsfc`) and motor points (`t,speed_rpm,torque_nm,efficiency`).
void write_operating_points(const Rollout& r, const Powertrain& pt, const std::filesystem::path& engine,
                            const std::filesystem::path& motor);

}  // namespace phev
