#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <vector>

#include "phev/drive_cycle.hpp"
#include "phev/powertrain.hpp"
#include "phev/rng.hpp"

namespace phev {

struct RewardParams {
  double fuel_price = 7.6;       // CNY/L
  double elec_price = 1.0;       // CNY/kWh
  double battery_eff = 0.95;     // grid-to-cell charge path
  double charger_eff = 0.90;
  double penalty_max = 0.1;      // CNY
  double soc_low = 0.3;
  double soc_high = 0.9;
  double dt = 1.0;               // s
  double fuel_density = 725.0;   // g/L

  void validate() const;
};

// Fixed scales for the network input: v / speed, T_d / torque, soc as is.
struct StateScale {
  double speed = 33.3;
  double torque = 2000.0;
};

struct EnvState {
  double v = 0.0;
  double demand_torque = 0.0;
  double soc = 0.0;
  std::size_t t = 0;
};

using Observation = std::array<double, 3>;

Observation normalize(const EnvState& s, const StateScale& scale);

struct HybridAction {
  double engine_torque = 0.0;  // N.m
  Clutch clutch = Clutch::open;
};

// Per-step accounting. reward + cost + engine_penalty + soc_penalty + battery_penalty == 0.
struct StepCost {
  double fuel_cost = 0.0;
  double elec_cost = 0.0;
  double cost = 0.0;             // fuel_cost + elec_cost
  double engine_penalty = 0.0;
  double soc_penalty = 0.0;
  double battery_penalty = 0.0;
  double reward = 0.0;
};

// Linear in the distance outside [soc_low, soc_high]; zero inside and on the bounds.
double soc_penalty(double soc, const RewardParams& rp);
// Operating cost of one resolved step (no penalties), CNY.
double stage_cost(const PowertrainStep& s, const RewardParams& rp);
StepCost step_cost(const PowertrainStep& s, const RewardParams& rp);

struct Transition {
  Observation state{};
  std::array<double, 2> params{};  // continuous parameters for every discrete action, in [-1, 1]
  int discrete = 0;                // index of the executed discrete action (clutch)
  double reward = 0.0;
  Observation next_state{};
  bool done = false;
};

/// Drive-cycle episode: one step per cycle sample except the last.
class EmsEnv {
 public:
  EmsEnv(const Powertrain& pt, DriveCycle cycle, RewardParams rp = {}, StateScale scale = {});

  EnvState reset(double soc);
  // soc ~ U[0.3, 0.8]
  EnvState reset_random(Rng& rng);

  struct StepResult {
    EnvState next;
    PowertrainStep step;
    StepCost cost;
    double accel = 0.0;
    bool done = false;
  };
  StepResult step(const HybridAction& action);

  const EnvState& state() const { return state_; }
  bool done() const { return state_.t + 1 >= cycle_.size(); }
  std::size_t episode_length() const { return cycle_.size() - 1; }
  const DriveCycle& cycle() const { return cycle_; }
  const Powertrain& powertrain() const { return *pt_; }
  const RewardParams& reward_params() const { return rp_; }
  const StateScale& scale() const { return scale_; }
  Observation observe() const { return normalize(state_, scale_); }

  EnvState state_at(std::size_t t, double soc) const;

 private:
  const Powertrain* pt_;
  DriveCycle cycle_;
  RewardParams rp_;
  StateScale scale_;
  EnvState state_;
  bool started_ = false;
};

inline constexpr double kRandomSocLow = 0.3;
inline constexpr double kRandomSocHigh = 0.8;

/// Anything that maps a state to an action. Controllers may keep per-episode
/// state; begin_episode is called before every rollout.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void begin_episode(const EmsEnv& /*env*/) {}
  virtual HybridAction act(const EnvState& s) = 0;
};

struct TraceRow {
  std::size_t t = 0;
  double v = 0.0;
  double accel = 0.0;
  PowertrainStep step;
  StepCost cost;
};

struct RolloutTotals {
  double fuel_l = 0.0;
  double electricity_kwh = 0.0;  // battery terminal energy, positive = discharged
  double cost_cny = 0.0;         // operating cost, penalties excluded
  double reward = 0.0;           // includes penalties
  double engagement_pct = 0.0;
  double soc_final = 0.0;
  double soc_in_bounds_pct = 0.0;  // steps whose resulting soc is inside [soc_low, soc_high]
  std::size_t steps = 0;
  std::size_t violations = 0;
};

struct Rollout {
  std::vector<TraceRow> trace;
  RolloutTotals totals;
  double soc_init = 0.0;
  double dt = 1.0;
};

Rollout rollout(Controller& controller, EmsEnv& env, double soc_init);

RolloutTotals summarize(const std::vector<TraceRow>& trace, const RewardParams& rp);

// Columns: t,v,a,T_d,T_e,k_c,omega_e,T_m,T_g,T_b,P_b,soc,fuel_g,cost_cny,violation
void write_trace_csv(const Rollout& r, const std::filesystem::path& path);
// `t,soc` including the state after the last step.
void write_soc_csv(const Rollout& r, const std::filesystem::path& path);

/// Re-aggregates the totals from a trace file written by write_trace_csv.
struct TraceSums {
  double fuel_l = 0.0;
  double electricity_kwh = 0.0;
  double cost_cny = 0.0;
  double engagement_pct = 0.0;
  std::size_t steps = 0;
};
TraceSums sum_trace_csv(const std::filesystem::path& path, const RewardParams& rp);

}  // namespace phev
