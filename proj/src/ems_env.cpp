#include "phev/ems_env.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

#include "phev/grid.hpp"

namespace phev {

void RewardParams::validate() const {
  if (!(fuel_price >= 0 && elec_price >= 0)) throw std::invalid_argument("prices must be non-negative");
  if (!(battery_eff > 0 && battery_eff <= 1 && charger_eff > 0 && charger_eff <= 1)) {
    throw std::invalid_argument("battery_eff and charger_eff must be in (0, 1]");
  }
  if (!(penalty_max >= 0)) throw std::invalid_argument("penalty_max must be non-negative");
  if (!(0 < soc_low && soc_low < soc_high && soc_high < 1)) {
    throw std::invalid_argument("reward SOC band must satisfy 0 < soc_low < soc_high < 1");
  }
  if (!(dt > 0 && fuel_density > 0)) throw std::invalid_argument("dt and fuel_density must be positive");
}

Observation normalize(const EnvState& s, const StateScale& scale) {
  return {s.v / scale.speed, s.demand_torque / scale.torque, s.soc};
}

double soc_penalty(double soc, const RewardParams& rp) {
  if (soc > rp.soc_high) return rp.penalty_max * (soc - rp.soc_high) / (1.0 - rp.soc_high);
  if (soc < rp.soc_low) return rp.penalty_max * (rp.soc_low - soc) / rp.soc_low;
  return 0.0;
}

double stage_cost(const PowertrainStep& s, const RewardParams& rp) {
  const double fuel = rp.fuel_price * s.fuel_rate / rp.fuel_density;
  const double elec = rp.elec_price * s.battery_power / (rp.battery_eff * rp.charger_eff) / 3.6e6;
  return (fuel + elec) * rp.dt;
}

StepCost step_cost(const PowertrainStep& s, const RewardParams& rp) {
  StepCost c;
  c.fuel_cost = rp.fuel_price * s.fuel_rate / rp.fuel_density * rp.dt;
  c.elec_cost = rp.elec_price * s.battery_power / (rp.battery_eff * rp.charger_eff) / 3.6e6 * rp.dt;
  c.cost = stage_cost(s, rp);
  if (s.violation == Violation::engine_speed) c.engine_penalty = rp.penalty_max * rp.dt;
  if (s.violation == Violation::battery_power) c.battery_penalty = rp.penalty_max;
  c.soc_penalty = soc_penalty(s.soc_next, rp);
  c.reward = -(c.cost + c.engine_penalty + c.soc_penalty + c.battery_penalty);
  return c;
}

EmsEnv::EmsEnv(const Powertrain& pt, DriveCycle cycle, RewardParams rp, StateScale scale)
    : pt_(&pt), cycle_(std::move(cycle)), rp_(rp), scale_(scale) {
  cycle_.validate();
  rp_.validate();
  if (rp_.dt != cycle_.dt) throw std::invalid_argument("reward dt must match the cycle time step");
}

EnvState EmsEnv::state_at(std::size_t t, double soc) const {
  const auto d = demand_torque(cycle_.speeds[t], cycle_.accel(t), pt_->vehicle);
  return {cycle_.speeds[t], d.torque, soc, t};
}

EnvState EmsEnv::reset(double soc) {
  if (!(soc >= 0.0 && soc <= 1.0)) throw std::invalid_argument(fmt::format("initial soc {} outside [0, 1]", soc));
  state_ = state_at(0, soc);
  started_ = true;
  return state_;
}

EnvState EmsEnv::reset_random(Rng& rng) { return reset(rng.uniform(kRandomSocLow, kRandomSocHigh)); }

EmsEnv::StepResult EmsEnv::step(const HybridAction& action) {
  if (!started_ || done()) throw std::logic_error("step() called on a finished or unstarted episode");
  StepResult r;
  const std::size_t t = state_.t;
  r.accel = cycle_.accel(t);
  r.step = resolve_step(*pt_, cycle_.speeds[t], r.accel, action.engine_torque, action.clutch, state_.soc, rp_.dt);
  r.cost = step_cost(r.step, rp_);
  state_ = state_at(t + 1, r.step.soc_next);
  r.next = state_;
  r.done = done();
  return r;
}

RolloutTotals summarize(const std::vector<TraceRow>& trace, const RewardParams& rp) {
  RolloutTotals tot;
  std::size_t engaged = 0, in_bounds = 0;
  for (const auto& row : trace) {
    tot.fuel_l += row.step.fuel_rate * rp.dt / rp.fuel_density;
    tot.electricity_kwh += row.step.battery_power * rp.dt / 3.6e6;
    tot.cost_cny += row.cost.cost;
    tot.reward += row.cost.reward;
    if (row.step.clutch == Clutch::engaged) ++engaged;
    if (row.step.soc_next >= rp.soc_low && row.step.soc_next <= rp.soc_high) ++in_bounds;
    if (!row.step.feasible) ++tot.violations;
  }
  tot.steps = trace.size();
  if (!trace.empty()) {
    tot.engagement_pct = 100.0 * static_cast<double>(engaged) / static_cast<double>(trace.size());
    tot.soc_in_bounds_pct = 100.0 * static_cast<double>(in_bounds) / static_cast<double>(trace.size());
    tot.soc_final = trace.back().step.soc_next;
  }
  return tot;
}

Rollout rollout(Controller& controller, EmsEnv& env, double soc_init) {
  Rollout out;
  out.soc_init = soc_init;
  out.dt = env.reward_params().dt;
  env.reset(soc_init);
  controller.begin_episode(env);
  out.trace.reserve(env.episode_length());
  while (!env.done()) {
    const auto s = env.state();
    const auto r = env.step(controller.act(s));
    out.trace.push_back(TraceRow{s.t, s.v, r.accel, r.step, r.cost});
  }
  out.totals = summarize(out.trace, env.reward_params());
  return out;
}

void write_trace_csv(const Rollout& r, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("t,v,a,T_d,T_e,k_c,omega_e,T_m,T_g,T_b,P_b,soc,fuel_g,cost_cny,violation\n");
  for (const auto& row : r.trace) {
    const auto& s = row.step;
    out.print("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", row.t, row.v, row.accel, s.demand_torque,
              s.engine_torque, static_cast<int>(s.clutch), s.engine_speed, s.motor_torque, s.gen_torque,
              s.brake_torque, s.battery_power, s.soc, s.fuel_rate * r.dt, row.cost.cost, to_string(s.violation));
  }
}

void write_soc_csv(const Rollout& r, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("t,soc\n");
  for (const auto& row : r.trace) out.print("{},{}\n", row.t, row.step.soc);
  if (!r.trace.empty()) out.print("{},{}\n", r.trace.back().t + 1, r.trace.back().step.soc_next);
}

TraceSums sum_trace_csv(const std::filesystem::path& path, const RewardParams& rp) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open trace {}", path.string()));
  std::string line;
  std::getline(in, line);
  const auto header = detail::split_csv_line(line);
  auto column = [&](const char* name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(fmt::format("trace {} lacks column {}", path.string(), name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_kc = column("k_c"), c_pb = column("P_b"), c_fuel = column("fuel_g"), c_cost = column("cost_cny");
  TraceSums sums;
  std::size_t engaged = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    sums.fuel_l += detail::parse_double(f[c_fuel], line_no, "fuel_g") / rp.fuel_density;
    sums.electricity_kwh += detail::parse_double(f[c_pb], line_no, "P_b") * rp.dt / 3.6e6;
    sums.cost_cny += detail::parse_double(f[c_cost], line_no, "cost_cny");
    if (f[c_kc] == "1") ++engaged;
    ++sums.steps;
  }
  if (sums.steps) sums.engagement_pct = 100.0 * static_cast<double>(engaged) / static_cast<double>(sums.steps);
  return sums;
}

}  // namespace phev
