#include "phev/dp.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>

#include <fmt/os.h>

#include "phev/grid.hpp"

namespace phev {

namespace {

std::vector<HybridAction> action_set(const DpConfig& cfg) {
  std::vector<HybridAction> out;
  for (double t : cfg.torque_grid()) {
    out.push_back({t, Clutch::open});
    if (cfg.allow_engaged) out.push_back({t, Clutch::engaged});
  }
  return out;
}

struct Candidate {
  double value;
  std::size_t index;
};

// Minimum over the action set of stage cost + J_{t+1}(soc'); ties keep the
// earliest action (lowest torque, then open clutch).
template <typename StepFn>
Candidate minimize(const DpSolution& sol, std::size_t t, double soc_min, std::size_t count, const RewardParams& rp,
                   StepFn&& step_for) {
  Candidate best{sol.infeasible_cost, count};
  for (std::size_t a = 0; a < count; ++a) {
    const PowertrainStep s = step_for(a);
    if (!s.feasible || s.soc_next < soc_min) continue;
    const double v = std::min(stage_cost(s, rp) + sol.interpolate(t + 1, s.soc_next), sol.infeasible_cost);
    if (v < best.value) best = {v, a};
  }
  return best;
}

}  // namespace

std::vector<double> DpConfig::soc_grid() const { return linspace(soc_min, soc_max, soc_points); }
std::vector<double> DpConfig::torque_grid() const { return linspace(0.0, torque_max, torque_points); }

void DpConfig::validate() const {
  if (soc_points < 2 || torque_points < 2) throw std::invalid_argument("DP grids need at least two points");
  if (!(0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0)) {
    throw std::invalid_argument("DP SOC range must satisfy 0 <= soc_min < soc_max <= 1");
  }
  if (!(torque_max > 0.0)) throw std::invalid_argument("DP torque_max must be positive");
  if (!(infeasible_cost > 0.0)) throw std::invalid_argument("DP infeasible_cost must be positive");
}

double DpSolution::interpolate(std::size_t t, double soc) const {
  const std::size_t n = soc_grid.size();
  const double floor = boundary.empty() ? soc_grid.front() : boundary[t];
  if (soc < floor || soc < soc_grid.front()) return infeasible_cost;
  if (soc >= soc_grid.back()) return J(t, n - 1);
  auto it = std::upper_bound(soc_grid.begin(), soc_grid.end(), soc);
  const auto i = static_cast<std::size_t>(it - soc_grid.begin()) - 1;
  double x0 = soc_grid[i];
  double j0 = J(t, i);
  if (x0 < floor) {
    // The lower cell is infeasible; blend with the boundary point instead.
    x0 = floor;
    j0 = boundary_cost[t];
  }
  const double span = soc_grid[i + 1] - x0;
  if (span <= 0.0) return J(t, i + 1);
  const double w = (soc - x0) / span;
  return (1.0 - w) * j0 + w * J(t, i + 1);
}

DpSolution solve_dp(const EmsEnv& env, const DpConfig& cfg, double soc_init) {
  cfg.validate();
  const auto& pt = env.powertrain();
  const auto& cycle = env.cycle();
  const auto& rp = env.reward_params();
  const auto actions = action_set(cfg);

  DpSolution sol;
  sol.soc_grid = cfg.soc_grid();
  sol.torque_grid = cfg.torque_grid();
  sol.infeasible_cost = cfg.infeasible_cost;
  sol.stages = cycle.size();
  const std::size_t n = sol.soc_grid.size();
  sol.cost_to_go.assign(sol.stages * n, 0.0);
  sol.policy.assign((sol.stages - 1) * n, DpAction{});
  for (std::size_t i = 0; i < n; ++i) {
    sol.cost_to_go[(sol.stages - 1) * n + i] = cfg.terminal_cost ? cfg.terminal_cost(sol.soc_grid[i]) : 0.0;
  }
  sol.boundary.assign(sol.stages, cfg.soc_min);
  sol.boundary_cost.assign(sol.stages, cfg.infeasible_cost);
  sol.boundary_cost.back() = cfg.terminal_cost ? cfg.terminal_cost(cfg.soc_min) : 0.0;

  unsigned workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(n));
  std::vector<MechanicalStep> mech(actions.size());

  for (std::size_t t = sol.stages - 1; t-- > 0;) {
    const double v = cycle.speeds[t];
    const double a = cycle.accel(t);
    for (std::size_t k = 0; k < actions.size(); ++k) {
      mech[k] = resolve_mechanical(pt, v, a, actions[k].engine_torque, actions[k].clutch, true);
    }
    auto step_at = [&](std::size_t k, double soc) {
      return soc > pt.battery.soc_high()
                 ? resolve_step(pt, v, a, actions[k].engine_torque, actions[k].clutch, soc, rp.dt)
                 : finish_step(mech[k], soc, pt.battery, rp.dt);
    };
    // Feasible boundary: the lowest SOC from which some action lands at or
    // above the next stage's boundary. soc_next grows with soc, so bisect per action.
    const double next_floor = sol.boundary[t + 1];
    auto reaches = [&](std::size_t k, double soc) {
      const auto s = step_at(k, soc);
      return s.feasible && s.soc_next >= next_floor;
    };
    double floor = cfg.soc_max + 1.0;
    for (std::size_t k = 0; k < actions.size(); ++k) {
      if (!reaches(k, cfg.soc_max)) continue;
      if (reaches(k, cfg.soc_min)) {
        floor = cfg.soc_min;
        break;
      }
      double lo = cfg.soc_min, hi = cfg.soc_max;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (reaches(k, mid) ? hi : lo) = mid;
      }
      floor = std::min(floor, hi);
    }
    sol.boundary[t] = floor;
    if (floor <= cfg.soc_max) {
      sol.boundary_cost[t] =
          minimize(sol, t, cfg.soc_min, actions.size(), rp, [&](std::size_t k) { return step_at(k, floor); }).value;
    }

    auto solve_cells = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const double soc = sol.soc_grid[i];
        const auto best =
            minimize(sol, t, cfg.soc_min, actions.size(), rp, [&](std::size_t k) { return step_at(k, soc); });
        sol.cost_to_go[t * n + i] = best.value;
        if (best.index < actions.size()) {
          const auto& act = actions[best.index];
          sol.policy[t * n + i] = {static_cast<int>(cfg.allow_engaged ? best.index / 2 : best.index), act.clutch};
        }
      }
    };
    if (workers <= 1) {
      solve_cells(0, n);
    } else {
      std::vector<std::thread> pool;
      const std::size_t chunk = (n + workers - 1) / workers;
      for (std::size_t lo = 0; lo < n; lo += chunk) pool.emplace_back(solve_cells, lo, std::min(n, lo + chunk));
      for (auto& th : pool) th.join();
    }
  }

  EmsEnv sim(pt, cycle, rp, env.scale());
  DpController ctl(sol, sim, cfg);
  sol.trajectory = rollout(ctl, sim, soc_init);
  sol.total_cost = sol.trajectory.totals.cost_cny;
  return sol;
}

DpController::DpController(const DpSolution& sol, const EmsEnv& env, const DpConfig& cfg)
    : sol_(&sol), env_(&env), actions_(action_set(cfg)) {}

HybridAction DpController::act(const EnvState& s) {
  const auto& pt = env_->powertrain();
  const auto& cycle = env_->cycle();
  const auto& rp = env_->reward_params();
  const double v = cycle.speeds[s.t];
  const double a = cycle.accel(s.t);
  const auto best = minimize(*sol_, s.t, sol_->soc_grid.front(), actions_.size(), rp, [&](std::size_t k) {
    return resolve_step(pt, v, a, actions_[k].engine_torque, actions_[k].clutch, s.soc, rp.dt);
  });
  if (best.index < actions_.size()) return actions_[best.index];
  // Below the feasible boundary: recover as fast as possible (highest resulting SOC).
  std::size_t pick = 0;
  double top = -1.0;
  for (std::size_t k = 0; k < actions_.size(); ++k) {
    const auto st = resolve_step(pt, v, a, actions_[k].engine_torque, actions_[k].clutch, s.soc, rp.dt);
    if (st.violation != Violation::none && st.violation != Violation::soc_bound) continue;
    if (st.soc_next > top) {
      top = st.soc_next;
      pick = k;
    }
  }
  return actions_[pick];
}

double bellman_residual(const DpSolution& sol, const EmsEnv& env, const DpConfig& cfg, std::size_t t,
                        std::size_t soc_index) {
  const double soc = sol.soc_grid.at(soc_index);
  if (t + 1 >= sol.stages) {
    return sol.J(t, soc_index) - (cfg.terminal_cost ? cfg.terminal_cost(soc) : 0.0);
  }
  const auto& pt = env.powertrain();
  const auto& rp = env.reward_params();
  const double v = env.cycle().speeds[t];
  const double a = env.cycle().accel(t);
  const auto actions = action_set(cfg);
  const auto best = minimize(sol, t, cfg.soc_min, actions.size(), rp, [&](std::size_t k) {
    return resolve_step(pt, v, a, actions[k].engine_torque, actions[k].clutch, soc, rp.dt);
  });
  return sol.J(t, soc_index) - best.value;
}

void write_cost_to_go_csv(const DpSolution& sol, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("stage,soc,cost\n");
  for (std::size_t t = 0; t < sol.stages; ++t) {
    for (std::size_t i = 0; i < sol.soc_grid.size(); ++i) out.print("{},{},{}\n", t, sol.soc_grid[i], sol.J(t, i));
  }
}

}  // namespace phev
