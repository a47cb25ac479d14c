#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "phev/ems_env.hpp"

namespace phev {

struct DpConfig {
  std::size_t soc_points = 60;
  double soc_min = 0.3;
  double soc_max = 0.9;
  std::size_t torque_points = 120;
  double torque_max = 120.0;  // N.m; grid spans [0, torque_max]
  bool allow_engaged = true;  // include the engaged clutch in the action set
  double infeasible_cost = 1e6;
  std::function<double(double)> terminal_cost;  // of final SOC; zero when empty
  unsigned workers = 0;                          // 0 = hardware concurrency

  std::vector<double> soc_grid() const;
  std::vector<double> torque_grid() const;
  void validate() const;
};

struct DpAction {
  int torque_index = -1;  // -1 when no feasible action exists
  Clutch clutch = Clutch::open;
};

/// Backward-induction result. Time index t runs over the cycle samples;
/// cost_to_go(t, i) is the minimal remaining cost from sample t at soc_grid[i],
/// and the last row holds the terminal cost.
struct DpSolution {
  std::vector<double> soc_grid;
  std::vector<double> torque_grid;
  std::size_t stages = 0;             // rows of cost_to_go (= cycle length)
  std::vector<double> cost_to_go;     // stages x soc_points
  std::vector<DpAction> policy;       // (stages - 1) x soc_points
  double infeasible_cost = 1e6;
  // Lowest SOC from which stage t is still feasible, and the cost-to-go there.
  // Interpolation below the first feasible grid cell runs against this point.
  std::vector<double> boundary;
  std::vector<double> boundary_cost;
  Rollout trajectory;
  double total_cost = 0.0;            // operating cost of the forward pass

  double J(std::size_t t, std::size_t i) const { return cost_to_go[t * soc_grid.size() + i]; }
  const DpAction& action(std::size_t t, std::size_t i) const { return policy[t * soc_grid.size() + i]; }
  // Linear interpolation in SOC. Below the feasible boundary: infeasible_cost.
  // Above the grid: the top cell.
  double interpolate(std::size_t t, double soc) const;
};

/// Solves on `env`'s cycle, then runs the forward pass from soc_init.
DpSolution solve_dp(const EmsEnv& env, const DpConfig& cfg, double soc_init);

/// Forward-pass controller: re-minimizes stage cost plus interpolated
/// cost-to-go at the actual (continuous) SOC.
class DpController : public Controller {
 public:
  DpController(const DpSolution& sol, const EmsEnv& env, const DpConfig& cfg);
  HybridAction act(const EnvState& s) override;

 private:
  const DpSolution* sol_;
  const EmsEnv* env_;
  std::vector<HybridAction> actions_;
};

// J_t(soc_i) minus a fresh minimization through resolve_step. Zero by construction.
double bellman_residual(const DpSolution& sol, const EmsEnv& env, const DpConfig& cfg, std::size_t t,
                        std::size_t soc_index);

// `stage,soc,cost`
void write_cost_to_go_csv(const DpSolution& sol, const std::filesystem::path& path);

}  // namespace phev
