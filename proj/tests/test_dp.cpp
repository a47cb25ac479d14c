#include <doctest.h>

#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "phev/dp.hpp"

using namespace phev;
using doctest::Approx;

namespace {

const Powertrain& pt() {
  static const Powertrain p = Powertrain::defaults();
  return p;
}

DpConfig small_config() {
  DpConfig cfg;
  cfg.soc_points = 30;
  cfg.torque_points = 25;
  return cfg;
}

}  // namespace

TEST_SUITE("dp") {

TEST_CASE("grids and validation") {
  DpConfig cfg;
  auto s = cfg.soc_grid();
  auto t = cfg.torque_grid();
  CHECK(s.size() == 60);
  CHECK(s.front() == 0.3);
  CHECK(s.back() == 0.9);
  CHECK(t.size() == 120);
  CHECK(t.front() == 0.0);
  CHECK(t.back() == 120.0);
  cfg.soc_points = 1;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("one stage at zero demand picks engine off, clutch open") {
  VehicleParams v;
  v.rolling_coeff = 0.0;
  Powertrain p = pt();
  p.vehicle = v;
  DriveCycle c{"idle", 1.0, {0.0, 0.0}, 1};
  EmsEnv env(p, c);
  auto sol = solve_dp(env, small_config(), 0.6);
  // The floor cell cannot afford the auxiliary load and has to run the engine.
  for (std::size_t i = 1; i < sol.soc_grid.size(); ++i) {
    CHECK(sol.action(0, i).torque_index == 0);
    CHECK(sol.action(0, i).clutch == Clutch::open);
  }
}

TEST_CASE("final stage holds the terminal cost") {
  EmsEnv env(pt(), oracle::mini_cycle());
  auto cfg = small_config();
  cfg.terminal_cost = [](double soc) { return 2.0 * (0.9 - soc); };
  auto sol = solve_dp(env, cfg, 0.5);
  const std::size_t last = sol.stages - 1;
  for (std::size_t i = 0; i < sol.soc_grid.size(); ++i) {
    CHECK(sol.J(last, i) == 2.0 * (0.9 - sol.soc_grid[i]));
  }
}

TEST_CASE("agrees with exhaustive enumeration on the mini cycle") {
  EmsEnv env(pt(), oracle::mini_cycle());
  DpConfig cfg;
  cfg.torque_points = 3;
  for (double soc0 : {0.302, 0.6}) {
    auto sol = solve_dp(env, cfg, soc0);
    const double best = oracle::enumerate_min(env, oracle::dp_actions(cfg), soc0, 0.3, 0.9);
    REQUIRE(std::isfinite(best));
    CAPTURE(soc0);
    CHECK(std::abs(sol.total_cost - best) <= 0.03 * std::abs(best));
  }
}

TEST_CASE("bellman residual and monotonicity") {
  EmsEnv env(pt(), synth_cycle(0));
  auto cfg = small_config();
  auto sol = solve_dp(env, cfg, 0.8);
  Rng rng(5);
  for (int k = 0; k < 40; ++k) {
    const std::size_t t = rng.below(sol.stages - 1);
    const std::size_t i = rng.below(sol.soc_grid.size());
    CHECK(std::abs(bellman_residual(sol, env, cfg, t, i)) <= 1e-9);
  }
  for (std::size_t t = 0; t < sol.stages; ++t) {
    // Flat stretches tie up to rounding in the interpolation weights.
    for (std::size_t i = 1; i < sol.soc_grid.size(); ++i) REQUIRE(sol.J(t, i) <= sol.J(t, i - 1) + 1e-12);
  }
}

TEST_CASE("forward trajectory stays in the SOC window") {
  EmsEnv env(pt(), synth_cycle(0));
  for (double soc0 : {0.3, 0.8}) {
    auto sol = solve_dp(env, small_config(), soc0);
    for (const auto& row : sol.trajectory.trace) {
      CHECK(row.step.soc_next >= 0.3 - 1e-12);
      CHECK(row.step.soc_next <= 0.9);
    }
  }
}

TEST_CASE("result does not depend on the worker count") {
  EmsEnv env(pt(), synth_cycle(0));
  auto cfg = small_config();
  cfg.workers = 1;
  auto a = solve_dp(env, cfg, 0.5);
  cfg.workers = 3;
  auto b = solve_dp(env, cfg, 0.5);
  CHECK(a.cost_to_go == b.cost_to_go);
  CHECK(a.total_cost == b.total_cost);
}

TEST_CASE("cost-to-go dump has one row per stage and grid point") {
  EmsEnv env(pt(), synth_cycle(0));
  auto sol = solve_dp(env, small_config(), 0.8);
  auto path = std::filesystem::temp_directory_path() / "phev_ctg.csv";
  write_cost_to_go_csv(sol, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "stage,soc,cost");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == sol.stages * sol.soc_grid.size());
  CHECK(sol.stages == env.cycle().size());
}

}
