#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "phev/ems_env.hpp"

using namespace phev;
using doctest::Approx;

namespace {

const Powertrain& pt() {
  static const Powertrain p = Powertrain::defaults();
  return p;
}

struct FixedController : Controller {
  HybridAction a;
  explicit FixedController(HybridAction x) : a(x) {}
  HybridAction act(const EnvState&) override { return a; }
};

// Engine on at a fixed torque, clutch open; exercises fuel and generation.
struct Mixed : Controller {
  HybridAction act(const EnvState& s) override {
    if (s.soc < 0.5) return {40.0, Clutch::open};
    return {0.0, Clutch::open};
  }
};

std::filesystem::path out_dir() {
  auto d = std::filesystem::temp_directory_path() / "phev_env_tests";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("ems_env") {

TEST_CASE("normalized observation") {
  EnvState s{16.65, -1000.0, 0.4, 3};
  auto o = normalize(s, StateScale{});
  CHECK(o[0] == Approx(0.5));
  CHECK(o[1] == Approx(-0.5));
  CHECK(o[2] == 0.4);
}

TEST_CASE("fixed resets") {
  EmsEnv env(pt(), synth_cycle(0));
  CHECK(env.reset(0.8).soc == 0.8);
  CHECK(env.reset(0.3).soc == 0.3);
  CHECK(env.state().t == 0);
  CHECK(env.state().v == 0.0);
  CHECK_THROWS(env.reset(1.2));
}

TEST_CASE("randomized resets") {
  EmsEnv env(pt(), synth_cycle(0));
  Rng rng(11);
  double sum = 0, lo = 1, hi = 0;
  for (int k = 0; k < 1000; ++k) {
    const double s = env.reset_random(rng).soc;
    sum += s, lo = std::min(lo, s), hi = std::max(hi, s);
  }
  CHECK(sum / 1000 == Approx(0.55).epsilon(0.03 / 0.55));
  CHECK(lo >= 0.3);
  CHECK(hi <= 0.8);
}

TEST_CASE("standstill reward is the auxiliary electricity cost") {
  EmsEnv env(pt(), synth_cycle(0));
  env.reset(0.6);
  auto r = env.step({0.0, Clutch::open});
  const RewardParams rp;
  CHECK(r.step.battery_power == Approx(300.0));
  CHECK(r.cost.reward == Approx(-1.0 * 300.0 / (0.95 * 0.90) / 3.6e6).epsilon(1e-12));
  CHECK(r.cost.engine_penalty == 0.0);
  CHECK(r.cost.soc_penalty == 0.0);
  CHECK(r.cost.battery_penalty == 0.0);
  (void)rp;
}

TEST_CASE("soc penalty") {
  RewardParams rp;
  CHECK(soc_penalty(0.3, rp) == 0.0);
  CHECK(soc_penalty(0.9, rp) == 0.0);
  CHECK(soc_penalty(0.5, rp) == 0.0);
  CHECK(soc_penalty(0.15, rp) == Approx(0.1 * 0.5));
  CHECK(soc_penalty(0.95, rp) == Approx(0.1 * 0.5));
  CHECK(soc_penalty(0.0, rp) == Approx(0.1));
}

TEST_CASE("engine speed violation is penalized") {
  DriveCycle c{"slow", 1.0, {2.0, 2.0, 2.0}, 1};
  EmsEnv env(pt(), c);
  env.reset(0.6);
  auto r = env.step({50.0, Clutch::engaged});
  CHECK(r.step.violation == Violation::engine_speed);
  CHECK(r.cost.engine_penalty == Approx(0.1));
  CHECK(r.cost.reward <= -0.1);
}

TEST_CASE("reward decomposition is exact") {
  EmsEnv env(pt(), repeat(synth_cycle(0), 2));
  Rng rng(3);
  env.reset(0.35);
  while (!env.done()) {
    auto r = env.step({rng.uniform(0, 120), rng.below(2) ? Clutch::engaged : Clutch::open});
    const auto& c = r.cost;
    CHECK(c.reward + (c.cost + c.engine_penalty + c.soc_penalty + c.battery_penalty) == 0.0);
  }
}

TEST_CASE("electricity-only accounting identity") {
  RewardParams rp;
  rp.fuel_price = 0.0;
  rp.penalty_max = 0.0;
  EmsEnv env(pt(), synth_cycle(0), rp);
  FixedController ev({0.0, Clutch::open});
  auto r = rollout(ev, env, 0.7);
  double energy = 0;
  for (const auto& row : r.trace) energy += row.step.battery_power * rp.dt / 3.6e6;
  CHECK(-r.totals.reward == Approx(energy / (0.95 * 0.9)).epsilon(1e-9));
}

TEST_CASE("all-open engine-off rollout") {
  EmsEnv env(pt(), synth_cycle(0));
  FixedController ev({0.0, Clutch::open});
  auto r = rollout(ev, env, 0.8);
  CHECK(r.totals.fuel_l == 0.0);
  CHECK(r.totals.engagement_pct == 0.0);
  CHECK(r.trace.size() == env.cycle().size() - 1);
  CHECK(r.totals.steps == env.episode_length());
}

TEST_CASE("stepping past the end throws") {
  DriveCycle c{"two", 1.0, {0.0, 0.0}, 1};
  EmsEnv env(pt(), c);
  env.reset(0.5);
  auto r = env.step({});
  CHECK(r.done);
  CHECK_THROWS_AS(env.step({}), std::logic_error);
}

TEST_CASE("trace re-summation matches totals") {
  EmsEnv env(pt(), repeat(synth_cycle(0), 2));
  Mixed ctl;
  auto r = rollout(ctl, env, 0.52);
  REQUIRE(r.totals.fuel_l > 0.0);
  auto path = out_dir() / "trace.csv";
  write_trace_csv(r, path);
  auto sums = sum_trace_csv(path, env.reward_params());
  CHECK(sums.steps == r.totals.steps);
  CHECK(sums.fuel_l == Approx(r.totals.fuel_l).epsilon(1e-9));
  CHECK(sums.electricity_kwh == Approx(r.totals.electricity_kwh).epsilon(1e-9));
  CHECK(sums.cost_cny == Approx(r.totals.cost_cny).epsilon(1e-9));
  CHECK(sums.engagement_pct == Approx(r.totals.engagement_pct));
}

TEST_CASE("same controller, same start, same trace") {
  EmsEnv env(pt(), synth_cycle(0));
  Mixed ctl;
  auto a = rollout(ctl, env, 0.51), b = rollout(ctl, env, 0.51);
  auto pa = out_dir() / "a.csv", pb = out_dir() / "b.csv";
  write_trace_csv(a, pa);
  write_trace_csv(b, pb);
  std::ifstream fa(pa), fb(pb);
  std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
}

}
