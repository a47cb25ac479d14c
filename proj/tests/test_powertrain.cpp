#include <doctest.h>

#include <cmath>

#include "phev/powertrain.hpp"
#include "phev/rng.hpp"

using namespace phev;
using doctest::Approx;

namespace {

const Powertrain& pt() {
  static const Powertrain p = Powertrain::defaults();
  return p;
}

// P = V I - R I^2 solved for the smaller root by bisection on [0, V / 2R].
double current_by_bisection(double v, double r, double p) {
  double lo = p >= 0 ? 0.0 : -1e4, hi = p >= 0 ? v / (2 * r) : 0.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (v * mid - r * mid * mid < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

bool same_step(const PowertrainStep& a, const PowertrainStep& b) {
  return a.demand_torque == b.demand_torque && a.engine_torque == b.engine_torque &&
         a.engine_speed == b.engine_speed && a.motor_torque == b.motor_torque && a.gen_torque == b.gen_torque &&
         a.brake_torque == b.brake_torque && a.battery_power == b.battery_power && a.fuel_rate == b.fuel_rate &&
         a.soc_next == b.soc_next && a.violation == b.violation && a.clutch == b.clutch;
}

}  // namespace

TEST_SUITE("powertrain") {

TEST_CASE("default vehicle constants") {
  VehicleParams p;
  CHECK(p.mass == 1500.0);
  CHECK(p.windward_area == 2.36);
  CHECK(p.drag_coeff == 0.28);
  CHECK(p.tyre_radius == 0.3382);
  CHECK(p.rolling_coeff == 0.012);
  CHECK(p.gear_ev == 10.126);
  CHECK(p.gear_parallel == 2.8);
  CHECK(p.gear_series == 2.07);
  CHECK_NOTHROW(p.validate());
  p.driveline_eff = 1.2;
  CHECK_THROWS(p.validate());
  CHECK(pt().battery.capacity() == 26.0 * 3600.0);
}

TEST_CASE("demand torque at standstill is rolling resistance") {
  VehicleParams p;
  auto d = demand_torque(0.0, 0.0, p);
  CHECK(d.torque == Approx(0.012 * 1500 * 9.81 * 0.3382).epsilon(1e-12));
  CHECK(d.torque == Approx(59.72).epsilon(1e-4));
  CHECK(d.speed == 0.0);
  p.rolling_coeff = 0.0;
  CHECK(demand_torque(0.0, 0.0, p).torque == 0.0);
}

TEST_CASE("demand torque term by term") {
  VehicleParams p;
  const double inertia = 1500.0 * 1.0;                    // 1500 N
  const double aero = 0.5 * 0.28 * 1.206 * 2.36 * 400.0;  // 159.37 N
  const double roll = 0.012 * 1500.0 * 9.81;              // 176.58 N
  auto d = demand_torque(20.0, 1.0, p);
  CHECK(d.torque == Approx((inertia + aero + roll) * 0.3382).epsilon(1e-12));
  CHECK(d.speed == Approx(59.14).epsilon(1e-3));
}

TEST_CASE("engine speed") {
  const auto& e = pt().engine;
  VehicleParams p;
  CHECK(engine_speed(0.0, 50.0, Clutch::open, e, p).speed == 0.0);
  auto engaged = engine_speed(40.0, 100.0, Clutch::engaged, e, p);
  CHECK(engaged.speed == Approx(280.0));
  CHECK(engaged.feasible);

  // Economy speed at 60 N.m is the BSFC argmin over usable speeds at that torque.
  const auto& g = e.bsfc();
  std::size_t j = 0;
  while (g.torques()[j] != 60.0) ++j;
  double best_w = 0, best_b = 1e300;
  for (std::size_t i = 0; i < g.speeds().size(); ++i) {
    const double w = g.speeds()[i];
    if (w < e.idle_speed() - 1e-9 || w > e.max_speed() + 1e-9) continue;
    if (g.at(i, j) < best_b) best_b = g.at(i, j), best_w = w;
  }
  CHECK(engine_speed(60.0, 0.0, Clutch::open, e, p).speed == Approx(best_w).epsilon(1e-12));
}

TEST_CASE("economy curve equals the grid argmin at every torque node") {
  const auto& e = pt().engine;
  const auto& g = e.bsfc();
  double prev = 0.0;
  CHECK(e.economy_speed(0.0) == 0.0);
  for (std::size_t j = 0; j < g.torques().size(); ++j) {
    const double t = g.torques()[j];
    if (t <= 0) continue;
    double best_w = 0, best_b = 1e300;
    for (std::size_t i = 0; i < g.speeds().size(); ++i) {
      if (g.at(i, j) < best_b) best_b = g.at(i, j), best_w = g.speeds()[i];
    }
    // The analytic map's argmin is the same speed at every torque, so no running max kicks in.
    CHECK(e.economy_speed(t) == Approx(best_w).epsilon(1e-12));
    CHECK(e.economy_speed(t) >= prev);
    prev = e.economy_speed(t);
  }
}

TEST_CASE("fuel rate") {
  const auto& e = pt().engine;
  CHECK(fuel_rate(0.0, 300.0, e) == 0.0);
  CHECK(fuel_rate(50.0, 0.0, e) == 0.0);
  const double w = rpm_to_rad_s(2500.0);
  const double ds = 2500.0 / 6000.0 - 0.55, dt = 85.0 / 120.0 - 0.70;
  const double be = 220.0 * (1.0 + 1.4 * (ds * ds + dt * dt));
  CHECK(fuel_rate(85.0, w, e) == Approx(85.0 * w * be / 3.6e6).epsilon(1e-9));
}

TEST_CASE("fuel rate is linear in power for a fixed BSFC") {
  Grid2D flat({100.0, 700.0}, {0.0, 120.0}, {250.0, 250.0, 250.0, 250.0});
  EngineModel e(700.0, 100.0, 120.0, flat);
  CHECK(fuel_rate(80.0, 300.0, e) == Approx(2.0 * fuel_rate(40.0, 300.0, e)).epsilon(1e-14));
}

TEST_CASE("motor and brake split") {
  const auto& m = pt().motor;
  VehicleParams p;
  const double ws = 500.0;
  const double te = 50.0;
  auto exact = split_motor_brake(te * p.gear_parallel * p.driveline_eff, te, Clutch::engaged, ws, m, p);
  CHECK(exact.motor == Approx(0.0).epsilon(1e-12));
  CHECK(exact.brake == 0.0);

  auto open = split_motor_brake(400.0, 90.0, Clutch::open, ws, m, p);
  CHECK(open.motor == Approx(400.0 / (p.gear_ev * p.driveline_eff)));

  const double limit = m.torque_limit(ws);
  auto hard = split_motor_brake(-5000.0, 0.0, Clutch::open, ws, m, p);
  CHECK(hard.motor == -limit);
  CHECK(hard.brake < 0.0);
  CHECK(std::abs(-5000.0 - (hard.motor * p.gear_ev * p.driveline_eff + hard.brake)) <= 1e-6);

  auto over = split_motor_brake(9000.0, 0.0, Clutch::open, ws, m, p);
  CHECK_FALSE(over.feasible);
  CHECK(over.motor == limit);
}

TEST_CASE("motor torque limit") {
  const auto& m = pt().motor;
  CHECK(m.peak_torque() == 325.0);
  CHECK(m.torque_limit(100.0) == 325.0);
  const double w = rpm_to_rad_s(12000.0);
  CHECK(m.torque_limit(w) == Approx(145e3 / w).epsilon(1e-3));
  CHECK(m.torque_limit(rpm_to_rad_s(17000.0)) == 0.0);
}

TEST_CASE("generator state") {
  VehicleParams p;
  GeneratorModel g;
  CHECK(generator_state(50.0, 300.0, Clutch::engaged, g, p).torque == 0.0);
  auto off = generator_state(0.0, 0.0, Clutch::open, g, p);
  CHECK(off.torque == 0.0);
  CHECK(off.speed == 0.0);
  auto on = generator_state(50.0, 300.0, Clutch::open, g, p);
  CHECK(on.torque == Approx(50.0 * 2.07 * 0.97));
  CHECK(on.speed == Approx(300.0 / 2.07));
  CHECK(on.feasible);
  CHECK_FALSE(generator_state(120.0, 300.0, Clutch::open, g, p).feasible);
}

TEST_CASE("battery current matches a bisection root") {
  BatteryModel bat(Curve1D({0.0, 1.0}, {320.0, 320.0}), Curve1D({0.0, 1.0}, {0.1, 0.1}), 26 * 3600.0, 0.3, 0.9);
  auto b = battery_power_step(10e3, 0.5, bat, 1.0);
  CHECK(b.current == Approx(current_by_bisection(320.0, 0.1, 10e3)).epsilon(1e-9));
  CHECK(b.soc_next == Approx(0.5 - b.current / (26 * 3600.0)).epsilon(1e-14));
  auto zero = battery_power_step(0.0, 0.5, bat, 1.0);
  CHECK(zero.current == 0.0);
  CHECK(zero.soc_next == 0.5);
  auto over = battery_power_step(1e6, 0.5, bat, 1.0);
  CHECK(over.violation == Violation::battery_power);
  CHECK(over.power == Approx(320.0 * 320.0 / 0.4));
  CHECK(battery_power_step(1e5, 0.0005, bat, 1.0).violation == Violation::soc_bound);
}

TEST_CASE("regeneration with generation charges the battery") {
  const auto& P = pt();
  auto b = battery_step(-100.0, 300.0, 80.0, 200.0, 0.5, P.motor, P.generator, P.battery, P.vehicle, 1.0);
  CHECK(b.soc_next > 0.5);
}

TEST_CASE("motor efficiency direction at every map node") {
  const auto& P = pt();
  const auto& g = P.motor.efficiency_map();
  for (double w : g.speeds()) {
    if (w <= 0) continue;
    for (double t : g.torques()) {
      if (t <= 0) continue;
      const double drive = bus_power(t, w, 0, 0, P.motor, P.generator, P.vehicle) - P.vehicle.aux_power;
      const double regen = bus_power(-t, w, 0, 0, P.motor, P.generator, P.vehicle) - P.vehicle.aux_power;
      CHECK(drive > t * w);
      CHECK(-regen < t * w);
    }
  }
}

TEST_CASE("small-power soc change is antisymmetric") {
  const auto& bat = pt().battery;
  for (double p : {100.0, 500.0, 1000.0}) {
    const double up = battery_power_step(p, 0.6, bat, 1.0).soc_next - 0.6;
    const double down = battery_power_step(-p, 0.6, bat, 1.0).soc_next - 0.6;
    CHECK(std::abs(up + down) <= 0.01 * std::abs(up));
  }
}

TEST_CASE("resolve step at standstill drains auxiliaries only") {
  const auto& P = pt();
  auto s = resolve_step(P, 0.0, 0.0, 0.0, Clutch::open, 0.5, 1.0);
  CHECK(s.feasible);
  CHECK(s.fuel_rate == 0.0);
  CHECK(s.battery_power == Approx(300.0));
  const double v = 300.0 + 25.0 * 0.5, r = 0.12 - 0.04 * 0.5;
  const double i = (v - std::sqrt(v * v - 4 * r * 300.0)) / (2 * r);
  CHECK(s.soc_next == Approx(0.5 - i / (26 * 3600.0)).epsilon(1e-14));
  CHECK(s.soc_next < 0.5);
}

TEST_CASE("clutch engaged below idle is an engine speed violation") {
  auto s = resolve_step(pt(), 2.0, 0.0, 40.0, Clutch::engaged, 0.5, 1.0);
  CHECK_FALSE(s.feasible);
  CHECK(s.violation == Violation::engine_speed);
  CHECK(s.engine_torque == 0.0);
}

TEST_CASE("regeneration refused above the SOC ceiling") {
  auto s = resolve_step(pt(), 15.0, -1.5, 0.0, Clutch::open, 0.92, 1.0);
  CHECK(s.motor_torque == 0.0);
  CHECK(s.brake_torque == Approx(s.demand_torque));
  CHECK(torque_balance_residual(s, pt().vehicle) <= 1e-9);
}

TEST_CASE("generator overload clamps engine torque") {
  auto s = resolve_step(pt(), 10.0, 0.0, 120.0, Clutch::open, 0.5, 1.0);
  CHECK(s.violation == Violation::generator_limit);
  CHECK(s.gen_torque <= pt().generator.max_torque + 1e-9);
}

TEST_CASE("torque balance and purity over random samples") {
  Rng rng(7);
  const auto& P = pt();
  for (int k = 0; k < 20000; ++k) {
    const double v = rng.uniform(0.0, 35.0), a = rng.uniform(-3.0, 3.0);
    const double te = rng.uniform(0.0, 120.0), soc = rng.uniform(0.0, 1.0);
    const Clutch c = rng.below(2) ? Clutch::engaged : Clutch::open;
    auto s = resolve_step(P, v, a, te, c, soc, 1.0);
    if (s.feasible) REQUIRE(torque_balance_residual(s, P.vehicle) <= 1e-6);
    if (k % 1000 == 0) {
      auto again = resolve_step(P, v, a, te, c, soc, 1.0);
      CHECK(same_step(again, s));
    }
  }
}

TEST_CASE("violation names") {
  CHECK(to_string(Violation::none) == "none");
  CHECK(to_string(Violation::battery_power) == "battery_power");
}

}
