#include "phev/powertrain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace phev {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void VehicleParams::validate() const {
  require(mass > 0 && windward_area > 0 && tyre_radius > 0, "vehicle mass, area and tyre radius must be positive");
  require(drag_coeff > 0 && air_density > 0 && rolling_coeff >= 0 && gravity > 0,
          "vehicle resistance coefficients must be positive");
  require(gear_ev > 0 && gear_parallel > 0 && gear_series > 0, "gear ratios must be positive");
  require(driveline_eff > 0 && driveline_eff <= 1, "driveline_eff must be in (0, 1]");
  require(engine_gen_eff > 0 && engine_gen_eff <= 1, "engine_gen_eff must be in (0, 1]");
  require(aux_power >= 0, "aux_power must be non-negative");
}

// ---------------------------------------------------------------- engine

EngineModel::EngineModel(double max_speed, double idle_speed, double max_torque, Grid2D bsfc)
    : max_speed_(max_speed), idle_speed_(idle_speed), max_torque_(max_torque), bsfc_(std::move(bsfc)) {
  require(max_speed_ > 0 && idle_speed_ > 0 && idle_speed_ < max_speed_, "engine speeds must satisfy 0 < idle < max");
  require(max_torque_ > 0, "engine max torque must be positive");
  for (double v : bsfc_.values()) require(v > 0, "BSFC map must be strictly positive");

  const auto speeds = bsfc_.speeds();
  const auto torques = bsfc_.torques();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    if (speeds[i] >= idle_speed_ - 1e-9 && speeds[i] <= max_speed_ + 1e-9) usable.push_back(i);
  }
  require(!usable.empty(), "BSFC map has no speed nodes between idle and max speed");

  // Economy curve: argmin over speed at each positive torque node, ties to the lower speed.
  std::vector<double> eco_t, eco_w;
  double running = 0.0;
  for (std::size_t j = 0; j < torques.size(); ++j) {
    if (torques[j] <= 0.0) continue;
    std::size_t best = usable.front();
    for (std::size_t i : usable) {
      if (bsfc_.at(i, j) < bsfc_.at(best, j)) best = i;
    }
    running = std::max(running, speeds[best]);
    eco_t.push_back(torques[j]);
    eco_w.push_back(running);
  }
  require(!eco_t.empty(), "BSFC map has no positive torque nodes");
  if (eco_t.size() == 1) {
    eco_t.push_back(eco_t.front() + 1.0);
    eco_w.push_back(eco_w.front());
  }
  economy_ = Curve1D(std::move(eco_t), std::move(eco_w));

  // Optimal-torque curve: argmin over torque at each usable speed node, ties to the lower torque.
  std::vector<double> opt_w, opt_t;
  for (std::size_t i : usable) {
    std::size_t best = 0;
    for (std::size_t j = 0; j < torques.size(); ++j) {
      if (torques[j] <= 0.0) continue;
      if (torques[best] <= 0.0 || bsfc_.at(i, j) < bsfc_.at(i, best)) best = j;
    }
    opt_w.push_back(speeds[i]);
    opt_t.push_back(std::min(torques[best], max_torque_));
  }
  if (opt_w.size() == 1) {
    opt_w.push_back(opt_w.front() + 1.0);
    opt_t.push_back(opt_t.front());
  }
  optimal_torque_ = Curve1D(std::move(opt_w), std::move(opt_t));
}

double EngineModel::analytic_bsfc(double speed, double torque, double max_speed, double max_torque) {
  const double ds = speed / max_speed - 0.55;
  const double dt = torque / max_torque - 0.70;
  return 220.0 * (1.0 + 0.35 * (ds * ds + dt * dt) * 4.0);
}

EngineModel EngineModel::defaults() {
  const double max_speed = rpm_to_rad_s(6000.0);
  const double idle = rpm_to_rad_s(1000.0);
  const double max_torque = 120.0;
  // 50 rpm x 1 N.m nodes; 3300 rpm and 84 N.m (the analytic optimum) are on the grid.
  std::vector<double> speeds;
  for (int rpm = 1000; rpm <= 6000; rpm += 50) speeds.push_back(rpm_to_rad_s(rpm));
  auto torques = linspace(0.0, max_torque, 121);
  auto grid = sample_grid(std::move(speeds), std::move(torques), [&](double w, double t) {
    return analytic_bsfc(w, t, max_speed, max_torque);
  });
  return EngineModel(max_speed, idle, max_torque, std::move(grid));
}

double EngineModel::economy_speed(double torque) const {
  if (torque <= 0.0) return 0.0;
  return economy_(torque);
}

// ---------------------------------------------------------------- motor

MotorModel::MotorModel(double max_speed, Curve1D torque_limit, Grid2D efficiency)
    : max_speed_(max_speed), torque_limit_(std::move(torque_limit)), efficiency_(std::move(efficiency)) {
  require(max_speed_ > 0, "motor max speed must be positive");
  for (double v : torque_limit_.values()) require(v >= 0, "motor torque limit must be non-negative");
  for (double v : efficiency_.values()) require(v > 0 && v <= 1, "motor efficiency must be in (0, 1]");
}

double MotorModel::analytic_efficiency(double speed, double torque, double max_speed, double max_torque) {
  const double ds = speed / max_speed - 0.45;
  const double dt = std::abs(torque) / max_torque - 0.50;
  return std::clamp(0.93 - 0.25 * (ds * ds + dt * dt) * 2.0, 0.70, 0.95);
}

MotorModel MotorModel::defaults() {
  const double max_speed = rpm_to_rad_s(16000.0);
  const double peak = 325.0;
  const double max_power = 145e3;
  const double base = max_power / peak;
  std::vector<double> w{0.0, base};
  std::vector<double> t{peak, peak};
  for (int k = 1; k <= 40; ++k) {
    const double s = base + (max_speed - base) * k / 40.0;
    w.push_back(s);
    t.push_back(max_power / s);
  }
  auto speeds = linspace(0.0, max_speed, 81);
  auto torques = linspace(0.0, peak, 66);
  auto grid = sample_grid(std::move(speeds), std::move(torques), [&](double s, double q) {
    return analytic_efficiency(s, q, max_speed, peak);
  });
  return MotorModel(max_speed, Curve1D(std::move(w), std::move(t)), std::move(grid));
}

double MotorModel::peak_torque() const {
  const auto v = torque_limit_.values();
  return *std::max_element(v.begin(), v.end());
}

double MotorModel::torque_limit(double speed) const {
  if (std::abs(speed) > max_speed_) return 0.0;
  return torque_limit_(std::abs(speed));
}

double MotorModel::efficiency(double speed, double torque) const {
  const double q = efficiency_.torques().front() >= 0.0 ? std::abs(torque) : torque;
  return efficiency_(std::abs(speed), q);
}

// ---------------------------------------------------------------- generator / battery

void GeneratorModel::validate() const {
  require(max_speed > 0 && max_torque > 0, "generator limits must be positive");
  require(efficiency > 0 && efficiency <= 1, "generator efficiency must be in (0, 1]");
}

BatteryModel::BatteryModel(Curve1D ocv, Curve1D resistance, double capacity, double soc_low, double soc_high)
    : ocv_(std::move(ocv)), resistance_(std::move(resistance)), capacity_(capacity), soc_low_(soc_low),
      soc_high_(soc_high) {
  require(capacity_ > 0, "battery capacity must be positive");
  require(0.0 <= soc_low_ && soc_low_ < soc_high_ && soc_high_ <= 1.0, "battery SOC window must satisfy 0 <= low < high <= 1");
  for (double v : ocv_.values()) require(v > 0, "open-circuit voltage must be positive");
  for (double v : resistance_.values()) require(v > 0, "internal resistance must be positive");
}

BatteryModel BatteryModel::defaults() {
  return BatteryModel(Curve1D({0.0, 1.0}, {300.0, 325.0}), Curve1D({0.0, 1.0}, {0.12, 0.08}),
                      26.0 * 3600.0, 0.3, 0.9);
}

Powertrain Powertrain::defaults() {
  return Powertrain{VehicleParams{}, EngineModel::defaults(), MotorModel::defaults(), GeneratorModel{},
                    BatteryModel::defaults()};
}

std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::none: return "none";
    case Violation::engine_speed: return "engine_speed";
    case Violation::generator_limit: return "generator_limit";
    case Violation::motor_torque: return "motor_torque";
    case Violation::battery_power: return "battery_power";
    case Violation::soc_bound: return "soc_bound";
  }
  return "unknown";
}

// ---------------------------------------------------------------- component equations

WheelDemand demand_torque(double speed, double accel, const VehicleParams& p) {
  const double inertia = p.mass * accel;
  const double aero = 0.5 * p.drag_coeff * p.air_density * p.windward_area * speed * speed;
  const double rolling = p.rolling_coeff * p.mass * p.gravity * std::cos(p.road_grade);
  const double grade = p.mass * p.gravity * std::sin(p.road_grade);
  return {(inertia + aero + rolling + grade) * p.tyre_radius, speed / p.tyre_radius};
}

EngineSpeed engine_speed(double engine_torque, double wheel_speed, Clutch clutch, const EngineModel& eng,
                         const VehicleParams& p) {
  if (clutch == Clutch::open) return {eng.economy_speed(engine_torque), true};
  const double w = wheel_speed * p.gear_parallel;
  const bool in_band = w == 0.0 || (w >= eng.idle_speed() && w <= eng.max_speed());
  return {w, engine_torque <= 0.0 || in_band};
}

double fuel_rate(double engine_torque, double engine_speed, const EngineModel& eng) {
  if (engine_torque <= 0.0 || engine_speed <= 0.0) return 0.0;
  const double power = engine_torque * engine_speed;  // W
  return power * eng.bsfc()(engine_speed, engine_torque) / 3.6e6;
}

MotorBrakeSplit split_motor_brake(double demand, double engine_torque, Clutch clutch, double motor_speed,
                                  const MotorModel& mot, const VehicleParams& p, bool regen_allowed) {
  const double ratio = p.gear_ev * p.driveline_eff;
  const double combined = demand - engine_torque * p.gear_parallel * clutch_factor(clutch) * p.driveline_eff;
  const double limit = mot.torque_limit(motor_speed);
  if (combined < 0.0 && !regen_allowed) return {combined, 0.0, combined, true};
  if (combined < -limit * ratio) {
    return {combined, -limit, combined + limit * ratio, true};
  }
  const double motor = combined / ratio;
  if (motor > limit) return {combined, limit, 0.0, false};
  return {combined, motor, 0.0, true};
}

GeneratorState generator_state(double engine_torque, double engine_speed, Clutch clutch,
                               const GeneratorModel& gen, const VehicleParams& p) {
  const double speed = engine_speed / p.gear_series;
  const double torque = engine_torque * p.gear_series * p.engine_gen_eff * (1.0 - clutch_factor(clutch));
  const bool ok = speed <= gen.max_speed && torque <= gen.max_torque;
  return {torque, speed, ok};
}

double bus_power(double motor_torque, double motor_speed, double gen_torque, double gen_speed,
                 const MotorModel& mot, const GeneratorModel& gen, const VehicleParams& p) {
  const double mech = motor_torque * motor_speed;
  double motor_elec = 0.0;
  if (motor_torque > 0.0) {
    motor_elec = mech / mot.efficiency(motor_speed, motor_torque);
  } else if (motor_torque < 0.0) {
    motor_elec = mech * mot.efficiency(motor_speed, motor_torque);
  }
  const double gen_elec = gen_torque * gen_speed * gen.efficiency;
  return motor_elec - gen_elec + p.aux_power;
}

BatteryStep battery_power_step(double power, double soc, const BatteryModel& bat, double dt) {
  const double v = bat.ocv(soc);
  const double r = bat.resistance(soc);
  Violation violation = Violation::none;
  double disc = v * v - 4.0 * r * power;
  if (disc < 0.0) {
    power = v * v / (4.0 * r);
    disc = 0.0;
    violation = Violation::battery_power;
  }
  const double current = (v - std::sqrt(disc)) / (2.0 * r);
  double next = soc - current * dt / bat.capacity();
  if (next < 0.0 || next > 1.0) {
    next = std::clamp(next, 0.0, 1.0);
    if (violation == Violation::none) violation = Violation::soc_bound;
  }
  return {power, current, next, violation};
}

BatteryStep battery_step(double motor_torque, double motor_speed, double gen_torque, double gen_speed, double soc,
                         const MotorModel& mot, const GeneratorModel& gen, const BatteryModel& bat,
                         const VehicleParams& p, double dt) {
  const double power = bus_power(motor_torque, motor_speed, gen_torque, gen_speed, mot, gen, p);
  return battery_power_step(power, soc, bat, dt);
}

// ---------------------------------------------------------------- composition

MechanicalStep resolve_mechanical(const Powertrain& pt, double speed, double accel, double engine_torque,
                                  Clutch clutch, bool regen_allowed) {
  const auto& p = pt.vehicle;
  MechanicalStep out;
  auto& s = out.partial;
  auto note = [&out](Violation v) {
    if (out.violation == Violation::none) out.violation = v;
  };

  const auto demand = demand_torque(speed, accel, p);
  s.demand_torque = demand.torque;
  s.wheel_speed = demand.speed;
  s.motor_speed = demand.speed * p.gear_ev;
  s.clutch = clutch;

  double torque = std::clamp(engine_torque, 0.0, pt.engine.max_torque());
  auto es = engine_speed(torque, s.wheel_speed, clutch, pt.engine, p);
  if (!es.feasible) {
    note(Violation::engine_speed);
    torque = 0.0;
  }

  auto gs = generator_state(torque, es.speed, clutch, pt.generator, p);
  if (!gs.feasible) {
    note(Violation::generator_limit);
    // Largest torque the generator can absorb; drop to engine-off if even that overspeeds.
    torque = std::min(torque, pt.generator.max_torque / (p.gear_series * p.engine_gen_eff));
    es = engine_speed(torque, s.wheel_speed, clutch, pt.engine, p);
    gs = generator_state(torque, es.speed, clutch, pt.generator, p);
    if (gs.speed > pt.generator.max_speed) {
      torque = 0.0;
      es = engine_speed(torque, s.wheel_speed, clutch, pt.engine, p);
      gs = generator_state(torque, es.speed, clutch, pt.generator, p);
    }
  }
  s.engine_torque = torque;
  s.engine_speed = es.speed;
  s.gen_torque = gs.torque;
  s.gen_speed = gs.speed;
  s.fuel_rate = fuel_rate(torque, es.speed, pt.engine);

  const auto split = split_motor_brake(s.demand_torque, torque, clutch, s.motor_speed, pt.motor, p, regen_allowed);
  if (!split.feasible) note(Violation::motor_torque);
  s.motor_torque = split.motor;
  s.brake_torque = split.brake;

  out.bus_power = bus_power(s.motor_torque, s.motor_speed, s.gen_torque, s.gen_speed, pt.motor, pt.generator, p);
  return out;
}

PowertrainStep finish_step(const MechanicalStep& mech, double soc, const BatteryModel& bat, double dt) {
  PowertrainStep s = mech.partial;
  const auto b = battery_power_step(mech.bus_power, soc, bat, dt);
  s.soc = soc;
  s.battery_power = b.power;
  s.battery_current = b.current;
  s.soc_next = b.soc_next;
  s.violation = mech.violation != Violation::none ? mech.violation : b.violation;
  s.feasible = s.violation == Violation::none;
  return s;
}

PowertrainStep resolve_step(const Powertrain& pt, double speed, double accel, double engine_torque, Clutch clutch,
                            double soc, double dt) {
  const bool regen_allowed = !(soc > pt.battery.soc_high());
  return finish_step(resolve_mechanical(pt, speed, accel, engine_torque, clutch, regen_allowed), soc, pt.battery,
                     dt);
}

double torque_balance_residual(const PowertrainStep& s, const VehicleParams& p) {
  const double engine = s.engine_torque * p.gear_parallel * clutch_factor(s.clutch) * p.driveline_eff;
  const double motor = s.motor_torque * p.gear_ev * p.driveline_eff;
  return std::abs(s.demand_torque - (engine + motor + s.brake_torque));
}

}  // namespace phev
