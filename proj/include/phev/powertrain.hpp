#pragma once

#include <string_view>

#include "phev/grid.hpp"

namespace phev {

enum class Clutch : int { open = 0, engaged = 1 };

constexpr double clutch_factor(Clutch c) { return c == Clutch::engaged ? 1.0 : 0.0; }

/// Static vehicle constants. Efficiencies, air density and the auxiliary
/// load are typical values for a compact PHEV; all of it can be overridden
/// from a config file.
struct VehicleParams {
  double mass = 1500.0;           // kg
  double windward_area = 2.36;    // m^2
  double drag_coeff = 0.28;
  double air_density = 1.206;     // kg/m^3
  double tyre_radius = 0.3382;    // m
  double rolling_coeff = 0.012;
  double gravity = 9.81;          // m/s^2
  double road_grade = 0.0;        // rad
  double gear_ev = 10.126;        // motor -> wheel
  double gear_parallel = 2.8;     // engine -> wheel, clutch engaged
  double gear_series = 2.07;      // engine -> generator
  double driveline_eff = 0.96;
  double engine_gen_eff = 0.97;
  double aux_power = 300.0;       // W

  void validate() const;
};

/// Engine with a BSFC map (g/kWh over rad/s x N.m).
///
/// Two curves are derived from the map at construction: the economy curve
/// (torque -> speed of minimum BSFC, used whenever the clutch is open) and the
/// optimal-torque curve (speed -> torque of minimum BSFC). Only map speeds
/// inside [idle_speed, max_speed] are considered.
class EngineModel {
 public:
  EngineModel(double max_speed, double idle_speed, double max_torque, Grid2D bsfc);

  // 6000 rpm / 1000 rpm idle / 120 N.m with the analytic default BSFC map.
  static EngineModel defaults();
  // b_e = 220 * (1 + 1.4 * ((w/w_max - 0.55)^2 + (T/T_max - 0.70)^2)) g/kWh.
  static double analytic_bsfc(double speed, double torque, double max_speed, double max_torque);

  double max_speed() const { return max_speed_; }
  double idle_speed() const { return idle_speed_; }
  double max_torque() const { return max_torque_; }
  const Grid2D& bsfc() const { return bsfc_; }
  const Curve1D& economy_curve() const { return economy_; }
  const Curve1D& optimal_torque_curve() const { return optimal_torque_; }

  // Speed on the economy curve; 0 when the engine is off (torque <= 0).
  double economy_speed(double torque) const;
  double optimal_torque(double speed) const { return optimal_torque_(speed); }

 private:
  double max_speed_;
  double idle_speed_;
  double max_torque_;
  Grid2D bsfc_;
  Curve1D economy_;
  Curve1D optimal_torque_;
};

class MotorModel {
 public:
  MotorModel(double max_speed, Curve1D torque_limit, Grid2D efficiency);

  // 16000 rpm, 325 N.m peak, constant power (145 kW) above base speed, analytic efficiency map.
  static MotorModel defaults();
  // clamp(0.93 - 0.5 * ((w/w_max - 0.45)^2 + (|T|/T_max - 0.50)^2), 0.70, 0.95)
  static double analytic_efficiency(double speed, double torque, double max_speed, double max_torque);

  double max_speed() const { return max_speed_; }
  double peak_torque() const;
  const Curve1D& torque_limit_curve() const { return torque_limit_; }
  const Grid2D& efficiency_map() const { return efficiency_; }

  // f(w): largest torque magnitude available at `speed`; zero beyond max_speed.
  double torque_limit(double speed) const;
  // Maps with a non-negative torque axis are looked up by |torque|.
  double efficiency(double speed, double torque) const;

 private:
  double max_speed_;
  Curve1D torque_limit_;
  Grid2D efficiency_;
};

struct GeneratorModel {
  double max_speed = rpm_to_rad_s(13000.0);
  double max_torque = 110.0;
  double efficiency = 0.92;

  void validate() const;
};

class BatteryModel {
 public:
  BatteryModel(Curve1D ocv, Curve1D resistance, double capacity, double soc_low, double soc_high);

  // V_oc = 300 + 25 soc, R_b = 0.12 - 0.04 soc, 26 Ah, SOC window [0.3, 0.9].
  static BatteryModel defaults();

  double ocv(double soc) const { return ocv_(soc); }
  double resistance(double soc) const { return resistance_(soc); }
  double capacity() const { return capacity_; }  // coulombs
  double soc_low() const { return soc_low_; }
  double soc_high() const { return soc_high_; }
  const Curve1D& ocv_curve() const { return ocv_; }
  const Curve1D& resistance_curve() const { return resistance_; }

 private:
  Curve1D ocv_;
  Curve1D resistance_;
  double capacity_;
  double soc_low_;
  double soc_high_;
};

struct Powertrain {
  VehicleParams vehicle;
  EngineModel engine;
  MotorModel motor;
  GeneratorModel generator;
  BatteryModel battery;

  static Powertrain defaults();
};

// Order matters: resolve_step reports the first violation in this order.
enum class Violation : int {
  none = 0,
  engine_speed,
  generator_limit,
  motor_torque,
  battery_power,
  soc_bound,
};

std::string_view to_string(Violation v);

/// Everything resolved for one time step. Brake torque is the signed
/// wheel-side torque that closes the torque balance (<= 0 while braking).
struct PowertrainStep {
  double demand_torque = 0.0;   // N.m at the wheel
  double wheel_speed = 0.0;     // rad/s
  double engine_torque = 0.0;
  double engine_speed = 0.0;
  double motor_torque = 0.0;
  double motor_speed = 0.0;
  double gen_torque = 0.0;
  double gen_speed = 0.0;
  double brake_torque = 0.0;
  Clutch clutch = Clutch::open;
  double battery_power = 0.0;   // W, positive = discharge
  double battery_current = 0.0; // A
  double fuel_rate = 0.0;       // g/s
  double soc = 0.0;
  double soc_next = 0.0;
  bool feasible = true;
  Violation violation = Violation::none;
};

struct WheelDemand {
  double torque;  // N.m
  double speed;   // rad/s
};

struct EngineSpeed {
  double speed;
  bool feasible;
};

struct MotorBrakeSplit {
  double combined;  // motor + brake share of the wheel torque
  double motor;     // motor shaft torque
  double brake;     // wheel-side brake torque, <= 0
  bool feasible;
};

struct GeneratorState {
  double torque;
  double speed;
  bool feasible;
};

struct BatteryStep {
  double power;    // W after clamping
  double current;  // A
  double soc_next;
  Violation violation;
};

WheelDemand demand_torque(double speed, double accel, const VehicleParams& p);

EngineSpeed engine_speed(double engine_torque, double wheel_speed, Clutch clutch,
                         const EngineModel& eng, const VehicleParams& p);

// g/s. Zero when the engine produces no power.
double fuel_rate(double engine_torque, double engine_speed, const EngineModel& eng);

MotorBrakeSplit split_motor_brake(double demand, double engine_torque, Clutch clutch,
                                  double motor_speed, const MotorModel& mot,
                                  const VehicleParams& p, bool regen_allowed = true);

GeneratorState generator_state(double engine_torque, double engine_speed, Clutch clutch,
                               const GeneratorModel& gen, const VehicleParams& p);

// Net electrical power drawn from the battery bus (motor draw - generator
// output + auxiliaries), before any battery clamping.
double bus_power(double motor_torque, double motor_speed, double gen_torque, double gen_speed,
                 const MotorModel& mot, const GeneratorModel& gen, const VehicleParams& p);

// Internal-resistance battery update for a given terminal power.
BatteryStep battery_power_step(double power, double soc, const BatteryModel& bat, double dt);

BatteryStep battery_step(double motor_torque, double motor_speed, double gen_torque,
                         double gen_speed, double soc, const MotorModel& mot,
                         const GeneratorModel& gen, const BatteryModel& bat,
                         const VehicleParams& p, double dt);

/// The SOC-independent part of a step: torques, speeds, fuel, and bus power.
/// resolve_step is exactly finish_step(resolve_mechanical(...)).
struct MechanicalStep {
  PowertrainStep partial;  // battery fields not yet filled
  double bus_power = 0.0;
  Violation violation = Violation::none;
};

MechanicalStep resolve_mechanical(const Powertrain& pt, double speed, double accel,
                                  double engine_torque, Clutch clutch, bool regen_allowed);

PowertrainStep finish_step(const MechanicalStep& mech, double soc, const BatteryModel& bat, double dt);

/// One full powertrain resolution. Never throws for out-of-range actuation:
/// violations are clamped, reported, and the first one (in Violation order)
/// is kept. Regeneration is refused while soc > soc_high; the mechanical
/// brake then takes the full braking torque.
PowertrainStep resolve_step(const Powertrain& pt, double speed, double accel, double engine_torque,
                            Clutch clutch, double soc, double dt);

// |T_d - (T_e i_e k_c eta_t + T_m i_m eta_t + T_b)|
double torque_balance_residual(const PowertrainStep& s, const VehicleParams& p);

}  // namespace phev
