#pragma once

#include <string_view>

#include "phev/ems_env.hpp"

namespace phev {

enum class RuleMode { ev, series, parallel, engine_direct, regen, mech_brake };

std::string_view to_string(RuleMode m);

struct RuleThresholds {
  double soc_cd_floor = 0.3;    // CD above, CS at or below
  double soc_ceiling = 0.9;     // no regeneration above
  double v_parallel = 60.0 / 3.6;
  double min_torque_margin = 0.10;  // T_e_min: lowest economy-curve torque within this BSFC margin of the best

  void validate() const;
};

struct RuleDecision {
  HybridAction action;
  RuleMode mode = RuleMode::ev;
};

/// Charge-depleting / charge-sustaining rule controller.
///
/// All torque comparisons are made at the wheel: an engine torque T maps to
/// T * i_e * eta_t. In series mode the engine rides the economy curve at the
/// torque whose generated power covers the motor's electrical demand.
class CdcsController : public Controller {
 public:
  explicit CdcsController(const Powertrain& pt, RuleThresholds th = {});

  RuleDecision decide(const EnvState& s) const;
  HybridAction act(const EnvState& s) override { return decide(s).action; }

  // Engine torque on the economy curve whose electrical output covers p_req (W),
  // clamped to [min_torque, series_max_torque].
  double series_engine_setpoint(double p_req) const;
  // Electrical power generated at engine torque t on the economy curve.
  double series_power(double t) const;

  double min_torque() const { return min_torque_; }
  double series_max_torque() const { return series_max_torque_; }
  double best_torque() const { return best_torque_; }
  // Wheel-side torque thresholds; the optimal one depends on vehicle speed v (m/s).
  double optimal_threshold(double v) const;
  double max_threshold() const;
  double min_threshold() const;

 private:
  double wheel_equivalent(double engine_torque) const;
  double series_demand(const EnvState& s) const;

  const Powertrain* pt_;
  RuleThresholds th_;
  double min_torque_ = 0.0;
  double best_torque_ = 0.0;  // minimum-BSFC torque along the economy curve
  double series_max_torque_ = 0.0;
};

}  // namespace phev
