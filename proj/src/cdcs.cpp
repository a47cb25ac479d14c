#include "phev/cdcs.hpp"

#include <algorithm>
#include <stdexcept>

namespace phev {

std::string_view to_string(RuleMode m) {
  switch (m) {
    case RuleMode::ev: return "EV";
    case RuleMode::series: return "series";
    case RuleMode::parallel: return "parallel";
    case RuleMode::engine_direct: return "engine_direct";
    case RuleMode::regen: return "regen";
    case RuleMode::mech_brake: return "mech_brake";
  }
  return "unknown";
}

void RuleThresholds::validate() const {
  if (!(0.0 < soc_cd_floor && soc_cd_floor < soc_ceiling && soc_ceiling <= 1.0)) {
    throw std::invalid_argument("rule SOC thresholds must satisfy 0 < floor < ceiling <= 1");
  }
  if (!(v_parallel > 0.0)) throw std::invalid_argument("v_parallel must be positive");
  if (!(min_torque_margin >= 0.0)) throw std::invalid_argument("min_torque_margin must be non-negative");
}

CdcsController::CdcsController(const Powertrain& pt, RuleThresholds th) : pt_(&pt), th_(th) {
  th_.validate();
  const auto& eng = pt.engine;
  // Scan the BSFC map's torque nodes along the economy curve.
  double best = 0.0;
  std::vector<std::pair<double, double>> line;
  for (double t : eng.bsfc().torques()) {
    if (t <= 0.0 || t > eng.max_torque()) continue;
    const double b = eng.bsfc()(eng.economy_speed(t), t);
    line.emplace_back(t, b);
    if (best == 0.0 || b < best) {
      best = b;
      best_torque_ = t;
    }
  }
  if (line.empty()) throw std::invalid_argument("engine map has no positive torque nodes");
  min_torque_ = line.front().first;
  for (const auto& [t, b] : line) {
    if (b <= best * (1.0 + th_.min_torque_margin)) {
      min_torque_ = t;
      break;
    }
  }
  const auto& v = pt.vehicle;
  series_max_torque_ =
      std::min(eng.max_torque(), pt.generator.max_torque / (v.gear_series * v.engine_gen_eff));
  min_torque_ = std::min(min_torque_, series_max_torque_);
}

double CdcsController::wheel_equivalent(double engine_torque) const {
  return engine_torque * pt_->vehicle.gear_parallel * pt_->vehicle.driveline_eff;
}

double CdcsController::optimal_threshold(double v) const {
  if (v >= th_.v_parallel) {
    const double w = v / pt_->vehicle.tyre_radius * pt_->vehicle.gear_parallel;
    return wheel_equivalent(pt_->engine.optimal_torque(w));
  }
  return wheel_equivalent(best_torque_);
}

double CdcsController::max_threshold() const { return wheel_equivalent(pt_->engine.max_torque()); }
double CdcsController::min_threshold() const { return wheel_equivalent(min_torque_); }

double CdcsController::series_power(double t) const {
  const auto& v = pt_->vehicle;
  return t * pt_->engine.economy_speed(t) * v.engine_gen_eff * pt_->generator.efficiency;
}

double CdcsController::series_engine_setpoint(double p_req) const {
  double lo = min_torque_, hi = series_max_torque_;
  if (series_power(lo) >= p_req) return lo;
  if (series_power(hi) <= p_req) return hi;
  for (int k = 0; k < 60; ++k) {
    const double mid = 0.5 * (lo + hi);
    (series_power(mid) < p_req ? lo : hi) = mid;
  }
  return hi;
}

double CdcsController::series_demand(const EnvState& s) const {
  const auto& p = pt_->vehicle;
  const double w_m = s.v / p.tyre_radius * p.gear_ev;
  const double limit = pt_->motor.torque_limit(w_m);
  const double t_m = std::clamp(s.demand_torque / (p.gear_ev * p.driveline_eff), -limit, limit);
  double elec = 0.0;
  if (t_m > 0.0) elec = t_m * w_m / pt_->motor.efficiency(w_m, t_m);
  return std::max(0.0, elec + p.aux_power);
}

RuleDecision CdcsController::decide(const EnvState& s) const {
  const double td = s.demand_torque;
  const auto engine_off = [](RuleMode m) { return RuleDecision{{0.0, Clutch::open}, m}; };
  const auto series = [&] { return RuleDecision{{series_engine_setpoint(series_demand(s)), Clutch::open}, RuleMode::series}; };

  if (td < 0.0) {
    return s.soc > th_.soc_ceiling ? engine_off(RuleMode::mech_brake) : engine_off(RuleMode::regen);
  }

  if (s.soc > th_.soc_cd_floor) {
    if (td > optimal_threshold(s.v)) {
      if (s.v >= th_.v_parallel && td <= max_threshold()) {
        const double w = s.v / pt_->vehicle.tyre_radius * pt_->vehicle.gear_parallel;
        return {{pt_->engine.optimal_torque(w), Clutch::engaged}, RuleMode::parallel};
      }
      return series();
    }
    return engine_off(RuleMode::ev);
  }

  if (td >= min_threshold()) {
    if (s.v > th_.v_parallel) {
      const double t = std::min(td / (pt_->vehicle.gear_parallel * pt_->vehicle.driveline_eff),
                                pt_->engine.max_torque());
      return {{t, Clutch::engaged}, RuleMode::engine_direct};
    }
    return series();
  }
  return series();
}

}  // namespace phev
