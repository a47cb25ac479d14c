#include "phev/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace phev {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const ConfigSection& empty_section() {
  static const ConfigSection empty;
  return empty;
}

}  // namespace

void ConfigSection::set(const std::string& key, std::string value, std::size_t line) {
  if (values_.count(key)) {
    throw ConfigError(fmt::format("line {}: duplicate key '{}' in [{}]", line, key, name_));
  }
  values_[key] = Entry{std::move(value), line};
}

std::optional<std::string> ConfigSection::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  read_.insert(key);
  return it->second.value;
}

double ConfigSection::number(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  read_.insert(key);
  const auto& v = it->second.value;
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("line {}: [{}] {} expects a number, got '{}'", it->second.line, name_, key, v));
  }
  return out;
}

long long ConfigSection::integer(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  read_.insert(key);
  const auto& v = it->second.value;
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("line {}: [{}] {} expects an integer, got '{}'", it->second.line, name_, key, v));
  }
  return out;
}

bool ConfigSection::flag(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  read_.insert(key);
  const auto& v = it->second.value;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("line {}: [{}] {} expects true/false, got '{}'", it->second.line, name_, key, v));
}

std::string ConfigSection::string(const std::string& key, const std::string& fallback) const {
  return text(key).value_or(fallback);
}

void ConfigSection::check_consumed() const {
  for (const auto& [key, entry] : values_) {
    if (!read_.count(key)) {
      throw ConfigError(fmt::format("line {}: unknown key '{}' in [{}]", entry.line, key, name_));
    }
  }
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  std::string current;
  cfg.sections_.emplace(current, ConfigSection(current));
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(fmt::format("{}: line {}: unterminated section header", origin, line_no));
      current = trim(line.substr(1, line.size() - 2));
      cfg.sections_.try_emplace(current, ConfigSection(current));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}: line {}: expected key = value", origin, line_no));
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(fmt::format("{}: line {}: empty key", origin, line_no));
    cfg.sections_.at(current).set(key, trim(line.substr(eq + 1)), line_no);
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  auto cfg = parse(buf.str(), path.string());
  cfg.base_dir_ = path.parent_path();
  return cfg;
}

const ConfigSection& ConfigFile::section(const std::string& name) const {
  auto it = sections_.find(name);
  return it == sections_.end() ? empty_section() : it->second;
}

std::vector<std::string> ConfigFile::section_names() const {
  std::vector<std::string> out;
  for (const auto& [name, s] : sections_) out.push_back(name);
  return out;
}

std::filesystem::path ConfigFile::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
  if (!std::filesystem::exists(p)) throw ConfigError(fmt::format("file not found: {}", p.string()));
  return p;
}

void ConfigFile::check_consumed() const {
  for (const auto& [name, s] : sections_) s.check_consumed();
}

void apply_vehicle_section(const ConfigSection& s, VehicleParams& p) {
  p.mass = s.number("mass", p.mass);
  p.windward_area = s.number("windward_area", p.windward_area);
  p.drag_coeff = s.number("drag_coeff", p.drag_coeff);
  p.air_density = s.number("air_density", p.air_density);
  p.tyre_radius = s.number("tyre_radius", p.tyre_radius);
  p.rolling_coeff = s.number("rolling_coeff", p.rolling_coeff);
  p.gravity = s.number("gravity", p.gravity);
  p.road_grade = s.number("road_grade", p.road_grade);
  p.gear_ev = s.number("gear_ev", p.gear_ev);
  p.gear_parallel = s.number("gear_parallel", p.gear_parallel);
  p.gear_series = s.number("gear_series", p.gear_series);
  p.driveline_eff = s.number("driveline_eff", p.driveline_eff);
  p.engine_gen_eff = s.number("engine_gen_eff", p.engine_gen_eff);
  p.aux_power = s.number("aux_power", p.aux_power);
}

Powertrain load_powertrain(const ConfigFile& cfg) {
  try {
    auto pt = Powertrain::defaults();
    apply_vehicle_section(cfg.section("vehicle"), pt.vehicle);
    pt.vehicle.validate();

    const auto& es = cfg.section("engine");
    if (es.has("bsfc_map") || es.has("max_speed_rpm") || es.has("idle_rpm") || es.has("max_torque")) {
      const double max_speed = rpm_to_rad_s(es.number("max_speed_rpm", 6000.0));
      const double idle = rpm_to_rad_s(es.number("idle_rpm", 1000.0));
      const double max_torque = es.number("max_torque", 120.0);
      auto map = es.has("bsfc_map") ? load_map_csv(cfg.resolve(*es.text("bsfc_map")))
                                    : sample_grid(linspace(idle, max_speed, 101), linspace(0.0, max_torque, 121),
                                                  [&](double w, double t) {
                                                    return EngineModel::analytic_bsfc(w, t, max_speed, max_torque);
                                                  });
      pt.engine = EngineModel(max_speed, idle, max_torque, std::move(map));
    }

    const auto& ms = cfg.section("motor");
    if (ms.has("efficiency_map") || ms.has("torque_limit") || ms.has("max_speed_rpm")) {
      const auto defaults = MotorModel::defaults();
      const double max_speed = rpm_to_rad_s(ms.number("max_speed_rpm", 16000.0));
      auto limit = ms.has("torque_limit") ? load_curve_csv(cfg.resolve(*ms.text("torque_limit")), rpm_to_rad_s(1.0))
                                          : defaults.torque_limit_curve();
      auto eff = ms.has("efficiency_map") ? load_map_csv(cfg.resolve(*ms.text("efficiency_map")))
                                          : defaults.efficiency_map();
      pt.motor = MotorModel(max_speed, std::move(limit), std::move(eff));
    }

    const auto& gs = cfg.section("generator");
    pt.generator.max_speed = rpm_to_rad_s(gs.number("max_speed_rpm", rad_s_to_rpm(pt.generator.max_speed)));
    pt.generator.max_torque = gs.number("max_torque", pt.generator.max_torque);
    pt.generator.efficiency = gs.number("efficiency", pt.generator.efficiency);
    pt.generator.validate();

    const auto& bs = cfg.section("battery");
    auto ocv = bs.has("ocv_curve") ? load_curve_csv(cfg.resolve(*bs.text("ocv_curve"))) : pt.battery.ocv_curve();
    auto res = bs.has("resistance_curve") ? load_curve_csv(cfg.resolve(*bs.text("resistance_curve")))
                                          : pt.battery.resistance_curve();
    pt.battery = BatteryModel(std::move(ocv), std::move(res), bs.number("capacity_ah", 26.0) * 3600.0,
                              bs.number("soc_low", pt.battery.soc_low()), bs.number("soc_high", pt.battery.soc_high()));
    return pt;
  } catch (const MapFormatError& e) {
    throw ConfigError(e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace phev
