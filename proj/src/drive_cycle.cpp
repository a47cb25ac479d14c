#include "phev/drive_cycle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <fmt/os.h>

#include "phev/grid.hpp"
#include "phev/rng.hpp"

namespace phev {

SpeedUnit parse_speed_unit(const std::string& text) {
  if (text == "kmh" || text == "km/h") return SpeedUnit::kmh;
  if (text == "ms" || text == "m/s") return SpeedUnit::ms;
  throw CycleError(fmt::format("unknown speed unit '{}' (expected kmh or ms)", text));
}

double DriveCycle::accel(std::size_t t) const {
  if (t + 1 >= speeds.size()) return 0.0;
  return (speeds[t + 1] - speeds[t]) / dt;
}

double DriveCycle::max_speed() const {
  return speeds.empty() ? 0.0 : *std::max_element(speeds.begin(), speeds.end());
}

double DriveCycle::distance() const {
  double d = 0.0;
  for (std::size_t t = 0; t + 1 < speeds.size(); ++t) d += 0.5 * (speeds[t] + speeds[t + 1]) * dt;
  return d;
}

void DriveCycle::validate() const {
  if (speeds.size() < 2) throw CycleError(fmt::format("cycle '{}' needs at least two samples", name));
  if (dt <= 0.0) throw CycleError("cycle time step must be positive");
  for (std::size_t t = 0; t < speeds.size(); ++t) {
    if (!(speeds[t] >= 0.0) || !std::isfinite(speeds[t])) {
      throw CycleError(fmt::format("cycle '{}': invalid speed at sample {}", name, t));
    }
    if (t + 1 < speeds.size() && std::abs(accel(t)) > kMaxCycleAccel) {
      throw CycleError(fmt::format("cycle '{}': acceleration {:.3f} m/s^2 at sample {} exceeds {}", name, accel(t), t,
                                   kMaxCycleAccel));
    }
  }
}

DriveCycle load_cycle(const std::filesystem::path& path, SpeedUnit unit) {
  std::ifstream in(path);
  if (!in) throw CycleError(fmt::format("cannot open cycle file {}", path.string()));
  const double scale = unit == SpeedUnit::kmh ? 1.0 / 3.6 : 1.0;
  std::vector<double> ts, vs;
  std::vector<std::size_t> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = detail::split_csv_line(line);
    if (line_no == 1) {
      if (fields.size() == 2 && fields[0] == "t_s") continue;
      throw CycleError(fmt::format("{}: expected header t_s,v", path.string()));
    }
    if (fields.size() != 2) throw CycleError(fmt::format("{}: line {}: expected 2 fields", path.string(), line_no));
    double t = 0.0, v = 0.0;
    try {
      t = detail::parse_double(fields[0], line_no, "time");
      v = detail::parse_double(fields[1], line_no, "speed");
    } catch (const MapFormatError& e) {
      throw CycleError(fmt::format("{}: {}", path.string(), e.what()));
    }
    if (!ts.empty() && !(t > ts.back())) {
      throw CycleError(fmt::format("{}: line {}: time is not strictly increasing", path.string(), line_no));
    }
    if (v < 0.0) throw CycleError(fmt::format("{}: line {}: negative speed", path.string(), line_no));
    v *= scale;
    if (!ts.empty() && std::abs(v - vs.back()) / (t - ts.back()) > kMaxCycleAccel) {
      throw CycleError(fmt::format("{}: line {}: acceleration exceeds {} m/s^2", path.string(), line_no,
                                   kMaxCycleAccel));
    }
    ts.push_back(t);
    vs.push_back(v);
    lines.push_back(line_no);
  }
  if (ts.size() < 2) throw CycleError(fmt::format("{}: need at least two samples", path.string()));

  DriveCycle cycle;
  cycle.name = path.stem().string();
  const auto count = static_cast<std::size_t>(std::floor(ts.back() - ts.front())) + 1;
  cycle.speeds.reserve(count);
  std::size_t j = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = ts.front() + static_cast<double>(k);
    while (j + 2 < ts.size() && ts[j + 1] <= t) ++j;
    const double w = (t - ts[j]) / (ts[j + 1] - ts[j]);
    cycle.speeds.push_back(w <= 0.0 ? vs[j] : w >= 1.0 ? vs[j + 1] : vs[j] + w * (vs[j + 1] - vs[j]));
  }
  cycle.validate();
  return cycle;
}

void save_cycle(const DriveCycle& cycle, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("t_s,v\n");
  for (std::size_t t = 0; t < cycle.size(); ++t) out.print("{},{}\n", static_cast<double>(t) * cycle.dt, cycle.speeds[t]);
}

DriveCycle repeat(const DriveCycle& cycle, int n) {
  if (n < 1) throw CycleError("repeat count must be at least 1");
  DriveCycle out;
  out.name = n == 1 ? cycle.name : fmt::format("{}x{}", cycle.name, n);
  out.dt = cycle.dt;
  out.repeats = cycle.repeats * n;
  out.speeds.reserve(cycle.size() * static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out.speeds.insert(out.speeds.end(), cycle.speeds.begin(), cycle.speeds.end());
  return out;
}

DriveCycle synth_cycle(std::uint64_t seed) {
  Rng rng(mix_seed(seed));
  const std::size_t total = 300;
  const auto stand_start = 7 + static_cast<std::size_t>(rng.below(4));
  const double launch_accel = 0.9 + 0.2 * rng.uniform();
  const double launch_speed = 13.5 + rng.uniform();
  const auto launch_hold = 12 + static_cast<std::size_t>(rng.below(9));
  const double climb_accel = 0.5 + 0.1 * rng.uniform();
  const double cruise_speed = 29.5 + 0.5 * rng.uniform();
  const double brake_decel = 1.8 + 0.4 * rng.uniform();
  const auto stand_end = 6 + static_cast<std::size_t>(rng.below(5));

  DriveCycle c;
  c.name = "synth";
  c.speeds.assign(total, 0.0);
  double v = 0.0;
  std::size_t t = stand_start;
  auto ramp_to = [&](double target, double rate) {
    while (t < total && v < target) {
      v = std::min(target, v + rate);
      c.speeds[t++] = v;
    }
  };
  ramp_to(launch_speed, launch_accel);
  for (std::size_t k = 0; k < launch_hold && t < total; ++k) c.speeds[t++] = v;
  ramp_to(cruise_speed, climb_accel);
  // Cruise until the brake ramp plus the final stand fills the remaining samples.
  const auto brake_len = static_cast<std::size_t>(std::ceil(v / brake_decel));
  while (t + brake_len + stand_end < total) c.speeds[t++] = v;
  while (t < total && v > 0.0) {
    v = std::max(0.0, v - brake_decel);
    c.speeds[t++] = v;
  }
  return c;
}

std::uint64_t cycle_checksum(const DriveCycle& cycle) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : cycle.speeds) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace phev
