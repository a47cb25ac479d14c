#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace phev {

class CycleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SpeedUnit { kmh, ms };

SpeedUnit parse_speed_unit(const std::string& text);

/// Speed trace sampled at a fixed 1 s step.
struct DriveCycle {
  std::string name;
  double dt = 1.0;
  std::vector<double> speeds;  // m/s
  int repeats = 1;

  std::size_t size() const { return speeds.size(); }
  // Forward difference (v[t+1] - v[t]) / dt; 0 at the last sample.
  double accel(std::size_t t) const;
  double max_speed() const;
  double distance() const;  // m, trapezoidal
  void validate() const;
};

// Largest |acceleration| accepted from a file, m/s^2.
inline constexpr double kMaxCycleAccel = 5.0;

/// CSV with header `t_s,v`. Rows are resampled onto a 1 Hz grid starting at
/// the first timestamp by linear interpolation.
DriveCycle load_cycle(const std::filesystem::path& path, SpeedUnit unit);
// Writes `t_s,v` in m/s with shortest round-trip formatting.
void save_cycle(const DriveCycle& cycle, const std::filesystem::path& path);

DriveCycle repeat(const DriveCycle& cycle, int n);

/// Bundled 300 s test profile: stand, accelerate in two stages to a cruise
/// speed below 30 m/s, cruise, brake, stand. The phase lengths and rates are
/// jittered by `seed` using integer-seeded arithmetic only, so the samples are
/// identical on every platform.
DriveCycle synth_cycle(std::uint64_t seed = 0);

// FNV-1a over the little-endian bit patterns of the speed samples.
std::uint64_t cycle_checksum(const DriveCycle& cycle);

}  // namespace phev
