#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phev {

constexpr double rpm_to_rad_s(double rpm) { return rpm * 0.10471975511965977; }
constexpr double rad_s_to_rpm(double w) { return w / 0.10471975511965977; }

class MapFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Piecewise-linear table over strictly increasing knots. Queries outside
/// the knot range return the end values.
class Curve1D {
 public:
  Curve1D() = default;
  Curve1D(std::vector<double> knots, std::vector<double> values);

  double operator()(double x) const;

  std::span<const double> knots() const { return knots_; }
  std::span<const double> values() const { return values_; }
  bool empty() const { return knots_.empty(); }

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
};

/// Rectangular (speed, torque) grid with bilinear interpolation. Values are
/// stored speed-major: value(i, j) belongs to speeds[i], torques[j]. Queries
/// outside the grid clamp to the boundary.
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(std::vector<double> speeds, std::vector<double> torques, std::vector<double> values);

  double operator()(double speed, double torque) const;

  double at(std::size_t i, std::size_t j) const { return values_[i * torques_.size() + j]; }
  std::span<const double> speeds() const { return speeds_; }
  std::span<const double> torques() const { return torques_; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> speeds_;
  std::vector<double> torques_;
  std::vector<double> values_;
};

// Evenly spaced axis with `count` points including both ends.
std::vector<double> linspace(double lo, double hi, std::size_t count);

Grid2D sample_grid(std::vector<double> speeds, std::vector<double> torques,
                   const std::function<double(double, double)>& fn);

// Map CSV: header `speed_rpm,torque_nm,value`, one row per grid node,
// speed-major order, strictly increasing axes. Speeds are stored in rad/s.
Grid2D load_map_csv(const std::filesystem::path& path);
void save_map_csv(const Grid2D& grid, const std::filesystem::path& path);

// Two-column curve CSV with a header line (e.g. `soc,value` or `speed_rpm,value`).
// `x_scale` converts the first column into internal units.
Curve1D load_curve_csv(const std::filesystem::path& path, double x_scale = 1.0);

namespace detail {
std::vector<std::string> split_csv_line(const std::string& line);
double parse_double(const std::string& field, std::size_t line_no, const std::string& what);
}  // namespace detail

}  // namespace phev
