#include "phev/grid.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/os.h>

namespace phev {

namespace {

void check_increasing(std::span<const double> axis, const char* name) {
  if (axis.size() < 2) throw MapFormatError(fmt::format("{} axis needs at least two points", name));
  for (std::size_t i = 1; i < axis.size(); ++i) {
    if (!(axis[i] > axis[i - 1])) {
      throw MapFormatError(fmt::format("{} axis is not strictly increasing at index {}", name, i));
    }
  }
}

// Index i such that axis[i] <= x <= axis[i+1], with x already clamped into range.
std::size_t bracket(std::span<const double> axis, double x) {
  auto it = std::upper_bound(axis.begin(), axis.end(), x);
  auto i = static_cast<std::size_t>(std::distance(axis.begin(), it));
  if (i == 0) return 0;
  return std::min(i - 1, axis.size() - 2);
}

}  // namespace

namespace detail {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    auto b = field.find_first_not_of(" \t\r");
    auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& field, std::size_t line_no, const std::string& what) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || field.empty()) {
    throw MapFormatError(fmt::format("line {}: cannot parse {} '{}'", line_no, what, field));
  }
  return value;
}

}  // namespace detail

Curve1D::Curve1D(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
  if (knots_.size() != values_.size()) throw MapFormatError("curve knots and values differ in length");
  check_increasing(knots_, "curve");
}

double Curve1D::operator()(double x) const {
  if (x <= knots_.front()) return values_.front();
  if (x >= knots_.back()) return values_.back();
  const std::size_t i = bracket(knots_, x);
  const double w = (x - knots_[i]) / (knots_[i + 1] - knots_[i]);
  return values_[i] + w * (values_[i + 1] - values_[i]);
}

Grid2D::Grid2D(std::vector<double> speeds, std::vector<double> torques, std::vector<double> values)
    : speeds_(std::move(speeds)), torques_(std::move(torques)), values_(std::move(values)) {
  check_increasing(speeds_, "speed");
  check_increasing(torques_, "torque");
  if (values_.size() != speeds_.size() * torques_.size()) {
    throw MapFormatError(fmt::format("grid expects {}x{} values, got {}", speeds_.size(),
                                     torques_.size(), values_.size()));
  }
}

double Grid2D::operator()(double speed, double torque) const {
  const double s = std::clamp(speed, speeds_.front(), speeds_.back());
  const double q = std::clamp(torque, torques_.front(), torques_.back());
  const std::size_t i = bracket(speeds_, s);
  const std::size_t j = bracket(torques_, q);
  const double ws = (s - speeds_[i]) / (speeds_[i + 1] - speeds_[i]);
  const double wq = (q - torques_[j]) / (torques_[j + 1] - torques_[j]);
  const double v00 = at(i, j);
  const double v01 = at(i, j + 1);
  const double v10 = at(i + 1, j);
  const double v11 = at(i + 1, j + 1);
  return (1.0 - ws) * ((1.0 - wq) * v00 + wq * v01) + ws * ((1.0 - wq) * v10 + wq * v11);
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  out.back() = hi;
  return out;
}

Grid2D sample_grid(std::vector<double> speeds, std::vector<double> torques,
                   const std::function<double(double, double)>& fn) {
  std::vector<double> values;
  values.reserve(speeds.size() * torques.size());
  for (double s : speeds) {
    for (double q : torques) values.push_back(fn(s, q));
  }
  return Grid2D(std::move(speeds), std::move(torques), std::move(values));
}

Grid2D load_map_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MapFormatError(fmt::format("cannot open map file {}", path.string()));
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw MapFormatError(fmt::format("{}: empty map file", path.string()));
  ++line_no;
  auto header = detail::split_csv_line(line);
  if (header != std::vector<std::string>{"speed_rpm", "torque_nm", "value"}) {
    throw MapFormatError(fmt::format("{}: expected header speed_rpm,torque_nm,value", path.string()));
  }
  std::vector<double> speeds, torques, values;
  std::vector<std::pair<double, double>> nodes;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 3) throw MapFormatError(fmt::format("line {}: expected 3 fields", line_no));
    const double s = rpm_to_rad_s(detail::parse_double(fields[0], line_no, "speed"));
    const double q = detail::parse_double(fields[1], line_no, "torque");
    nodes.emplace_back(s, q);
    values.push_back(detail::parse_double(fields[2], line_no, "value"));
  }
  if (nodes.empty()) throw MapFormatError(fmt::format("{}: no data rows", path.string()));
  // The torque axis is the run of rows sharing the first speed.
  for (const auto& [s, q] : nodes) {
    if (s != nodes.front().first) break;
    torques.push_back(q);
  }
  if (nodes.size() % torques.size() != 0) {
    throw MapFormatError(fmt::format("{}: row count is not a multiple of the torque axis", path.string()));
  }
  for (std::size_t k = 0; k < nodes.size(); k += torques.size()) speeds.push_back(nodes[k].first);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto [s, q] = nodes[k];
    if (s != speeds[k / torques.size()] || q != torques[k % torques.size()]) {
      throw MapFormatError(fmt::format("line {}: grid is not rectangular and speed-major", k + 2));
    }
  }
  return Grid2D(std::move(speeds), std::move(torques), std::move(values));
}

void save_map_csv(const Grid2D& grid, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("speed_rpm,torque_nm,value\n");
  for (std::size_t i = 0; i < grid.speeds().size(); ++i) {
    for (std::size_t j = 0; j < grid.torques().size(); ++j) {
      out.print("{},{},{}\n", rad_s_to_rpm(grid.speeds()[i]), grid.torques()[j], grid.at(i, j));
    }
  }
}

Curve1D load_curve_csv(const std::filesystem::path& path, double x_scale) {
  std::ifstream in(path);
  if (!in) throw MapFormatError(fmt::format("cannot open curve file {}", path.string()));
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> xs, ys;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 2) throw MapFormatError(fmt::format("line {}: expected 2 fields", line_no));
    xs.push_back(x_scale * detail::parse_double(fields[0], line_no, "abscissa"));
    ys.push_back(detail::parse_double(fields[1], line_no, "value"));
  }
  return Curve1D(std::move(xs), std::move(ys));
}

}  // namespace phev
