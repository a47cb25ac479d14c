#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "phev/powertrain.hpp"

namespace phev {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One `[section]` of a config file. Reads are tracked so that typos in key
/// names can be reported instead of silently ignored.
class ConfigSection {
 public:
  ConfigSection() = default;
  explicit ConfigSection(std::string name) : name_(std::move(name)) {}

  void set(const std::string& key, std::string value, std::size_t line);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> text(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  long long integer(const std::string& key, long long fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::string string(const std::string& key, const std::string& fallback) const;

  // Throws ConfigError naming the first key that was never read.
  void check_consumed() const;
  const std::string& name() const { return name_; }

 private:
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::string name_;
  std::map<std::string, Entry> values_;
  mutable std::set<std::string> read_;
};

/// Line-oriented `key = value` file with `[section]` headers. `#` and `;`
/// start comments. Keys before the first header land in section "".
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");
  static ConfigFile load(const std::filesystem::path& path);

  // Section by name; an empty section if absent.
  const ConfigSection& section(const std::string& name) const;
  bool has_section(const std::string& name) const { return sections_.count(name) != 0; }
  std::vector<std::string> section_names() const;

  // Directory relative paths in the file resolve against.
  const std::filesystem::path& base_dir() const { return base_dir_; }
  std::filesystem::path resolve(const std::string& path) const;

  void check_consumed() const;

 private:
  std::map<std::string, ConfigSection> sections_;
  std::filesystem::path base_dir_;
};

/// Builds the powertrain from the `[vehicle]`, `[engine]`, `[motor]`,
/// `[generator]` and `[battery]` sections. Map files (`bsfc_map`,
/// `efficiency_map`, `torque_limit`, `ocv_curve`, `resistance_curve`) replace
/// the analytic defaults when given.
Powertrain load_powertrain(const ConfigFile& cfg);

void apply_vehicle_section(const ConfigSection& s, VehicleParams& p);

}  // namespace phev
