#pragma once

// Experiment configuration: a strict "key = value" text format with dotted
// keys, '#' comments and a fixed schema per experiment kind. Precedence is
// command-line flags > file > schema defaults.

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace hexpert::config {

enum class Kind { Oracle, Supervised, Density, RL, Meta, RateUtilitySweep };

const char* to_string(Kind k);
Kind kind_from_string(const std::string& s);  // throws ConfigError

// Parse and schema errors. `path` names the offending key ("" for syntax
// errors that precede any key).
struct ConfigError : std::runtime_error {
  ConfigError(std::string path_, const std::string& msg)
      : std::runtime_error(path_.empty() ? msg : path_ + ": " + msg), path(std::move(path_)) {}
  std::string path;
};

enum class FieldType { Int, Double, Bool, String, IntList, DoubleList, Matrix };

struct FieldInfo {
  std::string key;
  FieldType type;
  std::string help;
};

class Config {
 public:
  static Config parse(std::string_view text, const std::string& source = "<string>");
  static Config load(const std::filesystem::path& path);

  // Sets or replaces a key (command-line overrides). Syntax only; call
  // validate() afterwards.
  void set(const std::string& key, const std::string& value);
  // "key=value" form of set().
  void apply_override(const std::string& assignment);

  // Full schema check. Throws ConfigError naming the first bad field.
  void validate() const;
  Kind kind() const;

  // Keys that were filled from schema defaults.
  std::vector<std::string> defaulted() const;
  // Every key that applies to this kind, with its effective value.
  std::map<std::string, std::string> effective() const;
  nlohmann::json to_json() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  Eigen::MatrixXd get_matrix(const std::string& key) const;

  const std::map<std::string, std::string>& explicit_values() const { return values_; }

 private:
  std::string raw(const std::string& key) const;  // explicit value or default
  void validate_field_only(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

// Keys that apply to the given kind, in schema order.
std::vector<FieldInfo> schema_for(Kind kind);

}  // namespace hexpert::config
