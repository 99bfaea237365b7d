#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "chaoslab/grid.hpp"
#include "chaoslab/model.hpp"
#include "chaoslab/particle.hpp"

namespace chaoslab {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& msg)
      : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : "") + ": " + msg), line(line) {}
  int line;
};

struct IniValue {
  std::string text;
  int line = 0;  // 0 for defaults
};
using IniSection = std::map<std::string, IniValue>;

// [section] headers, `key = value` lines, `#` or `;` comments. Duplicate keys are errors.
std::map<std::string, IniSection> parse_ini(const std::string& text, const std::string& source);

const std::vector<std::string>& subcommand_names();

struct RunConfig {
  std::string source;
  std::string subcommand;
  ModelSpec model;
  ReplicaPlan plan;
  GridSpec pde;
  double budget_seconds = 21600.0;
  // Subcommand keys with defaults filled in.
  IniSection experiment;

  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
};

// Unknown sections or keys, malformed values and invalid models are ConfigErrors with line numbers.
RunConfig load_config(const std::string& text, const std::string& source, const std::string& subcommand);

// Every key of every section with its resolved value; loading it back gives the same RunConfig.
std::string echo_config(const RunConfig& cfg);

// cos<n> and sin<n> (Fourier mode n of the period), x^<p>, tanh.
Observable parse_observable(const std::string& name, const ModelSpec& spec);

// Rough serial wall-clock cost of R * N * steps particle updates.
double particle_cost_seconds(double particle_steps);

}  // namespace chaoslab
