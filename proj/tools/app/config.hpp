#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "snlevy/branching_sim.hpp"
#include "snlevy/levy_core.hpp"

namespace snlevy::app {

/// Check names in dependency order.
const std::vector<std::string>& known_checks();

/// Typed view of one sectioned key=value file. See docs/config.md.
struct ExperimentConfig {
  std::string source;  ///< path or label, for messages
  LevyModel model = LevyModel::brownian(-1.0, 1.0);
  double beta = 0.25;
  double start = 1.0;
  BarrierKind barrier = BarrierKind::Absorbed;
  std::size_t replicates = 20000;
  double horizon = 16.0;
  double dt = 0.05;
  std::uint64_t seed = 1;
  double critical_band = 1e-9;  ///< relative width of the beta = q* band
  std::optional<double> threshold_step;
  std::optional<double> threshold_max;
  std::string out;
  std::vector<std::string> checks;  ///< sorted into dependency order
  unsigned jobs = 1;
  bool parallel_checks = false;
  /// Per-check sections, keys already checked against the allowed set.
  std::map<std::string, std::map<std::string, std::string>> sections;

  /// Raw value of [section] key, if given.
  std::optional<std::string> raw(const std::string& section, const std::string& key) const;
  double number(const std::string& section, const std::string& key, double fallback) const;
  std::size_t count(const std::string& section, const std::string& key, std::size_t fallback) const;
  bool flag(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> numbers(const std::string& section, const std::string& key,
                              std::vector<double> fallback) const;
};

/// Parses and validates; InputError messages name the offending key.
ExperimentConfig parse_config(std::istream& in, const std::string& source);
ExperimentConfig load_config(const std::string& path);

/// Replaces the check list (command-line --check), validating the names.
void set_checks(ExperimentConfig& config, const std::vector<std::string>& checks);

/// Module preconditions of every requested check, before anything runs.
void validate_for_checks(const ExperimentConfig& config);

}  // namespace snlevy::app
