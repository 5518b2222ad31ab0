#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"
#include "report.hpp"

namespace snlevy::app {

/// Stream seed of one check: the master seed hashed with the check name.
std::uint64_t check_seed(std::uint64_t seed, const std::string& check);

/// Runs one check and writes its data products (CSV, SVG) into out_dir.
/// The JSON verdict file is written by run_experiment.
CheckResult run_check(const std::string& name, const ExperimentConfig& config, const std::string& out_dir,
                      unsigned jobs);

struct RunSummary {
  std::vector<CheckResult> results;
  int exit_status = 0;  ///< 0 iff every verdict passed
};

/// All requested checks in dependency order, one <check>.json each, then
/// manifest.json with timestamps. Progress lines go to `log`.
RunSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir, std::ostream& log);

}  // namespace snlevy::app
