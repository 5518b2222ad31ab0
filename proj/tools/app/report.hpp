#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snlevy/asymptotics.hpp"
#include "snlevy/branching_sim.hpp"

namespace snlevy::app {

using nlohmann::json;

/// One verdict object as published in docs/verdict.schema.json.
json verdict_json(const Verdict& v, const json& details = nullptr);

/// All verdicts of one check, written to <out>/<check>.json.
struct CheckResult {
  std::string check;
  std::string model_hash;
  std::vector<Verdict> verdicts;
  std::vector<json> details;  ///< parallel to verdicts, null when absent
  std::vector<std::string> artifacts;  ///< files written, relative to the output directory
  std::string error;  ///< set when the check threw

  void add(Verdict v, json d = nullptr);
  bool pass() const;
  json to_json() const;
};

/// Two-space indented JSON with a trailing newline.
std::string dump(const json& j);

void write_text(const std::string& path, const std::string& text);

/// threshold,count,survival,ci_lo,ci_hi,fitted
void write_tail_csv(const TailEstimate& tail, const std::optional<RateFit>& fit, const std::string& path);

/// Log-survival plot: points, Wilson band, fitted line over its window and a
/// target/estimate annotation. Without a fit the plot carries a warning instead.
void emit_plot(const TailEstimate& tail, const std::optional<RateFit>& fit, std::optional<double> target,
               const std::string& title, const std::string& path, const std::string& warning = {});

}  // namespace snlevy::app
