#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "app/checks.hpp"
#include "app/config.hpp"
#include "snlevy/errors.hpp"

namespace {

/// --out, then [run] out, then $SNLEVY_OUT/<config stem>, then snlevy-out/<config stem>.
std::string output_dir(const std::string& flag, const snlevy::app::ExperimentConfig& c, const std::string& path) {
  if (!flag.empty()) return flag;
  if (!c.out.empty()) return c.out;
  const std::string stem = std::filesystem::path(path).stem().string();
  if (const char* root = std::getenv("SNLEVY_OUT"); root && *root) return (std::filesystem::path(root) / stem).string();
  return (std::filesystem::path("snlevy-out") / stem).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Branching spectrally negative Levy processes: simulation and verification checks"};
  cli.require_subcommand(1);

  auto* run = cli.add_subcommand("run", "Run the checks listed in a config file");
  std::string config_path, out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::vector<std::string> checks;
  bool parallel = false;
  run->add_option("config", config_path, "Config file (sectioned key = value)")->required();
  run->add_option("--seed", seed, "Master seed, overrides [run] seed");
  run->add_option("--out", out, "Output directory (default: $SNLEVY_OUT/<config name>)");
  run->add_option("--jobs", jobs, "Worker threads, 0 = all cores");
  run->add_option("--check", checks, "Checks to run, replacing [run] checks")->expected(1, -1);
  run->add_flag("--parallel-checks", parallel, "Run independent checks concurrently");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    auto config = snlevy::app::load_config(config_path);
    if (seed) config.seed = *seed;
    if (jobs) config.jobs = *jobs;
    if (!checks.empty()) snlevy::app::set_checks(config, checks);
    if (parallel) config.parallel_checks = true;
    snlevy::app::validate_for_checks(config);
    const std::string dir = output_dir(out, config, config_path);
    const auto summary = snlevy::app::run_experiment(config, dir, std::cout);
    std::cout << "artifacts in " << dir << '\n';
    return summary.exit_status;
  } catch (const snlevy::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
