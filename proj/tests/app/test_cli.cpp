#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "app/checks.hpp"
#include "app/config.hpp"
#include "snlevy/errors.hpp"

using namespace snlevy;
using namespace snlevy::app;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("snlevy_test_" + name);
  fs::remove_all(d);
  return d;
}

RunSummary run_quiet(const ExperimentConfig& c, const fs::path& dir) {
  std::ostringstream log;
  return run_experiment(c, dir.string(), log);
}

const char* kReference = R"(
[model]
kind = brownian
drift = -1
gaussian = 1
)";

}  // namespace

TEST_CASE("config keys are checked by name") {
  CHECK(error_of(std::string(kReference) + "[run]\nbogus = 1\n").find("bogus") != std::string::npos);
  CHECK(error_of(std::string(kReference) + "[theorem1]\nwindow = 3\n").find("[theorem1] window") != std::string::npos);
  CHECK(error_of("[model]\nkind = cauchy\n").find("kind") != std::string::npos);
  CHECK(error_of("stray = 1\n").find("stray") != std::string::npos);
  CHECK(error_of(std::string(kReference) + "[run]\nbeta = lots\n").find("beta") != std::string::npos);
  CHECK(error_of(std::string(kReference) + "[run]\nchecks = theorem9\n").find("theorem9") != std::string::npos);
}

TEST_CASE("config values and dependency order") {
  const auto c = parse(std::string(kReference) +
                       "# comment\n[run]\nbeta = 0.5\nchecks = theorem1 characteristics scale\n"
                       "[exit-rate]\nx = 2pi\n");
  CHECK(c.beta == 0.5);
  CHECK(c.checks == std::vector<std::string>{"characteristics", "scale", "theorem1"});
  CHECK(c.number("exit-rate", "x", 0.0) == doctest::Approx(2.0 * std::acos(-1.0)));
  CHECK(c.number("theorem1", "a", 7.0) == 7.0);
}

TEST_CASE("empty check list writes only the manifest") {
  const auto dir = fresh_dir("empty");
  const auto s = run_quiet(parse(kReference), dir);
  CHECK(s.exit_status == 0);
  CHECK(s.results.empty());
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["checks"].empty());
  CHECK(m["exit_status"] == 0);
}

TEST_CASE("characteristics output for the reference model") {
  auto c = parse(kReference);
  set_checks(c, {"characteristics"});
  const auto dir = fresh_dir("chars");
  CHECK(run_quiet(c, dir).exit_status == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "characteristics.json"));
  CHECK(j["verdict"] == "PASS");
  const auto& d = j["verdicts"][0]["details"];
  CHECK(d["lambda_star"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d["q_star"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d["phi_0"].get<double>() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("a failing verdict sets exit status 1") {
  // Too few thresholds survive a late window, so there is no fit.
  auto c = parse(std::string(kReference) + "[run]\nreplicates = 200\n[exit-rate]\nwindow_lo = 9\n");
  set_checks(c, {"exit-rate"});
  const auto dir = fresh_dir("fail");
  const auto s = run_quiet(c, dir);
  CHECK(s.exit_status == 1);
  const auto j = nlohmann::json::parse(slurp(dir / "exit-rate.json"));
  CHECK(j["verdict"] == "FAIL");
  CHECK(j["verdicts"][0]["estimate"].is_null());
  CHECK(j["verdicts"][0]["note"].get<std::string>().rfind("no fit", 0) == 0);
  CHECK(slurp(dir / "exit_rate.svg").find("no fit") != std::string::npos);
}

TEST_CASE("reruns and worker counts give byte-identical verdicts") {
  auto c = parse(std::string(kReference) + "[run]\nreplicates = 3000\nseed = 99\n");
  set_checks(c, {"theorem1", "kendall", "picard-cross"});
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b"), d = fresh_dir("det_c");
  run_quiet(c, a);
  run_quiet(c, b);
  c.jobs = 3;
  c.parallel_checks = true;
  run_quiet(c, d);
  for (const char* f : {"theorem1.json", "kendall.json", "picard-cross.json", "theorem1_0.csv"}) {
    CAPTURE(f);
    const auto x = slurp(a / f);
    CHECK(!x.empty());
    CHECK(x == slurp(b / f));
    CHECK(x == slurp(d / f));
  }
  c.seed = 100;
  c.jobs = 1;
  const auto e = fresh_dir("det_d");
  run_quiet(c, e);
  CHECK(slurp(a / "theorem1.json") != slurp(e / "theorem1.json"));
}

TEST_CASE("check seeds differ by check name") {
  CHECK(check_seed(1, "theorem1") != check_seed(1, "theorem2"));
  CHECK(check_seed(1, "theorem1") == check_seed(1, "theorem1"));
  CHECK(check_seed(1, "theorem1") != check_seed(2, "theorem1"));
}

TEST_CASE("critical band from the config") {
  auto c = parse(std::string(kReference) + "[run]\nbeta = 0.4999\ncritical_band = 1e-3\n");
  set_checks(c, {"characteristics"});
  const auto dir = fresh_dir("band");
  run_quiet(c, dir);
  auto j = nlohmann::json::parse(slurp(dir / "characteristics.json"));
  CHECK(j["verdicts"][0]["details"]["regime"] == "DiesOutCritical");
  c.critical_band = 1e-9;
  run_quiet(c, dir);
  j = nlohmann::json::parse(slurp(dir / "characteristics.json"));
  CHECK(j["verdicts"][0]["details"]["regime"] == "DiesOutSubcritical");
  CHECK(error_of(std::string(kReference) + "[run]\ncritical_band = 0.5\n").find("critical_band") != std::string::npos);
}
