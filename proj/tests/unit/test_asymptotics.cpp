#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "snlevy/asymptotics.hpp"
#include "snlevy/errors.hpp"

using namespace snlevy;

namespace {

LevyModel reference() { return LevyModel::brownian(-1.0, 1.0); }

/// Tail with exact survival values and a huge nominal sample.
TailEstimate exact_tail(const std::vector<double>& xs, auto p) {
  TailEstimate t;
  t.axis = "t";
  t.n = 1'000'000'000'000ULL;
  for (double x : xs) {
    const double v = p(x);
    t.thresholds.push_back(x);
    t.survival.push_back(v);
    t.counts.push_back(static_cast<std::uint64_t>(v * static_cast<double>(t.n)));
    const double half = 1.96 * std::sqrt(v * (1.0 - v) / static_cast<double>(t.n));
    t.ci_lo.push_back(v - half);
    t.ci_hi.push_back(v + half);
  }
  return t;
}

}  // namespace

TEST_CASE("fit_rate recovers exact exponential tails") {
  const auto t = exact_tail(threshold_grid(0.5, 20.0), [](double x) { return std::exp(-0.25 * x); });
  const auto f = fit_rate(t, false);
  CHECK(std::abs(f.slope + 0.25) < 1e-12);
  CHECK(std::abs(f.intercept) < 1e-10);
  CHECK(std::abs(f.r2 - 1.0) < 1e-12);
  CHECK(f.points == t.thresholds.size());
  CHECK(!f.log_coef);
  const auto [y, se] = f.predict(7.0);
  CHECK(std::abs(y + 1.75) < 1e-10);
  CHECK(se > 0.0);
}

TEST_CASE("fit_rate with a log correction and with a fixed power") {
  const auto t = exact_tail(threshold_grid(0.25, 12.0), [](double x) { return std::exp(-x) / x; });
  const auto f = fit_rate(t, true);
  REQUIRE(f.log_coef);
  CHECK(std::abs(f.slope + 1.0) < 1e-9);
  CHECK(std::abs(*f.log_coef + 1.0) < 1e-9);

  const auto g = exact_tail(threshold_grid(0.5, 14.0), [](double x) { return 0.3 * std::pow(x, -1.5) * std::exp(-0.25 * x); });
  FitOptions o;
  o.fixed_power = -1.5;
  const auto h = fit_rate(g, false, o);
  CHECK(std::abs(h.slope + 0.25) < 1e-12);
  CHECK(std::abs(h.intercept - std::log(0.3)) < 1e-10);
}

TEST_CASE("fit_rate window: explicit limits, survivor cut, too few points") {
  const auto t = exact_tail(threshold_grid(0.5, 20.0), [](double x) { return std::exp(-0.25 * x); });
  FitOptions o;
  o.lo = 4.0;
  o.hi = 14.0;
  const auto f = fit_rate(t, false, o);
  CHECK(f.lo == 4.0);
  CHECK(f.hi == 14.0);
  CHECK(f.points == 21);

  const auto sparse = tail_from_counts("t", {1, 2, 3, 4, 5, 6, 7, 8}, {900, 500, 300, 120, 60, 40, 20, 5}, 1000);
  CHECK_THROWS_WITH_AS(fit_rate(sparse, false), doctest::Contains("need at least 6"), InputError);
  o.lo = 8.0;
  o.hi = 10.0;
  CHECK_THROWS_AS(fit_rate(t, false, o), InputError);
}

TEST_CASE("fit_rate confidence intervals cover the true rate") {
  std::mt19937_64 gen(2024);
  std::exponential_distribution<double> law(0.25);
  const auto grid = threshold_grid(0.5, 20.0);
  const std::size_t n = 100000;
  int covered = 0;
  for (int r = 0; r < 100; ++r) {
    std::vector<std::uint64_t> counts(grid.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double e = law(gen);
      for (std::size_t k = 0; k < grid.size() && grid[k] < e; ++k) ++counts[k];
    }
    const auto f = fit_rate(tail_from_counts("t", grid, counts, n), false);
    if (std::abs(f.slope + 0.25) <= 1.96 * f.slope_se) ++covered;
  }
  MESSAGE("coverage " << covered << "/100");
  CHECK(covered >= 90);
}

TEST_CASE("theorem1: fitted rate increases with beta") {
  Theorem1Options o;
  o.sim.replicates = 20000;
  o.sim.seed = 5;
  o.single_particle = false;
  o.horizon = 12.0;
  o.fit = {2.0, 12.0};
  double last = -1e9;
  for (double beta : {0.05, 0.2, 0.35}) {
    const auto r = verify_theorem1(reference(), beta, o);
    const double slope = r.fits.front()->slope;
    MESSAGE("beta=" << beta << " slope=" << slope << " se=" << r.fits.front()->slope_se);
    CHECK(slope > last);
    last = slope;
  }
}

TEST_CASE("theorem1 and theorem2 reject the wrong regimes") {
  CHECK_THROWS_AS(verify_theorem1(reference(), 0.75), InputError);
  CHECK_THROWS_AS(verify_theorem1(LevyModel::brownian(0.5, 1.0), 0.1), DomainError);
  CHECK_THROWS_AS(verify_theorem2(reference(), 0.6), InputError);
  CHECK_THROWS_AS(verify_corollary(reference(), 0.5), InputError);
}

TEST_CASE("exit rate at x = pi and the Gaussian requirement") {
  ExitRateOptions o;
  o.sim.replicates = 40000;
  o.sim.seed = 3;
  o.fit = {2.0, 10.0};
  const auto r = verify_exit_rate(reference(), 1.5, std::acos(-1.0), o);
  const auto& v = r.verdicts.front();
  MESSAGE("slope=" << v.estimate << " se=" << v.se << " target=" << v.target);
  CHECK(std::abs(v.target + 1.0) < 1e-6);
  CHECK(v.pass);
  const LevyModel cp(1.0, 0.0, CompoundPoisson{2.0, ExponentialMagnitude{1.0}});
  CHECK_THROWS_AS(verify_exit_rate(cp, 1.0, 3.0), InputError);
}
