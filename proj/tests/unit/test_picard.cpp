#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "snlevy/errors.hpp"
#include "snlevy/picard.hpp"
#include "snlevy/scale_fn.hpp"

using namespace snlevy;

namespace {

LevyModel reference() { return LevyModel::brownian(-1.0, 1.0); }

double gk(auto f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, 1e-14);
}

double normal_pdf(double x, double m, double s) {
  const double z = (x - m) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::acos(-1.0)));
}

}  // namespace

TEST_CASE("killed kernel: nonnegative, rows match survival minus the half cell at 0") {
  const double dt = 0.3, h = 0.1;
  const std::size_t n = 60;
  const auto k = KilledKernel::build(reference(), dt, h, n);
  for (double m : k.mass) CHECK(m >= 0.0);
  for (std::size_t i : {1u, 5u, 20u, 59u}) {
    const double z = static_cast<double>(i) * h;
    const double s = std::sqrt(dt);
    auto density = [&](double y) {
      return normal_pdf(y, z - dt, s) - std::exp(2.0 * z) * normal_pdf(y, -z - dt, s);
    };
    const double lost = gk(density, 0.0, 0.5 * h);
    const double survival = brownian_survival_phi(-1.0, 1.0, 0.0, z, dt);
    CHECK(k.row_sum(i) <= survival + 1e-14);
    CHECK(std::abs(k.row_sum(i) - (survival - lost)) < 1e-12);
    const double cell = gk(density, (5 - 0.5) * h, (5 + 0.5) * h);
    CHECK(std::abs(k(i, 5) - cell) < 1e-12);
  }
}

TEST_CASE("survival phi matches the image formula and its limits") {
  CHECK(brownian_survival_phi(-1.0, 1.0, 0.0, 1.0, 0.0) == 1.0);
  CHECK(brownian_survival_phi(-1.0, 1.0, 0.0, 0.0, 1.0) == 0.0);
  // Driftless: P_x(tau > t) = erf(x / sqrt(2t)).
  CHECK(std::abs(brownian_survival_phi(0.0, 1.0, 0.0, 1.3, 2.0) - std::erf(1.3 / 2.0)) < 1e-14);
  CHECK(std::abs(brownian_survival_phi(0.0, 1.0, 0.5, 1.3, 2.0) - std::exp(-1.0) * std::erf(1.3 / 2.0)) <
        1e-14);
}

TEST_CASE("solve_survival: beta = 0 reproduces the single-particle law, t = 0 gives 1") {
  const auto s = solve_survival(reference(), 0.0, 3.0, 5.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < s.a.size(); ++i) {
    for (std::size_t k = 0; k < s.second.size(); ++k) {
      worst = std::max(worst, std::abs(s(i, k) - brownian_survival_phi(-1.0, 1.0, 0.0, s.a[i], s.second[k])));
    }
  }
  CHECK(worst < 1e-6);
  CHECK(s.converged);

  const auto b = solve_survival(reference(), 0.25, 3.0, 2.0);
  for (std::size_t i = 1; i < b.a.size(); ++i) CHECK(b(i, 0) == 1.0);
}

TEST_CASE("solve_survival: range, monotonicity and geometric residual decay") {
  const auto s = solve_survival(reference(), 0.25, 4.0, 5.0);
  REQUIRE(s.converged);
  CHECK(s.diagnostic.empty());
  for (std::size_t i = 0; i < s.a.size(); ++i) {
    for (std::size_t k = 0; k < s.second.size(); ++k) {
      CHECK(s(i, k) >= 0.0);
      CHECK(s(i, k) <= 1.0);
      if (i > 0) CHECK(s(i, k) >= s(i - 1, k) - 1e-12);
      if (k > 0) CHECK(s(i, k) <= s(i, k - 1) + 1e-12);
    }
  }
  const auto& r = s.residual_history;
  REQUIRE(r.size() >= 3);
  CHECK(r[r.size() - 1] / r[r.size() - 2] < 0.95);
  CHECK(r[r.size() - 2] / r[r.size() - 3] < 0.95);
  // Branching only helps survival.
  CHECK(s.at(1.0, 5.0) > brownian_survival_phi(-1.0, 1.0, 0.0, 1.0, 5.0));
}

TEST_CASE("solve_survival: grid refinement changes are O(dt + h^2)") {
  PicardOptions coarse;
  coarse.h = 0.1;
  coarse.dt = 0.1;
  PicardOptions fine;
  fine.h = 0.05;
  fine.dt = 0.05;
  const auto a = solve_survival(reference(), 0.25, 3.0, 4.0, coarse);
  const auto b = solve_survival(reference(), 0.25, 3.0, 4.0, fine);
  double worst = 0.0;
  for (double x : {0.5, 1.0, 2.0, 3.0}) {
    for (double t : {1.0, 2.0, 4.0}) worst = std::max(worst, std::abs(a.at(x, t) - b.at(x, t)));
  }
  MESSAGE("refinement change h,dt 0.1 -> 0.05: " << worst);
  CHECK(worst < 5e-3);
}

TEST_CASE("solve_survival rejects jump models and oversized grids") {
  const LevyModel cp(1.0, 0.0, CompoundPoisson{2.0, ExponentialMagnitude{1.0}});
  CHECK_THROWS_AS(solve_survival(cp, 0.25, 1.0, 1.0), InputError);
  PicardOptions o;
  o.dt = 1e-3;
  CHECK_THROWS_AS(solve_survival(reference(), 0.25, 5.0, 50.0, o), InputError);
  CHECK(!solve_survival(reference(), 0.75, 1.0, 1.0).diagnostic.empty());
}

TEST_CASE("exponential-time kernel integrates the two-sided resolvent") {
  const double beta = 0.25, x = 3.0;
  const std::size_t n = 30;
  const auto e = exponential_time_kernel(reference(), beta, x, n);
  const double h = x / n;
  auto w = [&](double y) { return y <= 0.0 ? 0.0 : brownian_scale(-1.0, 1.0, beta, y); };
  double worst = 0.0;
  for (std::size_t i : {1u, 7u, 15u, 29u}) {
    const double a = i * h;
    auto r = [&](double y) { return beta * (w(a) * w(x - y) / w(x) - w(a - y)); };
    for (std::size_t j = 0; j <= n; ++j) {
      const double lo = std::max(0.0, (j - 0.5) * h), hi = std::min(x, (j + 0.5) * h);
      double exact;
      if (lo < a && a < hi) {
        exact = gk(r, lo, a) + gk(r, a, hi);
      } else {
        exact = gk(r, lo, hi);
      }
      worst = std::max(worst, std::abs(e[i * (n + 1) + j] - exact));
    }
  }
  MESSAGE("kernel vs resolvent: " << worst);
  CHECK(worst < 1e-8);
  for (std::size_t j = 0; j <= n; ++j) {
    CHECK(e[j] == 0.0);
    CHECK(e[n * (n + 1) + j] == 0.0);
  }
}

TEST_CASE("solve_max: beta = 0 two-sided exit law and the boundary row") {
  const double x = 4.0;
  const auto u = solve_max(reference(), 0.0, x);
  double worst = 0.0;
  for (std::size_t i = 0; i < u.a.size(); ++i) {
    const double exact = std::expm1(2.0 * u.a[i]) / std::expm1(2.0 * x);
    worst = std::max(worst, std::abs(u(i, 0) - exact));
  }
  CHECK(worst < 1e-6);

  const auto b = solve_max(reference(), 0.25, x);
  REQUIRE(b.converged);
  CHECK(std::abs(b(b.a.size() - 1, 0) - 1.0) < 1e-6);
  CHECK(b(0, 0) == 0.0);
  for (std::size_t i = 1; i < b.a.size(); ++i) CHECK(b(i, 0) > b(i - 1, 0));
  // Branching helps reach the level.
  const double phi = brownian_scale(-1.0, 1.0, 0.25, 1.0) / brownian_scale(-1.0, 1.0, 0.25, x);
  CHECK(b.at(1.0, x) > phi);
}

TEST_CASE("solve_max: log u + Phi(-beta) x flattens monotonically in x") {
  const double beta = 0.25;
  const double phi = snlevy::phi(reference(), -beta);
  std::vector<double> g;
  for (double x = 3.0; x <= 8.0; x += 1.0) {
    const auto u = solve_max(reference(), beta, x);
    REQUIRE(u.converged);
    g.push_back(std::log(u.at(1.0, x)) + phi * x);
  }
  for (std::size_t i = 2; i < g.size(); ++i) {
    CHECK(std::abs(g[i] - g[i - 1]) < std::abs(g[i - 1] - g[i - 2]));
  }
}

TEST_CASE("lemma3: the n-fold operator equals the Gamma / order-statistics expectation") {
  const auto zero = lemma3_identity_check(reference(), 0.0, 1, 1.0, 2.0, 1000, 7);
  CHECK(zero.quadrature == 0.0);
  CHECK(zero.monte_carlo == 0.0);
  CHECK(zero.pass);
  for (int n : {1, 2, 3}) {
    const auto r = lemma3_identity_check(reference(), 0.25, n, 1.0, 2.0, 100000, 11);
    MESSAGE("n=" << n << " quadrature=" << r.quadrature << " mc=" << r.monte_carlo << " se=" << r.se
                 << " z=" << r.z);
    CHECK(r.quadrature > 0.0);
    CHECK(r.pass);
  }
  CHECK_THROWS_AS(lemma3_identity_check(reference(), 0.25, 4, 1.0, 2.0, 10, 1), InputError);
}

TEST_CASE("picard cross-check against branching Monte Carlo") {
  const auto r = picard_cross_check(reference(), 0.25, {1.0}, {5.0}, {4.0}, 20000, 0.05, 3);
  REQUIRE(r.survival.size() == 1);
  REQUIRE(r.maximum.size() == 1);
  for (const auto& p : r.survival) {
    MESSAGE("survival a=" << p.a << " t=" << p.second << " solver=" << p.solver << " mc=" << p.mc);
    CHECK(p.inside);
  }
  for (const auto& p : r.maximum) {
    MESSAGE("max a=" << p.a << " x=" << p.second << " solver=" << p.solver << " mc=" << p.mc);
    CHECK(p.inside);
  }
}

TEST_CASE("surface csv") {
  const auto u = solve_max(reference(), 0.25, 2.0);
  const std::string path = "picard_surface_test.csv";
  write_surface_csv(u, path);
  std::FILE* f = std::fopen(path.c_str(), "r");
  REQUIRE(f);
  char line[256];
  REQUIRE(std::fgets(line, sizeof line, f));
  CHECK(std::string(line) == "a,t_or_x,value,residual,iterations\n");
  std::size_t rows = 0;
  while (std::fgets(line, sizeof line, f)) ++rows;
  std::fclose(f);
  std::remove(path.c_str());
  CHECK(rows == u.a.size());
}
