#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "snlevy/errors.hpp"
#include "snlevy/scale_fn.hpp"

using namespace snlevy;
using doctest::Approx;

namespace {

const double kPi = std::acos(-1.0);

LevyModel reference() { return LevyModel::brownian(-1.0, 1.0); }
LevyModel cp_model() { return LevyModel(1.0, 0.0, CompoundPoisson{2.0, ExponentialMagnitude{1.0}}); }

double max_rel_error(const ScaleGrid& g, auto exact, double floor = 1e-300) {
  double worst = 0.0;
  for (std::size_t i = 1; i < g.size(); ++i) {
    const double e = exact(g.x(i));
    worst = std::max(worst, std::abs(g.values[i] - e) / std::max(std::abs(e), floor));
  }
  return worst;
}

// Independent oracle: W^(0) of d=1, eta=0, CP(2, Exp(1)). Psi = l(l-1)/(l+1), so
// 1/Psi = (l+1)/(l(l-1)) = -1/l + 2/(l-1)  =>  W(x) = 2e^x - 1.
double cp_w0(double x) { return 2.0 * std::exp(x) - 1.0; }

}  // namespace

TEST_CASE("brownian closed forms") {
  CHECK(brownian_scale(-1, 1, 0, 1.0) == Approx(std::exp(2.0) - 1.0).epsilon(1e-14));
  CHECK(brownian_scale(-1, 1, -0.5, 1.0) == Approx(2.0 * std::exp(1.0)).epsilon(1e-14));
  CHECK(brownian_scale(-1, 1, -1.0, 1.0) == Approx(2.0 * std::exp(1.0) * std::sin(1.0)).epsilon(1e-14));
  CHECK(brownian_scale(-1, 1, -1.0, -1.0) == 0.0);
}

TEST_CASE("w_zero_grid for the reference model") {
  const auto g = w_zero_grid(reference(), 8.0, 1.0 / 16);
  CHECK(g.method == ScaleMethod::ClosedFormBrownian);
  CHECK(g.values[0] == 0.0);
  CHECK(g.at(1.0) == Approx(std::exp(2.0) - 1.0).epsilon(1e-12));
  CHECK(g.at(-0.5) == 0.0);
  CHECK_THROWS_AS(g.at(9.0), DomainError);
  CHECK_THROWS_AS(w_zero_grid(reference(), 1.0, 1.0 / 16), InputError);
}

TEST_CASE("laplace inversion reproduces a compound Poisson scale function") {
  const auto m = cp_model();
  CHECK(w_at_origin(m) == 1.0);
  const auto g = w_zero_grid(m, 6.0, 1.0 / 16);
  CHECK(g.method == ScaleMethod::LaplaceInversion);
  CHECK(g.values[0] == 1.0);
  CHECK(max_rel_error(g, cp_w0) < 1e-8);
  // Inversion of a Brownian model agrees with its closed form.
  for (double x : {0.1, 1.0, 3.0}) {
    CHECK(w_zero_inverted(reference(), x) == Approx(std::exp(2 * x) - 1).epsilon(1e-8));
  }
}

TEST_CASE("series backend on the reference model") {
  const auto m = reference();
  const auto g = w_q_grid(m, -0.5, 8.0, 1.0 / 64);
  CHECK(g.method == ScaleMethod::ConvolutionSeries);
  CHECK(max_rel_error(g, [](double x) { return 2 * x * std::exp(x); }) < 1e-7);

  const auto s = w_q_grid(m, -1.0, 8.0, 1.0 / 64);
  // 2 e^x sin x changes sign at pi, 2 pi.
  REQUIRE(s.sign_changes.size() == 2);
  CHECK(s.sign_changes[0] == Approx(kPi).epsilon(1.0 / 64));
  CHECK(s.sign_changes[1] == Approx(2 * kPi).epsilon(1.0 / 64));
  double worst = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double x = s.x(i);
    worst = std::max(worst, std::abs(s.values[i] - 2 * std::exp(x) * std::sin(x)) / std::exp(x));
  }
  CHECK(worst < 1e-7);

  const auto p = w_q_grid(m, 0.25, 8.0, 1.0 / 64);
  const double r = std::sqrt(1.5);
  CHECK(max_rel_error(p, [&](double x) {
          return (std::exp((1 + r) * x) - std::exp((1 - r) * x)) / r;
        }) < 1e-7);
  for (std::size_t i = 1; i < p.size(); ++i) REQUIRE(p.values[i] >= p.values[i - 1]);

  const auto z = w_q_grid(m, 0.0, 8.0, 1.0 / 64);
  CHECK(z.values == w_zero_grid(m, 8.0, 1.0 / 64).values);
}

TEST_CASE("series backend on a jump model") {
  // W^(q) for CP(2, Exp(1)), d = 1: 1/(Psi - q) = (l+1)/(l^2 - (1+q) l - q).
  const auto m = cp_model();
  for (double q : {0.3, -0.1}) {
    CAPTURE(q);
    const double b = 1 + q;
    const double disc = std::sqrt(b * b + 4 * q);
    const double r1 = (b + disc) / 2, r2 = (b - disc) / 2;
    auto exact = [&](double x) {
      return ((r1 + 1) * std::exp(r1 * x) - (r2 + 1) * std::exp(r2 * x)) / (r1 - r2);
    };
    const auto g = w_q_grid(m, q, 4.0, 1.0 / 32);
    CHECK(g.values[0] == 1.0);
    CHECK(max_rel_error(g, exact) < 1e-7);
  }
}

TEST_CASE("laplace transform spot checks") {
  for (const auto& m : {reference(), cp_model(),
                        LevyModel(0.5, 0.5, CompoundPoisson{1.0, MixtureOfExponentials{{0.4, 0.6}, {0.5, 1.5}}})}) {
    CAPTURE(m.describe());
    for (double q : {0.0, 0.5}) {
      const auto g = w_q_grid(m, q, 10.0, 1.0 / 32);
      for (const auto& c : laplace_check(m, g)) {
        CAPTURE(c.lambda);
        CHECK(c.relative_error < 1e-5 + c.tail_bound / std::abs(c.exact));
      }
    }
  }
}

TEST_CASE("halving h stays within the Richardson error estimate") {
  const auto m = cp_model();
  const auto a = w_q_grid(m, 0.4, 4.0, 1.0 / 16);
  const auto b = w_q_grid(m, 0.4, 4.0, 1.0 / 32);
  for (std::size_t i = 1; i < a.size(); ++i) {
    const double gap = std::abs(a.values[i] - b.values[2 * i]);
    CHECK(gap <= 4.0 * a.error_estimate[i] + 1e-13 * std::abs(a.values[i]));
  }
}

TEST_CASE("rho of the reference model") {
  const auto m = reference();
  for (double x : {kPi, 2 * kPi, 20.0}) {
    CAPTURE(x);
    const auto r = rho(m, x);
    CHECK(r.rho == Approx(0.5 * (1 + kPi * kPi / (x * x))).epsilon(1e-6).scale(1.0));
    CHECK(r.q_lo <= r.rho);
    CHECK(r.rho <= r.q_hi);
  }
  double prev = INFINITY;
  for (double x : {1.0, 2.0, 5.0, 10.0, 30.0, 64.0}) {
    const double v = rho(m, x).rho;
    CHECK(v < prev);
    CHECK(v > 0.5);
    prev = v;
  }
}

TEST_CASE("rho for jump and positive-drift models") {
  // Positive drift: W^(-q)(x) = (2/w) e^(-x) sin(w x), w = sqrt(2q - 1).
  const auto up = LevyModel::brownian(1.0, 1.0);
  CHECK(rho(up, kPi).rho == Approx(1.0).epsilon(1e-7));
  const auto r = rho(cp_model(), 5.0);
  // Independent check: the CP closed form above changes sign at rho.
  const double q = -r.rho;
  const double b = 1 + q;
  const double disc2 = b * b + 4 * q;
  REQUIRE(disc2 < 0);
  const double w = std::sqrt(-disc2) / 2;
  // W = e^(b x / 2) [cos(w x) + (b/2 + 1) sin(w x) / w]
  const double x = 5.0;
  const double val = std::cos(w * x) + (b / 2 + 1) * std::sin(w * x) / w;
  CHECK(std::abs(val) < 1e-6);
}

TEST_CASE("tilted scale identity adjudication") {
  const auto m = reference();
  const auto zero = tilted_scale_check(LevyModel::brownian(1.0, 1.0), 0.0, 0.3, 6.0, 1.0 / 16);
  CHECK(zero.printed_discrepancy < 1e-12);
  CHECK(zero.alternative_discrepancy < 1e-12);
  CHECK(zero.supported == "both");
  for (double c : {-0.25, -0.5}) {
    CAPTURE(c);
    const auto r = tilted_scale_check(m, c, 0.0, 10.0, 1.0 / 32);
    CHECK(r.supported == "alternative");
    CHECK(r.alternative_laplace_error < 1e-5);
    CHECK(r.printed_laplace_error > 1e-2);
  }
  const auto j = tilted_scale_check(cp_model(), -0.1, 0.2, 4.0, 1.0 / 32);
  CHECK(j.supported == "alternative");
}

TEST_CASE("csv export") {
  const auto g = w_zero_grid(reference(), 4.0, 1.0 / 16);
  std::ostringstream out;
  write_csv(out, g);
  const auto text = out.str();
  CHECK(text.rfind("# model_hash=" + reference().hash(), 0) == 0);
  CHECK(text.find("method=ClosedFormBrownian") != std::string::npos);
  CHECK(text.find("\nx,W_q\n0,0\n") != std::string::npos);
}
