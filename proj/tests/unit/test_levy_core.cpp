#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "snlevy/errors.hpp"
#include "snlevy/levy_core.hpp"

using namespace snlevy;
using doctest::Approx;

namespace {

LevyModel cp_exp_model() { return LevyModel(1.0, 0.0, CompoundPoisson{2.0, ExponentialMagnitude{1.0}}); }

}  // namespace

TEST_CASE("brownian laplace exponent and characteristics") {
  const auto m = LevyModel::brownian(-1.0, 1.0);
  CHECK(psi(m, 2.0) == Approx(0.0).epsilon(1e-15));
  CHECK(psi(m, 3.0) == Approx(1.5));
  const auto c = characteristics(m);
  REQUIRE(c.lambda_star);
  CHECK(*c.lambda_star == Approx(1.0).epsilon(1e-12));
  CHECK(*c.q_star == Approx(0.5).epsilon(1e-12));
  CHECK(phi(m, 0.0) == Approx(2.0).epsilon(1e-12));
  CHECK(phi(m, -0.25) == Approx(1.0 + std::sqrt(0.5)).epsilon(1e-12));
  CHECK(phi(m, -0.5) == Approx(1.0).epsilon(1e-9));
  CHECK(phi(m, 0.1) == Approx(1.0 + std::sqrt(1.2)).epsilon(1e-12));
  CHECK_THROWS_AS(phi(m, -0.6), DomainError);
  CHECK(c.regime(0.25) == Regime::DiesOutSubcritical);
  CHECK(c.regime(0.5) == Regime::DiesOutCritical);
  CHECK(c.regime(1.0) == Regime::SurvivesWithPositiveProbability);
}

TEST_CASE("positive drift has no q*") {
  const auto m = LevyModel::brownian(1.0, 1.0);
  const auto c = characteristics(m);
  CHECK_FALSE(c.q_star);
  CHECK(c.regime(0.001) == Regime::SurvivesWithPositiveProbability);
  CHECK(phi(m, 0.0) == 0.0);
  CHECK_THROWS_AS(phi(m, -0.01), DomainError);
}

TEST_CASE("compound Poisson with exponential jumps") {
  const auto m = cp_exp_model();
  CHECK(psi(m, 1.0) == Approx(0.0).scale(1.0).epsilon(1e-15));
  const auto d0 = psi_derivatives(m, 0.0);
  CHECK(d0.first == Approx(-1.0));
  CHECK(d0.second == Approx(4.0));
  const auto c = characteristics(m);
  REQUIRE(c.q_star);
  CHECK(*c.lambda_star == Approx(std::sqrt(2.0) - 1.0).epsilon(1e-12));
  CHECK(*c.q_star == Approx(3.0 - 2.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(phi(m, 0.0) == Approx(1.0).epsilon(1e-12));
  CHECK(m.bounded_variation());
  CHECK(m.bounded_variation_drift() == 1.0);
}

TEST_CASE("closed forms agree with quadrature") {
  const std::vector<LevyModel> models = {
      cp_exp_model(),
      LevyModel(0.5, 0.3, CompoundPoisson{1.5, FixedMagnitude{0.7}}),
      LevyModel(0.2, 1.0, CompoundPoisson{1.0, MixtureOfExponentials{{0.3, 0.7}, {0.5, 2.0}}}),
      LevyModel(0.1, 0.5, TruncatedStableLike{1.0, 1.5, 0.5, 0.1}),
      LevyModel(1.0, 0.0, TruncatedStableLike{0.5, 0.5, 1.0, 0.1}),
      LevyModel(-0.2, 0.0, TruncatedStableLike{0.5, 1.7, 0.0, 0.1}),
  };
  for (const auto& m : models) {
    CAPTURE(m.describe());
    for (double l : {0.0, 0.1, 0.7, 1.3, 4.0, 10.0}) {
      CAPTURE(l);
      const double closed = psi_complex(m, {l, 0.0}).real();
      const double quad = psi_quadrature(m, l);
      CHECK(closed == Approx(quad).epsilon(1e-8).scale(1.0));
      CHECK(psi(m, l) == Approx(quad).epsilon(1e-8).scale(1.0));
      // Finite-difference check of the derivatives.
      const double h = 1e-4;
      if (l > h) {
        const double fd1 = (psi(m, l + h) - psi(m, l - h)) / (2 * h);
        const double fd2 = (psi(m, l + h) - 2 * psi(m, l) + psi(m, l - h)) / (h * h);
        const auto d = psi_derivatives(m, l);
        CHECK(d.first == Approx(fd1).epsilon(1e-6).scale(1.0));
        CHECK(d.second == Approx(fd2).epsilon(1e-3).scale(1.0));
      }
    }
  }
}

TEST_CASE("phi inverts psi and is increasing") {
  const std::vector<LevyModel> models = {
      cp_exp_model(), LevyModel::brownian(-1.0, 1.0),
      LevyModel(0.1, 0.5, TruncatedStableLike{1.0, 1.5, 0.5, 0.1}),
      LevyModel(1.0, 0.0, TruncatedStableLike{0.5, 0.5, 1.0, 0.1})};
  for (const auto& m : models) {
    CAPTURE(m.describe());
    const auto c = characteristics(m);
    double prev = -1.0;
    for (double q : {-c.q_star_or_zero() * 0.99, -c.q_star_or_zero() * 0.5, 0.0, 0.3, 1.0, 5.0}) {
      const double p = phi(m, c, q);
      CHECK(psi(m, p) == Approx(q).epsilon(1e-10).scale(1.0));
      CHECK(p >= prev);
      prev = p;
    }
  }
}

TEST_CASE("psi is convex with psi(0) = 0") {
  const auto m = LevyModel(0.2, 1.0, CompoundPoisson{1.0, MixtureOfExponentials{{0.3, 0.7}, {0.5, 2.0}}});
  CHECK(psi(m, 0.0) == 0.0);
  for (double l = 0.1; l < 10; l += 0.37) {
    CHECK(psi(m, l) <= 0.5 * (psi(m, l - 0.05) + psi(m, l + 0.05)) + 1e-14);
  }
}

TEST_CASE("invalid models are rejected") {
  CHECK_THROWS_AS(LevyModel::brownian(-1.0, 0.0), InputError);
  CHECK_THROWS_AS(LevyModel(0.0, -1.0), InputError);
  CHECK_THROWS_AS(LevyModel(-1.0, 0.0, CompoundPoisson{1.0, ExponentialMagnitude{1.0}}), InputError);
  CHECK_THROWS_AS(LevyModel(1.0, 0.0, CompoundPoisson{-1.0, ExponentialMagnitude{1.0}}), InputError);
  CHECK_THROWS_AS(LevyModel(1.0, 0.0, CompoundPoisson{1.0, MixtureOfExponentials{{0.5}, {1.0}}}),
                  InputError);
  CHECK_THROWS_AS(LevyModel(1.0, 1.0, TruncatedStableLike{1.0, 1.0, 1.0, 0.1}), InputError);
  CHECK_THROWS_AS(LevyModel(1.0, 1.0, TruncatedStableLike{1.0, 0.5, 0.0, 0.1}), InputError);
  CHECK_THROWS_AS(psi(LevyModel::brownian(1.0, 1.0), -1.0), DomainError);
}

TEST_CASE("describe and hash are stable") {
  const auto a = cp_exp_model();
  const auto b = cp_exp_model();
  CHECK(a.describe() == b.describe());
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  CHECK(a.hash() != LevyModel::brownian(-1.0, 1.0).hash());
}

TEST_CASE("simulation parameters of stable-like jumps") {
  const TruncatedStableLike s{1.0, 1.5, 0.5, 0.1};
  const auto p = simulation_parameters(LevyModel(0.1, 0.5, s));
  CHECK(p.jump_rate > 0.0);
  CHECK(p.sigma > 0.5);
  // Mean of L_1 is preserved: drift_sim - rate * E[Y | Y >= cutoff] = Psi'(0+).
  CHECK(std::holds_alternative<TruncatedStableLike>(p.magnitudes));
}
