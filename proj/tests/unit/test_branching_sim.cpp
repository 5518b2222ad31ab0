#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "snlevy/branching_sim.hpp"
#include "snlevy/errors.hpp"

using namespace snlevy;
using doctest::Approx;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P_x(tau_0^- > t) for Brownian motion with drift mu and unit variance.
double brownian_survival(double x, double mu, double t) {
  const double s = std::sqrt(t);
  return normal_cdf((x + mu * t) / s) - std::exp(-2 * mu * x) * normal_cdf((-x + mu * t) / s);
}

BranchingConfig reference_config() {
  BranchingConfig c;
  c.model = LevyModel::brownian(-1.0, 1.0);
  c.beta = 0.25;
  c.start = 1.0;
  c.horizon = 50.0;
  c.dt = 0.02;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("deterministic ramp") {
  const PathDynamics ramp(-0.5, 0.0);
  RandomStream rng(1, 1);
  const auto r = sample_segment(ramp, 1.0, 3.0, {}, rng);
  CHECK(r.hit_lower);
  CHECK(r.hit_time == Approx(2.0).epsilon(1e-12));
  const auto s = sample_segment(PathDynamics(-0.2, 0.0), 1.0, 3.0, {}, rng);
  CHECK_FALSE(s.hit_lower);
  CHECK(s.endpoint == Approx(0.4).epsilon(1e-12));
  CHECK(s.running_max == 1.0);
  CHECK(s.running_min == Approx(0.4));
}

TEST_CASE("far start never hits zero") {
  const PathDynamics bm(0.0, 1.0);
  for (std::uint64_t k = 0; k < 200; ++k) {
    RandomStream rng(k, 1);
    CHECK_FALSE(sample_segment(bm, 1e6, 1.0, {}, rng).hit_lower);
  }
}

TEST_CASE("bridge corrections make coarse steps unbiased") {
  const PathDynamics bm(-1.0, 1.0);
  const int n = 40000;
  int alive = 0, high = 0;
  SegmentOptions opt;
  opt.dt = 0.25;
  for (int i = 0; i < n; ++i) {
    RandomStream rng(replicate_key(3, "bridge", i), 1);
    const auto r = sample_segment(bm, 1.0, 1.0, opt, rng);
    if (!r.hit_lower) ++alive;
  }
  const double p = brownian_survival(1.0, -1.0, 1.0);
  CHECK(std::abs(alive / double(n) - p) < 4 * std::sqrt(p * (1 - p) / n));

  // Free maximum of standard Brownian motion on [0, 1]: P(max >= 1) = 2(1 - N(1)).
  const PathDynamics free_bm(0.0, 1.0);
  opt.lower.reset();
  for (int i = 0; i < n; ++i) {
    RandomStream rng(replicate_key(3, "max", i), 1);
    if (sample_segment(free_bm, 0.0, 1.0, opt, rng).running_max >= 1.0) ++high;
  }
  const double q = 2 * (1 - normal_cdf(1.0));
  CHECK(std::abs(high / double(n) - q) < 4 * std::sqrt(q * (1 - q) / n));
}

TEST_CASE("jump magnitudes") {
  const TruncatedStableLike s{1.0, 1.5, 0.5, 0.1};
  const PathDynamics dyn(LevyModel(0.0, 0.5, s));
  RandomStream rng(9, 9);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double y = dyn.sample_jump(rng);
    REQUIRE(y >= 0.1);
    sum += y;
  }
  // E[Y] = int y^-a e^-ty / int y^-1-a e^-ty on [0.1, inf), by midpoint sums.
  double num = 0, den = 0;
  for (double y = 0.1 + 5e-5; y < 80; y += 1e-4) {
    const double w = std::pow(y, -2.5) * std::exp(-0.5 * y);
    num += y * w;
    den += w;
  }
  CHECK(sum / n == Approx(num / den).epsilon(0.02));
}

TEST_CASE("replicates are deterministic and independent of the worker count") {
  auto c = reference_config();
  c.lattice = {0.5, 1.0, 2.0};
  const auto a = simulate_replicates(c, 300, 1);
  const auto b = simulate_replicates(c, 300, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].extinction_time == b[i].extinction_time);
    CHECK(a[i].max_location == b[i].max_location);
    CHECK(a[i].counts == b[i].counts);
    CHECK(a[i].particles == b[i].particles);
  }
  CHECK(simulate_population(c, 17).max_location == a[17].max_location);
}

TEST_CASE("outcome invariants") {
  auto c = reference_config();
  c.lattice = {0.0, 1.0, 5.0, 49.0};
  for (const auto& o : simulate_replicates(c, 500)) {
    CHECK(o.max_location >= c.start);
    if (o.status == OutcomeStatus::Extinct) CHECK(o.counts.back() == 0);
    CHECK(o.counts[0] == 1);
  }
}

TEST_CASE("vanishing branching rate reduces to one particle") {
  auto c = reference_config();
  c.beta = 1e-9;
  const int n = 10000;
  double sum = 0, sum2 = 0;
  for (const auto& o : simulate_replicates(c, n)) {
    REQUIRE(o.status == OutcomeStatus::Extinct);
    sum += o.extinction_time;
    sum2 += o.extinction_time * o.extinction_time;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) < 3 * se);
}

TEST_CASE("free branching is a Yule process") {
  BranchingConfig c;
  c.model = LevyModel::brownian(-1.0, 1.0);
  c.barrier = BarrierKind::Free;
  c.beta = 0.5;
  c.start = 0.0;
  c.horizon = 2.0;
  c.dt = 0.02;
  c.lattice = {1.0, 2.0 - 1e-12};
  const int n = 10000;
  double sum = 0;
  for (const auto& o : simulate_replicates(c, n)) sum += o.counts[1];
  const double mean = std::exp(1.0);
  const double se = std::sqrt(std::exp(2.0) - std::exp(1.0)) / std::sqrt(n);
  CHECK(std::abs(sum / n - mean) < 3 * se);
}

TEST_CASE("lowering the drift never raises the maximum") {
  auto hi = reference_config();
  auto lo = hi;
  lo.model = LevyModel::brownian(-1.3, 1.0);
  for (std::uint64_t i = 0; i < 300; ++i) {
    CHECK(simulate_population(lo, i).max_location <= simulate_population(hi, i).max_location);
  }
}

TEST_CASE("supercritical survival and unreachable barrier") {
  auto c = reference_config();
  c.model = LevyModel::brownian(1.0, 1.0);
  c.horizon = 10.0;
  c.particle_cap = 100000;
  const int n = 2000;
  int censored = 0;
  for (const auto& o : simulate_replicates(c, n)) {
    if (o.status != OutcomeStatus::Extinct) ++censored;
  }
  // P(tau = inf) = Psi'(0+) W(1) = 1 - e^-2 bounds the survival fraction from below.
  const double bound = 1.0 - std::exp(-2.0);
  CHECK(censored / double(n) > bound - 3 * std::sqrt(bound * (1 - bound) / n));

  auto far = reference_config();
  far.start = 50.0;
  far.horizon = 1.0;
  far.dt = 0.01;
  for (const auto& o : simulate_replicates(far, 200)) CHECK(o.status == OutcomeStatus::CensoredHorizon);
}

TEST_CASE("cap hit is reported") {
  auto c = reference_config();
  c.model = LevyModel::brownian(1.0, 1.0);
  c.beta = 2.0;
  c.particle_cap = 50;
  const auto o = simulate_replicates(c, 20);
  int caps = 0;
  for (const auto& r : o) caps += r.status == OutcomeStatus::CapHit;
  CHECK(caps > 0);
  const auto tail = max_tail(o, {1.0, 2.0});
  CHECK(tail.excluded == static_cast<std::uint64_t>(caps));
  CHECK(tail.n + tail.excluded == 20);
}

TEST_CASE("tail estimates") {
  const auto t = tail_from_counts("t", {1, 2, 3}, {90, 40, 0}, 100);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t.ci_lo[i] <= t.survival[i]);
    CHECK(t.survival[i] <= t.ci_hi[i]);
  }
  CHECK(t.survival[0] == 0.9);
  // Wilson interval for 0 of 100: upper limit z^2/(n+z^2).
  CHECK(t.ci_hi[2] == Approx(3.8414588 / 103.8414588).epsilon(1e-6));

  auto c = reference_config();
  const auto tail = extinction_tail(simulate_replicates(c, 2000), {0.5, 1, 2, 4, 8});
  for (std::size_t i = 1; i < tail.survival.size(); ++i) CHECK(tail.survival[i] <= tail.survival[i - 1]);
  c.horizon = 2.0;
  c.dt = 0.01;
  CHECK_THROWS_AS(extinction_tail(simulate_replicates(c, 200), {3.0}), InputError);
}

TEST_CASE("config validation") {
  auto c = reference_config();
  c.dt = 1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = reference_config();
  c.start = -1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("expected count identity") {
  auto c = reference_config();
  c.lattice = {0.5, 1.0, 1.5, 2.0, 3.0};
  const auto rep = expected_count_check(c, 20000);
  CHECK(rep.pass);
  c.beta = 0.0;
  CHECK(expected_count_check(c, 5000).pass);
}

TEST_CASE("exit laws") {
  const auto rep = exit_law_checks(LevyModel::brownian(-1.0, 1.0), 1.0, 2.0, 0.1, 0.25, 20000, 0.02, 11);
  CHECK(rep.one_sided.target == Approx(std::exp(-(1 + std::sqrt(1.2)))).epsilon(1e-12));
  CHECK(rep.pass);
  const auto up = exit_law_checks(LevyModel::brownian(1.0, 1.0), 1.0, 2.0, 0.0, 0.0, 5000, 0.02, 12);
  CHECK(up.one_sided.estimate == 1.0);
  CHECK(up.two_sided.target == Approx((1 - std::exp(-2.0)) / (1 - std::exp(-4.0))));
  CHECK(up.pass);
  const LevyModel cp(1.0, 0.5, CompoundPoisson{2.0, ExponentialMagnitude{1.0}});
  CHECK(exit_law_checks(cp, 1.0, 2.0, 0.2, 0.3, 20000, 0.02, 13).pass);
}

TEST_CASE("Kendall identity") {
  const auto tilted = LevyModel::brownian(std::sqrt(0.5), 1.0);
  const auto rep = kendall_check(tilted, 1.0, {0.25, 0.5, 1, 1.5, 2, 3, 4, 6}, 40000, 0.01, 21);
  CHECK(rep.pass);
  const LevyModel cp(1.5, 0.5, CompoundPoisson{1.0, ExponentialMagnitude{0.5}});
  CHECK(kendall_check(cp, 1.0, {0.25, 0.5, 1, 1.5, 2, 3}, 40000, 0.01, 22).pass);
  // No Gaussian part: L_t has an atom at t, right on the edge t = 1.
  const LevyModel pure(1.0, 0.0, CompoundPoisson{2.0, ExponentialMagnitude{1.0}});
  const auto jumps = kendall_check(pure, 1.0, {0.25, 0.5, 1, 1.5, 2, 3, 4, 6}, 40000, 0.01, 23);
  CHECK(jumps.pass);
  CHECK(jumps.cells[1].target == Approx(0.0));
  CHECK_THROWS_AS(kendall_check(LevyModel(-1.0, 0.0, CompoundPoisson{1.0, ExponentialMagnitude{1.0}}), 1.0,
                                {0.5, 1, 2}, 100, 0.01, 24),
                  InputError);
}

TEST_CASE("chunked max tail equals the stored-outcome tail") {
  BranchingConfig cfg;
  cfg.model = LevyModel::brownian(-1.0, 1.0);
  cfg.beta = 0.25;
  cfg.start = 1.0;
  cfg.horizon = 50.0;
  cfg.dt = 0.05;
  cfg.seed = 17;
  cfg.stop_at_max = 4.0;
  const std::vector<double> levels{1.5, 2.0, 3.0, 4.0};
  const auto a = max_tail(simulate_replicates(cfg, 3000, 1), levels);
  const auto b = simulate_max_tail(cfg, 3000, levels, 2);
  CHECK(a.counts == b.counts);
  CHECK(a.n == b.n);
  CHECK(a.excluded == b.excluded);
}
