#include "snlevy/branching_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include <boost/math/distributions/chi_squared.hpp>

#include "snlevy/errors.hpp"
#include "snlevy/parallel.hpp"
#include "snlevy/scale_fn.hpp"

namespace snlevy {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sample_law(const NegativeJumpLaw& law, RandomStream& rng) {
  if (const auto* e = std::get_if<ExponentialMagnitude>(&law)) return -e->mean * std::log(rng.uniform());
  if (const auto* f = std::get_if<FixedMagnitude>(&law)) return f->size;
  const auto& m = std::get<MixtureOfExponentials>(law);
  double u = rng.uniform();
  std::size_t i = 0;
  for (; i + 1 < m.weights.size(); ++i) {
    if (u < m.weights[i]) break;
    u -= m.weights[i];
  }
  return -m.means[i] * std::log(rng.uniform());
}

// Density proportional to y^(-1-alpha) e^(-tempering y) on [cutoff, inf):
// Pareto proposal, exponential acceptance.
double sample_stable_tail(const TruncatedStableLike& s, RandomStream& rng) {
  for (;;) {
    const double y = s.cutoff * std::pow(rng.uniform(), -1.0 / s.alpha);
    if (s.tempering == 0.0 || rng.uniform() < std::exp(-s.tempering * (y - s.cutoff))) return y;
  }
}

}  // namespace

PathDynamics::PathDynamics(const LevyModel& model) {
  const auto p = simulation_parameters(model);
  drift_ = p.drift;
  sigma_ = p.sigma;
  jump_rate_ = p.jump_rate;
  magnitudes_ = p.magnitudes;
}

PathDynamics::PathDynamics(double drift, double sigma, double jump_rate, Magnitudes magnitudes)
    : drift_(drift), sigma_(sigma), jump_rate_(jump_rate), magnitudes_(std::move(magnitudes)) {
  if (!(sigma >= 0.0) || !(jump_rate >= 0.0)) throw InputError("sigma and jump rate must be >= 0");
  if (jump_rate > 0.0 && std::holds_alternative<NoJumps>(magnitudes_)) {
    throw InputError("positive jump rate needs a magnitude law");
  }
}

double PathDynamics::sample_jump(RandomStream& rng) const {
  if (const auto* law = std::get_if<NegativeJumpLaw>(&magnitudes_)) return sample_law(*law, rng);
  if (const auto* s = std::get_if<TruncatedStableLike>(&magnitudes_)) return sample_stable_tail(*s, rng);
  return 0.0;
}

SegmentResult sample_segment(const PathDynamics& dyn, double start, double duration,
                             const SegmentOptions& opt, RandomStream& rng) {
  SegmentResult r;
  r.endpoint = r.running_min = r.running_max = start;
  const double d = dyn.drift();
  const double sigma = dyn.sigma();
  const double var = sigma * sigma;
  const double dt = std::max(opt.dt, 1e-12);
  const bool sample_lower = opt.lower_mode == BarrierMode::Sample;

  double y = start;
  double t = 0.0;
  double next_jump = t + rng.exponential(dyn.jump_rate());

  auto stop_lower = [&](double when, double where) {
    r.hit_lower = true;
    r.hit_time = when;
    r.elapsed = when;
    r.endpoint = where;
    r.running_min = std::min(r.running_min, where);
  };

  while (t < duration) {
    const double t_end = std::min(duration, next_jump);
    while (t < t_end) {
      double step = sigma > 0.0 ? std::min(dt, t_end - t) : t_end - t;
      if (t_end - t - step < 1e-9 * dt) step = t_end - t;
      const double y2 = y + d * step + (sigma > 0.0 ? sigma * std::sqrt(step) * rng.normal() : 0.0);

      if (opt.lower) {
        const double level = *opt.lower;
        if (y2 <= level) {
          if (!sample_lower) r.log_weight = -kInf;
          stop_lower(t + step * (y - level) / (y - y2), level);
          r.running_max = std::max(r.running_max, y);
          return r;
        }
        if (sigma > 0.0) {
          const double u = rng.uniform();
          const double expo = 2.0 * (y - level) * (y2 - level) / (var * step);
          if (expo < 40.0) {
            const double p = std::exp(-expo);
            if (sample_lower) {
              if (u < p) {
                stop_lower(t + 0.5 * step, level);
                r.running_max = std::max(r.running_max, y);
                return r;
              }
            } else {
              r.log_weight += std::log1p(-p);
            }
          }
        }
      }
      if (opt.upper) {
        const double level = *opt.upper;
        bool crossed = y2 >= level;
        double when = crossed ? t + step * (level - y) / (y2 - y) : kInf;
        if (!crossed && sigma > 0.0) {
          const double u = rng.uniform();
          const double expo = 2.0 * (level - y) * (level - y2) / (var * step);
          if (expo < 40.0 && u < std::exp(-expo)) {
            crossed = true;
            when = t + 0.5 * step;
          }
        }
        if (crossed) {
          r.hit_upper = true;
          r.upper_time = when;
          r.elapsed = when;
          r.endpoint = level;
          r.running_max = std::max(r.running_max, level);
          return r;
        }
      }
      double top = std::max(y, y2);
      if (opt.bridge_max && sigma > 0.0) {
        const double u = rng.uniform();
        const double gap = y2 - y;
        top = 0.5 * (y + y2 + std::sqrt(gap * gap - 2.0 * var * step * std::log(u)));
      }
      r.running_max = std::max(r.running_max, top);
      r.running_min = std::min(r.running_min, y2);
      y = y2;
      t += step;
    }
    if (t >= duration) break;
    // jump at t == next_jump
    y -= dyn.sample_jump(rng);
    r.running_min = std::min(r.running_min, y);
    if (opt.lower && y <= *opt.lower) {
      if (!sample_lower) r.log_weight = -kInf;
      stop_lower(t, y);
      return r;
    }
    next_jump = t + rng.exponential(dyn.jump_rate());
  }
  r.endpoint = y;
  r.elapsed = duration;
  return r;
}

// ---------------------------------------------------------------------------

void BranchingConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InputError("beta must be finite and >= 0");
  if (!(start > 0.0) && barrier == BarrierKind::Absorbed) throw InputError("start must be > 0");
  if (!std::isfinite(start)) throw InputError("start must be finite");
  if (!(horizon > 0.0)) throw InputError("horizon must be > 0");
  if (!(dt > 0.0) || dt > horizon / 100.0) throw InputError("dt must lie in (0, horizon/100]");
  if (particle_cap < 1) throw InputError("particle_cap must be >= 1");
  if (!(prune_depth > 0.0)) throw InputError("prune_depth must be > 0");
  if (!std::is_sorted(lattice.begin(), lattice.end())) throw InputError("lattice must be sorted");
  if (stop_at_max && !(*stop_at_max > start)) throw InputError("stop_at_max must exceed start");
}

const char* to_string(OutcomeStatus s) noexcept {
  switch (s) {
    case OutcomeStatus::Extinct:
      return "extinct";
    case OutcomeStatus::CensoredHorizon:
      return "censored_horizon";
    case OutcomeStatus::CapHit:
      return "cap_hit";
    case OutcomeStatus::MaxReached:
      return "max_reached";
  }
  return "unknown";
}

namespace {

struct Particle {
  double birth;
  double position;
  std::uint64_t stream;
};

struct LaterBirth {
  bool operator()(const Particle& a, const Particle& b) const noexcept {
    if (a.birth != b.birth) return a.birth > b.birth;
    return a.stream > b.stream;
  }
};

}  // namespace

PopulationOutcome simulate_population(const BranchingConfig& cfg, const PathDynamics& dyn,
                                      std::uint64_t replicate) {
  const std::uint64_t key = replicate_key(cfg.seed, cfg.purpose, replicate);
  SegmentOptions opt;
  opt.dt = cfg.dt;
  opt.bridge_max = cfg.bridge_max;
  opt.upper = cfg.stop_at_max;
  if (cfg.barrier == BarrierKind::Absorbed) {
    opt.lower = 0.0;
  } else if (std::isfinite(cfg.prune_depth)) {
    opt.lower = cfg.start - cfg.prune_depth;
  } else {
    opt.lower.reset();
  }

  PopulationOutcome out;
  out.max_location = cfg.start;
  out.counts.assign(cfg.lattice.size(), 0);
  bool censored = false;
  double zeta = 0.0;

  std::priority_queue<Particle, std::vector<Particle>, LaterBirth> queue;
  queue.push({0.0, cfg.start, 1});
  while (!queue.empty()) {
    if (queue.size() > cfg.particle_cap) {
      out.status = OutcomeStatus::CapHit;
      out.extinction_time = queue.top().birth;
      return out;
    }
    const Particle p = queue.top();
    queue.pop();
    ++out.particles;
    RandomStream rng(key, p.stream);
    const double death = p.birth + rng.exponential(cfg.beta);
    const double end = std::min(death, cfg.horizon);
    const auto seg = sample_segment(dyn, p.position, end - p.birth, opt, rng);
    out.max_location = std::max(out.max_location, seg.running_max);

    const double stop = p.birth + seg.elapsed;
    auto first = std::lower_bound(cfg.lattice.begin(), cfg.lattice.end(), p.birth);
    // Particles still alive at the horizon count at a lattice time equal to it.
    const bool survives = !seg.hit_lower && !seg.hit_upper && death >= cfg.horizon;
    auto last = survives ? std::upper_bound(first, cfg.lattice.end(), stop) : std::lower_bound(first, cfg.lattice.end(), stop);
    for (auto it = first; it != last; ++it) ++out.counts[it - cfg.lattice.begin()];

    if (seg.hit_upper) {
      out.status = OutcomeStatus::MaxReached;
      out.extinction_time = stop;
      return out;
    }
    if (seg.hit_lower) {
      zeta = std::max(zeta, stop);
      continue;
    }
    if (death < cfg.horizon) {
      queue.push({death, seg.endpoint, child_stream(p.stream, 0)});
      queue.push({death, seg.endpoint, child_stream(p.stream, 1)});
    } else {
      censored = true;
    }
  }
  out.status = censored ? OutcomeStatus::CensoredHorizon : OutcomeStatus::Extinct;
  out.extinction_time = censored ? cfg.horizon : zeta;
  return out;
}

PopulationOutcome simulate_population(const BranchingConfig& config, std::uint64_t replicate) {
  config.validate();
  return simulate_population(config, PathDynamics(config.model), replicate);
}

std::vector<PopulationOutcome> simulate_replicates(const BranchingConfig& config, std::size_t n,
                                                   unsigned jobs) {
  config.validate();
  const PathDynamics dyn(config.model);
  std::vector<PopulationOutcome> out(n);
  parallel_for(n, jobs, [&](std::size_t i) { out[i] = simulate_population(config, dyn, i); });
  return out;
}

// ---------------------------------------------------------------------------

Interval wilson(std::uint64_t k, std::uint64_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {k == 0 ? 0.0 : std::max(0.0, center - half), k == n ? 1.0 : std::min(1.0, center + half)};
}

double TailEstimate::se(std::size_t i) const {
  const double p = survival[i];
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

TailEstimate tail_from_counts(std::string axis, std::vector<double> thresholds,
                              std::vector<std::uint64_t> counts, std::uint64_t n,
                              std::uint64_t excluded) {
  if (thresholds.size() != counts.size()) throw InputError("thresholds and counts differ in length");
  TailEstimate t;
  t.axis = std::move(axis);
  t.thresholds = std::move(thresholds);
  t.counts = std::move(counts);
  t.n = n;
  t.excluded = excluded;
  for (auto k : t.counts) {
    const auto ci = wilson(k, n);
    t.survival.push_back(n ? static_cast<double>(k) / static_cast<double>(n) : 0.0);
    t.ci_lo.push_back(ci.lo);
    t.ci_hi.push_back(ci.hi);
  }
  return t;
}

TailEstimate extinction_tail(const std::vector<PopulationOutcome>& outcomes,
                             const std::vector<double>& thresholds) {
  std::vector<std::uint64_t> counts(thresholds.size(), 0);
  std::uint64_t n = 0, excluded = 0;
  for (const auto& o : outcomes) {
    if (o.status == OutcomeStatus::CapHit) {
      ++excluded;
      continue;
    }
    if (o.status == OutcomeStatus::MaxReached) {
      throw InputError("extinction tail needs replicates run without stop_at_max");
    }
    ++n;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (o.status == OutcomeStatus::CensoredHorizon && thresholds[i] > o.extinction_time) {
        throw InputError("extinction threshold beyond the censoring horizon");
      }
      if (o.status == OutcomeStatus::CensoredHorizon || o.extinction_time > thresholds[i]) ++counts[i];
    }
  }
  return tail_from_counts("t", thresholds, std::move(counts), n, excluded);
}

TailEstimate max_tail(const std::vector<PopulationOutcome>& outcomes,
                      const std::vector<double>& thresholds) {
  std::vector<std::uint64_t> counts(thresholds.size(), 0);
  std::uint64_t n = 0, excluded = 0;
  for (const auto& o : outcomes) {
    if (o.status == OutcomeStatus::CapHit) {
      ++excluded;
      continue;
    }
    ++n;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (o.max_location >= thresholds[i]) ++counts[i];
    }
  }
  return tail_from_counts("x", thresholds, std::move(counts), n, excluded);
}

TailEstimate simulate_max_tail(const BranchingConfig& config, std::size_t n,
                               const std::vector<double>& thresholds, unsigned jobs) {
  config.validate();
  const PathDynamics dyn(config.model);
  constexpr std::size_t kChunk = 1 << 20;
  std::vector<double> maxima(std::min(n, kChunk));
  std::vector<std::uint64_t> counts(thresholds.size(), 0);
  std::uint64_t used = 0, excluded = 0;
  for (std::size_t first = 0; first < n; first += kChunk) {
    const std::size_t size = std::min(kChunk, n - first);
    parallel_for(size, jobs, [&](std::size_t i) {
      const auto o = simulate_population(config, dyn, first + i);
      maxima[i] = o.status == OutcomeStatus::CapHit ? std::numeric_limits<double>::quiet_NaN() : o.max_location;
    });
    for (std::size_t i = 0; i < size; ++i) {
      if (std::isnan(maxima[i])) {
        ++excluded;
        continue;
      }
      ++used;
      for (std::size_t k = 0; k < thresholds.size(); ++k) {
        if (maxima[i] >= thresholds[k]) ++counts[k];
      }
    }
  }
  return tail_from_counts("x", thresholds, std::move(counts), used, excluded);
}

ZScore make_z(double estimate, double target, double se) {
  ZScore z{estimate, target, se, 0.0};
  if (se > 0.0) {
    z.z = (estimate - target) / se;
  } else {
    z.z = estimate == target ? 0.0 : std::copysign(kInf, estimate - target);
  }
  return z;
}

namespace {

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double se() const {
    const double m = mean();
    const double var = std::max(0.0, sum_sq / static_cast<double>(n) - m * m);
    return std::sqrt(var / static_cast<double>(n));
  }
};

}  // namespace

ExpectedCountReport expected_count_check(const BranchingConfig& config, std::size_t n, unsigned jobs) {
  if (config.lattice.empty()) throw InputError("expected_count_check needs lattice times");
  if (config.barrier != BarrierKind::Absorbed) throw InputError("expected_count_check needs an absorbing barrier");
  const auto pops = simulate_replicates(config, n, jobs);

  const PathDynamics dyn(config.model);
  const double t_max = config.lattice.back();
  std::vector<double> hit(n);
  const std::uint64_t seed = config.seed;
  const std::string purpose = config.purpose + "/single";
  parallel_for(n, jobs, [&](std::size_t i) {
    RandomStream rng(replicate_key(seed, purpose, i), 1);
    SegmentOptions opt;
    opt.dt = config.dt;
    opt.bridge_max = false;
    hit[i] = sample_segment(dyn, config.start, t_max, opt, rng).hit_time;
  });

  ExpectedCountReport rep;
  rep.times = config.lattice;
  rep.n = n;
  rep.pass = true;
  for (std::size_t k = 0; k < config.lattice.size(); ++k) {
    const double t = config.lattice[k];
    Moments counts;
    std::size_t alive = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pops[i].status == OutcomeStatus::CapHit) throw NumericError("cap hit in expected_count_check", 0);
      counts.add(pops[i].counts[k]);
      if (hit[i] > t) ++alive;
    }
    const double p = static_cast<double>(alive) / static_cast<double>(n);
    const double growth = std::exp(config.beta * t);
    const double se_p = growth * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    const double se = std::hypot(counts.se(), se_p);
    rep.rows.push_back(make_z(counts.mean(), growth * p, se));
    if (std::abs(rep.rows.back().z) > 3.0) rep.pass = false;
  }
  return rep;
}

ExitLawReport exit_law_checks(const LevyModel& model, double a, double x, double q, double beta,
                              std::size_t n, double dt, std::uint64_t seed, unsigned jobs) {
  if (!(0.0 < a && a < x)) throw InputError("exit_law_checks needs 0 < a < x");
  if (!(q >= 0.0) || !(beta >= 0.0)) throw InputError("exit_law_checks needs q >= 0 and beta >= 0");
  const PathDynamics dyn(model);
  const auto chars = characteristics(model);
  const double phi_q = phi(model, chars, q);

  // One-sided: E[e^(-q tau); tau < inf]. Given L_t = y before passage, the
  // remaining contribution is e^(-q t) e^(-Phi(q)(x - y)); paths stop once
  // that bound drops below 1e-12.
  std::vector<double> one(n), two(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    RandomStream rng(replicate_key(seed, "exit/one-sided", i), 1);
    SegmentOptions opt;
    opt.dt = dt;
    opt.lower.reset();
    opt.upper = x;
    opt.bridge_max = false;
    double y = a, t = 0.0;
    one[i] = 0.0;
    for (;;) {
      const auto seg = sample_segment(dyn, y, 1.0, opt, rng);
      if (seg.hit_upper) {
        one[i] = std::exp(-q * (t + seg.upper_time));
        break;
      }
      t += 1.0;
      y = seg.endpoint;
      if (-q * t - phi_q * (x - y) < std::log(1e-12)) break;
      if (t > 1e6) throw NumericError("one-sided exit did not resolve", t);
    }
  });
  parallel_for(n, jobs, [&](std::size_t i) {
    RandomStream rng(replicate_key(seed, "exit/two-sided", i), 1);
    SegmentOptions opt;
    opt.dt = dt;
    opt.upper = x;
    opt.bridge_max = false;
    const double life = rng.exponential(beta);
    if (!std::isfinite(life)) {
      // beta = 0: run until one barrier is reached.
      for (double y = a;;) {
        const auto seg = sample_segment(dyn, y, 10.0, opt, rng);
        if (seg.hit_upper || seg.hit_lower) {
          two[i] = seg.hit_upper ? 1.0 : 0.0;
          return;
        }
        y = seg.endpoint;
      }
    }
    two[i] = sample_segment(dyn, a, life, opt, rng).hit_upper ? 1.0 : 0.0;
  });

  Moments m1, m2;
  for (std::size_t i = 0; i < n; ++i) {
    m1.add(one[i]);
    m2.add(two[i]);
  }
  double ratio;
  if (model.is_brownian()) {
    ratio = brownian_scale(model.drift(), model.gaussian(), beta, a) /
            brownian_scale(model.drift(), model.gaussian(), beta, x);
  } else {
    const auto grid = w_q_grid(model, beta, x, x / 512.0);
    ratio = grid.at(a) / grid.values.back();
  }
  ExitLawReport rep;
  rep.one_sided = make_z(m1.mean(), std::exp(-phi_q * (x - a)), m1.se());
  rep.two_sided = make_z(m2.mean(), ratio, m2.se());
  rep.n = n;
  rep.pass = std::abs(rep.one_sided.z) <= 3.0 && std::abs(rep.two_sided.z) <= 3.0;
  return rep;
}

KendallReport kendall_check(const LevyModel& model, double level, std::vector<double> edges,
                            std::size_t n, double dt, std::uint64_t seed, unsigned jobs) {
  if (!(level > 0.0)) throw InputError("kendall_check needs level > 0");
  if (edges.size() < 3 || !std::is_sorted(edges.begin(), edges.end()) || !(edges.front() > 0.0)) {
    throw InputError("kendall_check needs >= 3 increasing positive cell edges");
  }
  const PathDynamics dyn(model);
  const std::size_t cells = edges.size() - 1;
  const double t0 = edges.front(), t1 = edges.back();

  std::vector<double> passage(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    RandomStream rng(replicate_key(seed, "kendall/passage", i), 1);
    SegmentOptions opt;
    opt.dt = dt;
    opt.lower.reset();
    opt.upper = level;
    opt.bridge_max = false;
    passage[i] = sample_segment(dyn, 0.0, t1, opt, rng).upper_time;
  });
  // Marginal side, one row of per-cell samples per replicate. With a Gaussian
  // part: t ~ U(t0, t1) and the density of L_t at the level given everything
  // before the last step, which is exact. Without one the path is linear
  // between jumps and each upward crossing of the level at time s contributes
  // (level / s) / drift to the cell holding s.
  const double sigma = dyn.sigma();
  if (sigma == 0.0 && !(dyn.drift() > 0.0)) {
    throw InputError("kendall_check needs a Gaussian part or a positive drift");
  }
  std::vector<double> value(n * cells, 0.0);
  const auto cell_of = [&](double t) {
    return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), t) - edges.begin()) - 1;
  };
  parallel_for(n, jobs, [&](std::size_t i) {
    RandomStream rng(replicate_key(seed, "kendall/marginal", i), 1);
    double* row = value.data() + i * cells;
    if (sigma > 0.0) {
      const double t = t0 + (t1 - t0) * rng.uniform();
      SegmentOptions opt;
      opt.dt = dt;
      opt.lower.reset();
      opt.bridge_max = false;
      const double last = std::min(dt, t);
      double y = t > last ? sample_segment(dyn, 0.0, t - last, opt, rng).endpoint : 0.0;
      if (dyn.jump_rate() > 0.0) {
        for (double s = rng.exponential(dyn.jump_rate()); s < last; s += rng.exponential(dyn.jump_rate())) {
          y -= dyn.sample_jump(rng);
        }
      }
      const double sd = sigma * std::sqrt(last);
      const double z = (level - y - dyn.drift() * last) / sd;
      const std::size_t c = std::min(cell_of(t), cells - 1);
      row[c] = (t1 - t0) * (level / t) * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
      return;
    }
    const double d = dyn.drift(), rate = dyn.jump_rate();
    double s = 0.0, y = 0.0;
    while (s < t1) {
      const double next = rate > 0.0 ? std::min(t1, s + rng.exponential(rate)) : t1;
      if (y <= level && level < y + d * (next - s)) {
        const double tc = s + (level - y) / d;
        if (tc >= t0) row[cell_of(tc)] += (level / tc) / d;
      }
      y += d * (next - s);
      s = next;
      if (s < t1) y -= dyn.sample_jump(rng);
    }
  });

  KendallReport rep;
  rep.level = level;
  rep.cell_edges = edges;
  rep.n = n;
  for (std::size_t c = 0; c < cells; ++c) {
    Moments a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.add(passage[i] >= edges[c] && passage[i] < edges[c + 1] ? 1.0 : 0.0);
      b.add(value[i * cells + c]);
    }
    const double se = std::hypot(a.se(), b.se());
    rep.cells.push_back(make_z(a.mean(), b.mean(), se));
    rep.chi_square += rep.cells.back().z * rep.cells.back().z;
  }
  const boost::math::chi_squared dist(static_cast<double>(cells));
  rep.p_value = boost::math::cdf(boost::math::complement(dist, rep.chi_square));
  rep.pass = rep.p_value >= 0.0027;
  return rep;
}

}  // namespace snlevy
