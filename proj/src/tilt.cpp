#include "snlevy/tilt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "snlevy/errors.hpp"
#include "snlevy/parallel.hpp"

namespace snlevy {
namespace {

NegativeJumpLaw tilt_law(const NegativeJumpLaw& law, double phi, double& rate) {
  if (const auto* e = std::get_if<ExponentialMagnitude>(&law)) {
    const double k = 1.0 + phi * e->mean;
    rate /= k;
    return ExponentialMagnitude{e->mean / k};
  }
  if (const auto* f = std::get_if<FixedMagnitude>(&law)) {
    rate *= std::exp(-phi * f->size);
    return *f;
  }
  const auto& m = std::get<MixtureOfExponentials>(law);
  MixtureOfExponentials out;
  double total = 0.0;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    const double k = 1.0 + phi * m.means[i];
    out.weights.push_back(m.weights[i] / k);
    out.means.push_back(m.means[i] / k);
    total += m.weights[i] / k;
  }
  for (double& w : out.weights) w /= total;
  rate *= total;
  return out;
}

}  // namespace

TiltedModel make_tilted(const LevyModel& model, double c) {
  const auto chars = characteristics(model);
  const double phi_c = phi(model, chars, c);
  const double eta = model.gaussian();
  double drift = model.drift() + eta * eta * phi_c;

  JumpPart jumps = NoJumps{};
  if (const auto* cp = std::get_if<CompoundPoisson>(&model.jumps())) {
    double rate = cp->rate;
    auto law = tilt_law(cp->jump_law, phi_c, rate);
    jumps = CompoundPoisson{rate, std::move(law)};
  } else if (const auto* s = std::get_if<TruncatedStableLike>(&model.jumps())) {
    // The compensator on y < 1 picks up int_0^1 y (1 - e^(-phi y)) nu(dy).
    if (phi_c > 0.0) {
      boost::math::quadrature::tanh_sinh<double> integrator;
      auto f = [&](double y) {
        return std::pow(y, 1.0 - s->alpha) * (-std::expm1(-phi_c * y) / y) *
               std::exp(-s->tempering * y);
      };
      drift += s->intensity * integrator.integrate(f, 0.0, 1.0, 1e-13);
    }
    jumps = TruncatedStableLike{s->intensity, s->alpha, s->tempering + phi_c, s->cutoff};
  }
  return TiltedModel{model, c, phi_c, LevyModel(drift, eta, std::move(jumps))};
}


namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  MeanSe r;
  r.mean = sum / n;
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return r;
}

}  // namespace

ConditionedPathSampler::ConditionedPathSampler(const LevyModel& model, double beta,
                                               ConditionedWeighting mode, double grid_x_max,
                                               double grid_h)
    : tilted_(make_tilted(model, -beta)), dynamics_(tilted_.model), mode_(mode) {
  const auto chars = characteristics(tilted_.model);
  const double slope0 = chars.psi_prime_at_zero;
  if (tilted_.model.is_brownian()) {
    closed_form_ = true;
  } else {
    grid_ = w_zero_grid(tilted_.model, grid_x_max, grid_h);
  }
  if (slope0 > 1e-12) {
    h_sup_ = 1.0 / slope0;
    if (!closed_form_) h_sup_ = std::max(h_sup_, *std::max_element(grid_.values.begin(), grid_.values.end()));
  } else {
    h_sup_ = kInf;
    const auto base = characteristics(model);
    slope_ = 2.0 / base.psi_second_at_star.value_or(1.0);
  }
  if (mode_ == ConditionedWeighting::RejectionAtHorizon && !std::isfinite(h_sup_)) {
    throw InputError("rejection weighting needs a bounded h-function (beta < q*)");
  }
}

double ConditionedPathSampler::log_h(double x) const {
  if (x < 0.0) return -kInf;
  if (closed_form_) {
    if (x == 0.0) return -kInf;
    return std::log(brownian_scale(tilted_.model.drift(), tilted_.model.gaussian(), 0.0, x));
  }
  double w;
  if (x <= grid_.x_max()) {
    w = grid_.at(x);
  } else if (std::isfinite(h_sup_)) {
    w = grid_.values.back();
  } else {
    w = grid_.values.back() + slope_ * (x - grid_.x_max());
  }
  return w > 0.0 ? std::log(w) : -kInf;
}

ConditionedPath sample_conditioned(const ConditionedPathSampler& sampler, double a, double horizon,
                                   const ConditionedOptions& options, RandomStream& rng) {
  if (!(options.floor >= 0.0) || !(a > options.floor || (a == 0.0 && std::isfinite(sampler.log_h(0.0))))) {
    throw InputError("sample_conditioned: need a > floor >= 0");
  }
  if (!(horizon > 0.0) || !(options.dt > 0.0)) throw InputError("sample_conditioned: need horizon, dt > 0");
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / options.dt - 1e-9));
  const double dt = horizon / static_cast<double>(steps);
  SegmentOptions seg;
  seg.dt = dt;
  seg.lower = options.floor;
  seg.lower_mode = BarrierMode::Weight;
  seg.bridge_max = false;

  ConditionedPath path;
  path.dt = dt;
  path.positions.reserve(steps + 1);
  path.positions.push_back(a);
  path.running_min = a;
  double pos = a;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto r = sample_segment(sampler.dynamics(), pos, dt, seg, rng);
    path.log_weight += r.log_weight;
    path.running_min = std::min(path.running_min, r.running_min);
    pos = r.endpoint;
    path.positions.push_back(pos);
    if (r.hit_lower) {
      path.log_weight = -kInf;
      path.positions.resize(steps + 1, pos);
      break;
    }
  }
  if (std::isfinite(path.log_weight)) {
    const double lh = sampler.log_h(pos) - sampler.log_h(a);
    if (sampler.mode() == ConditionedWeighting::ImportanceWeights) {
      path.log_weight += lh;
    } else {
      const double accept = path.log_weight + sampler.log_h(pos) - std::log(sampler.h_sup());
      path.log_weight = std::log(rng.uniform()) < accept ? std::log(sampler.h_sup()) - sampler.log_h(a) : -kInf;
    }
  }
  return path;
}

std::vector<double> sample_conditioned_brownian_from_zero(double mu, double sigma, double horizon,
                                                          double dt, RandomStream& rng) {
  if (!(mu >= 0.0) || !(sigma > 0.0) || !(horizon > 0.0) || !(dt > 0.0)) {
    throw InputError("conditioned Brownian path: need mu >= 0, sigma > 0, horizon > 0, dt > 0");
  }
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  const double step = horizon / static_cast<double>(steps);
  const double sd = sigma * std::sqrt(step);
  const double var_step = sigma * sigma * step;
  std::vector<double> y(steps + 1, 0.0);
  double b = 0.0, m = 0.0;
  for (std::size_t k = 1; k <= steps; ++k) {
    const double b2 = b + mu * step + sd * rng.normal();
    const double gap = b2 - b;
    m = std::max(m, 0.5 * (b + b2 + std::sqrt(gap * gap - 2.0 * var_step * std::log(rng.uniform()))));
    b = b2;
    y[k] = 2.0 * m - b;
  }
  return y;
}

MeasureChangeReport measure_change_check(const LevyModel& model, double c, double a, double t,
                                         std::size_t n, double dt, std::uint64_t seed, unsigned jobs) {
  if (n < 2 || !(t > 0.0) || !(dt > 0.0)) throw InputError("measure_change_check: need n >= 2, t > 0, dt > 0");
  const auto tilted = make_tilted(model, c);
  const PathDynamics base(model), shifted(tilted.model);
  SegmentOptions seg;
  seg.dt = dt;
  seg.lower.reset();
  seg.bridge_max = false;
  std::vector<double> x(n), y(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    RandomStream r1(replicate_key(seed, "esscher/base", i), 1);
    const double l1 = sample_segment(base, a, t, seg, r1).endpoint;
    x[i] = (l1 > a ? 1.0 : 0.0) * std::exp(tilted.phi_c * (l1 - a) - c * t);
    RandomStream r2(replicate_key(seed, "esscher/tilted", i), 1);
    const double l2 = sample_segment(shifted, a, t, seg, r2).endpoint;
    y[i] = l2 > a ? 1.0 : 0.0;
  });
  const auto bx = mean_se(x), ty = mean_se(y);
  MeasureChangeReport rep;
  rep.c = c;
  rep.t = t;
  rep.n = n;
  rep.base_mean = bx.mean;
  rep.base_se = bx.se;
  rep.tilted_mean = ty.mean;
  rep.tilted_se = ty.se;
  const double se = std::hypot(bx.se, ty.se);
  rep.z = se > 0.0 ? (bx.mean - ty.mean) / se : 0.0;
  rep.pass = std::abs(rep.z) <= 3.0;
  return rep;
}

TailEstimate free_maximum_curve(const LevyModel& model, double beta, const std::vector<double>& thresholds,
                                std::size_t n, double dt, double prune_depth, std::uint64_t seed,
                                unsigned jobs) {
  if (thresholds.empty()) throw InputError("free_maximum_curve: no thresholds");
  BranchingConfig cfg;
  cfg.model = model;
  cfg.beta = beta;
  cfg.start = 0.0;
  cfg.barrier = BarrierKind::Free;
  cfg.prune_depth = prune_depth;
  cfg.horizon = 2000.0;
  cfg.dt = dt;
  cfg.seed = seed;
  cfg.stop_at_max = *std::max_element(thresholds.begin(), thresholds.end());
  cfg.purpose = "free-maximum";
  return max_tail(simulate_replicates(cfg, n, jobs), thresholds);
}

double kappa_required_coverage(const LevyModel& model, double beta) {
  return std::log(20.0) / phi(model, -beta);
}

namespace {

/// P_0(M >= x) from a tail estimate: 1 below 0, piecewise linear on the
/// thresholds, exponential continuation beyond them, capped by e^(-phi x).
class MaxCurve {
 public:
  MaxCurve(const TailEstimate& t, double phi) : phi_(phi) {
    x_.push_back(0.0);
    for (int k = 0; k < 3; ++k) y_[k].push_back(1.0);
    for (std::size_t i = 0; i < t.thresholds.size(); ++i) {
      if (t.thresholds[i] <= 0.0) continue;
      x_.push_back(t.thresholds[i]);
      y_[0].push_back(t.survival[i]);
      y_[1].push_back(t.ci_lo[i]);
      y_[2].push_back(t.ci_hi[i]);
    }
  }

  /// Values for the point estimate, the lower and the upper band.
  void eval(double x, double out[3]) const {
    if (x <= 0.0) {
      out[0] = out[1] = out[2] = 1.0;
      return;
    }
    const double cap = std::exp(-phi_ * x);
    if (x >= x_.back()) {
      const double f = std::exp(-phi_ * (x - x_.back()));
      for (int k = 0; k < 3; ++k) out[k] = std::min(cap, y_[k].back() * f);
      return;
    }
    const auto i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
    const double w = (x - x_[i]) / (x_[i + 1] - x_[i]);
    for (int k = 0; k < 3; ++k) out[k] = std::min(cap, (1 - w) * y_[k][i] + w * y_[k][i + 1]);
  }

 private:
  double phi_;
  std::vector<double> x_;
  std::vector<double> y_[3];
};

struct PathIntegrals {
  double weight = 1.0;
  double integral[3] = {0.0, 0.0, 0.0};
};

}  // namespace

KappaEstimate estimate_kappa(const LevyModel& model, double beta, const TailEstimate& m_curve,
                             const KappaOptions& options) {
  const auto chars = characteristics(model);
  if (chars.psi_prime_at_zero >= 0.0) throw DomainError("estimate_kappa: needs Psi'(0+) < 0");
  if (!(beta >= 0.0) || beta >= chars.q_star_or_zero() - chars.critical_band) {
    std::ostringstream os;
    os << "estimate_kappa: needs 0 <= beta < q*=" << chars.q_star_or_zero() << " (critical constant not supported)";
    throw DomainError(os.str());
  }
  if (options.mc_size < 2 || !(options.dt > 0.0)) throw InputError("estimate_kappa: need mc_size >= 2 and dt > 0");
  const double phi_b = phi(model, chars, -beta);
  const double required = kappa_required_coverage(model, beta);
  const double covered = m_curve.thresholds.empty() ? 0.0
                                                    : *std::max_element(m_curve.thresholds.begin(), m_curve.thresholds.end());
  if (covered < required) {
    std::ostringstream os;
    os << "estimate_kappa: m_curve covers [0, " << covered << "], needs x_hi >= " << required;
    throw InputError(os.str());
  }
  const MaxCurve curve(m_curve, phi_b);

  KappaEstimate est;
  est.beta = beta;
  est.phi_neg_beta = phi_b;
  est.psi_prime = psi_derivatives(model, phi_b).first;
  est.mc_size = options.mc_size;

  const std::size_t n = options.mc_size;
  const ConditionedPathSampler sampler(model, beta);
  const auto& tm = sampler.tilted().model;
  const bool brownian = tm.is_brownian() && !options.importance_weights;
  const double drift_up = std::max(characteristics(tm).psi_prime_at_zero, 1e-3);
  double horizon = std::max(8.0, 14.0 / (phi_b * drift_up));
  horizon = options.dt * std::ceil(horizon / options.dt);

  std::vector<PathIntegrals> acc(n);
  std::vector<double> values[3];
  auto summarize = [&](int k) {
    values[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) values[k][i] = acc[i].weight * std::exp(-beta * acc[i].integral[k]);
    return mean_se(values[k]);
  };
  auto integrate_path = [&](const std::vector<double>& y, double dt, PathIntegrals& p) {
    double prev[3], cur[3];
    curve.eval(y[0], prev);
    for (std::size_t k = 1; k < y.size(); ++k) {
      curve.eval(y[k], cur);
      for (int j = 0; j < 3; ++j) {
        p.integral[j] += 0.5 * dt * (prev[j] + cur[j]);
        prev[j] = cur[j];
      }
    }
  };

  if (brownian) {
    // Conditioned from 0 exactly: 2M - B for the tilted Brownian motion.
    est.method = "brownian-2M-B";
    est.start = 0.0;
    const double mu = tm.drift(), sigma = tm.gaussian();
    struct State {
      double b = 0.0, m = 0.0, y = 0.0;
    };
    std::vector<State> state(n);
    std::vector<RandomStream> streams;
    streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) streams.emplace_back(replicate_key(options.seed, "kappa", i), 1);
    double done = 0.0;
    double previous = -1.0;
    for (;;) {
      const auto steps = static_cast<std::size_t>(std::llround((horizon - done) / options.dt));
      const double dt = options.dt;
      const double sd = sigma * std::sqrt(dt), var = sigma * sigma * dt;
      parallel_for(n, options.jobs, [&](std::size_t i) {
        auto& s = state[i];
        auto& rng = streams[i];
        double prev[3], cur[3];
        curve.eval(s.y, prev);
        for (std::size_t k = 0; k < steps; ++k) {
          const double b2 = s.b + mu * dt + sd * rng.normal();
          const double gap = b2 - s.b;
          s.m = std::max(s.m, 0.5 * (s.b + b2 + std::sqrt(gap * gap - 2.0 * var * std::log(rng.uniform()))));
          s.b = b2;
          s.y = 2.0 * s.m - s.b;
          curve.eval(s.y, cur);
          for (int j = 0; j < 3; ++j) {
            acc[i].integral[j] += 0.5 * dt * (prev[j] + cur[j]);
            prev[j] = cur[j];
          }
        }
      });
      done = horizon;
      const auto point = summarize(0);
      est.truncation_horizon = horizon;
      if (previous >= 0.0) {
        est.truncation_change = std::abs(point.mean - previous) / point.mean;
        if (est.truncation_change < options.truncation_tolerance || 2.0 * horizon > options.max_horizon) break;
      }
      previous = point.mean;
      horizon *= 2.0;
    }
  } else {
    est.method = "importance-weights";
    est.start = std::isfinite(sampler.log_h(0.0)) ? 0.0 : options.start;
    double previous = -1.0;
    for (;;) {
      parallel_for(n, options.jobs, [&](std::size_t i) {
        RandomStream rng(replicate_key(options.seed, "kappa", i), 1);
        ConditionedOptions co;
        co.dt = options.dt;
        const auto path = sample_conditioned(sampler, est.start, horizon, co, rng);
        PathIntegrals p;
        p.weight = std::isfinite(path.log_weight) ? std::exp(path.log_weight) : 0.0;
        if (p.weight > 0.0) integrate_path(path.positions, path.dt, p);
        acc[i] = p;
      });
      const auto point = summarize(0);
      est.truncation_horizon = horizon;
      if (previous >= 0.0) {
        est.truncation_change = std::abs(point.mean - previous) / point.mean;
        if (est.truncation_change < options.truncation_tolerance || 2.0 * horizon > options.max_horizon) break;
      }
      previous = point.mean;
      horizon *= 2.0;
    }
  }

  const auto point = summarize(0);
  const auto low_m = summarize(1);   // smaller m, larger expectation
  const auto high_m = summarize(2);  // larger m, smaller expectation
  constexpr double z = 1.959963984540054;
  est.raw = point.mean;
  est.raw_se = point.se;
  est.kappa = est.psi_prime * point.mean;
  est.ci_lo = est.psi_prime * std::max(0.0, high_m.mean - z * high_m.se);
  est.ci_hi = est.psi_prime * (low_m.mean + z * low_m.se);
  return est;
}

}  // namespace snlevy
