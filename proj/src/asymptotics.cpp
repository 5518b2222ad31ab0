#include "snlevy/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "snlevy/errors.hpp"
#include "snlevy/parallel.hpp"
#include "snlevy/rng.hpp"
#include "snlevy/scale_fn.hpp"
#include "snlevy/tilt.hpp"

namespace snlevy {

std::pair<double, double> RateFit::predict(double x) const {
  const std::size_t k = log_coef ? 3 : 2;
  Eigen::VectorXd d(k);
  d(0) = 1.0;
  d(1) = x;
  if (log_coef) d(2) = std::log(x);
  const Eigen::Map<const Eigen::MatrixXd> cov(covariance.data(), k, k);
  double value = intercept + slope * x;
  if (log_coef) value += *log_coef * std::log(x);
  if (fixed_power != 0.0) value += fixed_power * std::log(x);
  return {value, std::sqrt(std::max(0.0, d.dot(cov * d)))};
}

RateFit fit_rate(const TailEstimate& tail, bool with_log_correction, const FitOptions& options) {
  if (tail.n == 0) throw InputError("fit_rate: empty tail estimate");
  const double lo = options.lo.value_or(-std::numeric_limits<double>::infinity());
  const double hi = options.hi.value_or(std::numeric_limits<double>::infinity());
  const bool needs_log = with_log_correction || options.fixed_power != 0.0;

  std::vector<std::size_t> use;
  for (std::size_t i = 0; i < tail.thresholds.size(); ++i) {
    const double x = tail.thresholds[i], p = tail.survival[i];
    if (x < lo || x > hi) continue;
    if (!(p > 0.0 && p < 1.0)) continue;
    if (needs_log && x <= 0.0) continue;
    if (tail.counts[i] < options.min_survivors) continue;
    if (0.5 * (tail.ci_hi[i] - tail.ci_lo[i]) > options.max_relative_halfwidth * p) continue;
    use.push_back(i);
  }
  std::sort(use.begin(), use.end(), [&](std::size_t a, std::size_t b) { return tail.thresholds[a] < tail.thresholds[b]; });
  if (use.size() < 6) {
    std::ostringstream msg;
    msg << "fit_rate: " << use.size() << " usable thresholds, need at least 6";
    throw InputError(msg.str());
  }

  const std::size_t m = use.size(), k = with_log_correction ? 3 : 2;
  const double n = static_cast<double>(tail.n);
  Eigen::MatrixXd X(m, k);
  Eigen::VectorXd y(m), w(m), v(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double x = tail.thresholds[use[r]], p = tail.survival[use[r]];
    X(r, 0) = 1.0;
    X(r, 1) = x;
    if (with_log_correction) X(r, 2) = std::log(x);
    y(r) = std::log(p) - (options.fixed_power != 0.0 ? options.fixed_power * std::log(x) : 0.0);
    v(r) = (1.0 - p) / (n * p);
    w(r) = 1.0 / v(r);
  }
  // Cov(log p_i, log p_j) = (1 - p_i) / (n p_i) for x_i <= x_j.
  Eigen::MatrixXd sigma(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) sigma(i, j) = v(std::min(i, j));
  }

  const Eigen::MatrixXd XtW = X.transpose() * w.asDiagonal();
  const Eigen::MatrixXd A = XtW * X;
  const Eigen::LDLT<Eigen::MatrixXd> solver(A);
  const Eigen::VectorXd coef = solver.solve(XtW * y);
  const Eigen::MatrixXd bread = solver.solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd cov = bread * (XtW * sigma * XtW.transpose()) * bread;

  RateFit fit;
  fit.lo = tail.thresholds[use.front()];
  fit.hi = tail.thresholds[use.back()];
  fit.points = m;
  fit.intercept = coef(0);
  fit.slope = coef(1);
  fit.intercept_se = std::sqrt(std::max(0.0, cov(0, 0)));
  fit.slope_se = std::sqrt(std::max(0.0, cov(1, 1)));
  if (with_log_correction) {
    fit.log_coef = coef(2);
    fit.log_coef_se = std::sqrt(std::max(0.0, cov(2, 2)));
  }
  fit.fixed_power = options.fixed_power;
  fit.covariance.assign(cov.data(), cov.data() + k * k);

  const Eigen::VectorXd resid = y - X * coef;
  const double ybar = w.dot(y) / w.sum();
  const double ss_tot = (w.array() * (y.array() - ybar).square()).sum();
  const double ss_res = (w.array() * resid.array().square()).sum();
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

bool CheckReport::pass() const {
  return !verdicts.empty() &&
         std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

double rate_tolerance(double target, double se, double rel) {
  return std::max(2.0 * se, rel * std::abs(target));
}

std::vector<double> threshold_grid(double step, double hi) {
  if (!(step > 0.0) || !(hi >= step)) throw InputError("threshold_grid: need 0 < step <= hi");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor(hi / step + 1e-9));
  for (std::size_t k = 1; k <= count; ++k) out.push_back(static_cast<double>(k) * step);
  return out;
}

namespace {

std::string fmt(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

/// fit_rate, with an InputError (too few usable points) turned into a message.
std::optional<RateFit> try_fit(const TailEstimate& tail, bool with_log, const FitOptions& options, std::string& error) {
  try {
    return fit_rate(tail, with_log, options);
  } catch (const InputError& e) {
    error = e.what();
    return std::nullopt;
  }
}

Verdict rate_verdict(std::string check, const LevyModel& model, const std::optional<RateFit>& fit, double target,
                     double tolerance, std::uint64_t n, const std::string& error) {
  Verdict v;
  v.check = std::move(check);
  v.model_hash = model.hash();
  v.target = target;
  v.n = n;
  if (!fit) {
    v.estimate = v.se = v.window_lo = v.window_hi = std::numeric_limits<double>::quiet_NaN();
    v.note = "no fit: " + error;
    return v;
  }
  v.estimate = fit->slope;
  v.se = fit->slope_se;
  v.tolerance = tolerance;
  v.window_lo = fit->lo;
  v.window_hi = fit->hi;
  v.pass = std::abs(fit->slope - target) < tolerance;
  return v;
}

double fit_se(const std::optional<RateFit>& f) { return f ? f->slope_se : 0.0; }

void add_sim_params(Verdict& v, const SimulationKnobs& s) {
  v.params.emplace_back("replicates", static_cast<double>(s.replicates));
  v.params.emplace_back("dt", s.dt);
}

/// Pairwise slope agreement within 2 combined standard errors.
void add_consistency(CheckReport& report, const std::string& check, const LevyModel& model,
                     const std::vector<double>& starts, std::size_t first_fit) {
  for (std::size_t i = 0; i < starts.size(); ++i) {
    for (std::size_t j = i + 1; j < starts.size(); ++j) {
      const auto& fa = report.fits[first_fit + i];
      const auto& fb = report.fits[first_fit + j];
      Verdict v;
      v.check = check;
      v.model_hash = model.hash();
      v.params = {{"a1", starts[i]}, {"a2", starts[j]}};
      v.target = 0.0;
      if (!fa || !fb) {
        v.estimate = v.se = v.window_lo = v.window_hi = std::numeric_limits<double>::quiet_NaN();
        v.note = "no fit for one of the starts";
        report.verdicts.push_back(std::move(v));
        continue;
      }
      const RateFit& a = *fa;
      const RateFit& b = *fb;
      v.estimate = a.slope - b.slope;
      v.se = std::hypot(a.slope_se, b.slope_se);
      v.tolerance = 2.0 * v.se;
      v.window_lo = std::max(a.lo, b.lo);
      v.window_hi = std::min(a.hi, b.hi);
      v.n = report.tails[first_fit + i].n + report.tails[first_fit + j].n;
      v.pass = std::abs(v.estimate) <= v.tolerance;
      report.verdicts.push_back(std::move(v));
    }
  }
}

struct Setup {
  Characteristics chars;
  double q_star;
  bool critical;
};

Setup branching_setup(const LevyModel& model, double beta, double band, const char* who) {
  Setup s{characteristics(model, band), 0.0, false};
  if (!s.chars.q_star || s.chars.psi_prime_at_zero >= 0.0) {
    throw DomainError(std::string(who) + ": needs Psi'(0) < 0, the single particle must drift to -inf");
  }
  s.q_star = *s.chars.q_star;
  if (!(beta >= 0.0)) throw InputError(std::string(who) + ": beta must be >= 0");
  const Regime r = s.chars.regime(beta);
  if (r == Regime::SurvivesWithPositiveProbability) {
    throw InputError(std::string(who) + ": beta = " + fmt(beta) + " exceeds q* = " + fmt(s.q_star) +
                     ", the population survives with positive probability");
  }
  s.critical = r == Regime::DiesOutCritical;
  return s;
}

std::vector<double> unique_starts(double a, const std::vector<double>& extra) {
  std::vector<double> out{a};
  for (double s : extra) {
    if (std::none_of(out.begin(), out.end(), [&](double t) { return std::abs(t - s) < 1e-12; })) out.push_back(s);
  }
  return out;
}

}  // namespace

CheckReport verify_theorem1(const LevyModel& model, double beta, const Theorem1Options& options) {
  const Setup s = branching_setup(model, beta, options.sim.critical_band, "verify_theorem1");
  const double power = options.power.value_or(s.critical ? 0.0 : -1.5);
  const auto thresholds = threshold_grid(options.step, options.horizon);

  BranchingConfig cfg;
  cfg.model = model;
  cfg.beta = beta;
  cfg.start = options.a;
  cfg.horizon = options.horizon;
  cfg.dt = options.sim.dt;
  cfg.seed = options.sim.seed;
  cfg.particle_cap = options.sim.particle_cap;
  cfg.purpose = "theorem1";
  cfg.validate();

  CheckReport report;
  FitOptions fo = options.fit;
  fo.fixed_power = power;
  report.tails.push_back(extinction_tail(simulate_replicates(cfg, options.sim.replicates, options.sim.jobs), thresholds));
  report.tail_labels.push_back("population a=" + fmt(options.a));
  std::string error;
  report.fits.push_back(try_fit(report.tails.back(), false, fo, error));
  report.fit_errors.push_back(error);

  const double target = beta - s.q_star;
  // Convergence at criticality is subexponential, so the rate only has an absolute band.
  const double tol = s.critical ? 0.03 : rate_tolerance(target, fit_se(report.fits.back()));
  Verdict v = rate_verdict("theorem1", model, report.fits.back(), target, tol, report.tails.back().n, error);
  v.params = {{"beta", beta}, {"a", options.a}, {"power", power}};
  add_sim_params(v, options.sim);
  if (s.critical) v.note = "critical: P(zeta > t) decays subexponentially, a finite window sees a small negative slope";
  report.verdicts.push_back(std::move(v));

  if (options.single_particle) {
    cfg.beta = 0.0;
    cfg.purpose = "theorem1/single";
    FitOptions so = options.fit;
    so.fixed_power = -1.5;
    report.tails.push_back(extinction_tail(simulate_replicates(cfg, options.sim.replicates, options.sim.jobs), thresholds));
    report.tail_labels.push_back("single particle a=" + fmt(options.a));
    error.clear();
    report.fits.push_back(try_fit(report.tails.back(), false, so, error));
    report.fit_errors.push_back(error);
    const double single_target = -s.q_star;
    Verdict sv = rate_verdict("theorem1/single-particle", model, report.fits.back(), single_target,
                              rate_tolerance(single_target, fit_se(report.fits.back())), report.tails.back().n, error);
    sv.params = {{"beta", 0.0}, {"a", options.a}, {"power", -1.5}};
    add_sim_params(sv, options.sim);
    report.verdicts.push_back(std::move(sv));
  }
  return report;
}

CheckReport verify_theorem2(const LevyModel& model, double beta, const Theorem2Options& options) {
  const Setup s = branching_setup(model, beta, options.sim.critical_band, "verify_theorem2");
  const double phi_b = phi(model, s.chars, -beta);
  const double x_max = s.critical ? options.critical_x_max : options.x_max;
  const auto thresholds = threshold_grid(options.step, x_max);
  const std::vector<double> starts = s.critical ? std::vector<double>{options.a}
                                                : unique_starts(options.a, options.consistency_starts);

  CheckReport report;
  std::vector<std::string> errors(starts.size());
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const double a = starts[k];
    BranchingConfig cfg;
    cfg.model = model;
    cfg.beta = beta;
    cfg.start = a;
    cfg.horizon = options.horizon;
    cfg.dt = options.sim.dt;
    cfg.seed = options.sim.seed;
    cfg.particle_cap = options.sim.particle_cap;
    cfg.stop_at_max = x_max;
    cfg.purpose = "theorem2/a=" + fmt(a);
    cfg.validate();
    report.tails.push_back(max_tail(simulate_replicates(cfg, options.sim.replicates, options.sim.jobs), thresholds));
    report.tail_labels.push_back("a=" + fmt(a));
    report.fits.push_back(
        try_fit(report.tails.back(), s.critical, s.critical ? options.critical_fit : options.fit, errors[k]));
    report.fit_errors.push_back(errors[k]);
  }

  const double target = -phi_b;
  const auto& main = report.fits.front();
  if (s.critical) {
    Verdict v = rate_verdict("theorem2/critical-rate", model, main, target, 0.05 * std::abs(target),
                             report.tails.front().n, errors[0]);
    v.params = {{"beta", beta}, {"a", options.a}};
    add_sim_params(v, options.sim);
    report.verdicts.push_back(std::move(v));

    Verdict c;
    c.check = "theorem2/critical-log-coefficient";
    c.model_hash = model.hash();
    c.params = {{"beta", beta}, {"a", options.a}};
    add_sim_params(c, options.sim);
    c.target = -1.0;
    c.tolerance = 0.5;
    c.n = report.tails.front().n;
    if (main) {
      c.estimate = *main->log_coef;
      c.se = *main->log_coef_se;
      c.window_lo = main->lo;
      c.window_hi = main->hi;
      c.pass = c.estimate >= -1.5 && c.estimate <= -0.5;
    } else {
      c.estimate = c.se = c.window_lo = c.window_hi = std::numeric_limits<double>::quiet_NaN();
      c.note = "no fit: " + errors[0];
    }
    report.verdicts.push_back(std::move(c));
    return report;
  }

  Verdict v = rate_verdict("theorem2", model, main, target, rate_tolerance(target, fit_se(main)),
                           report.tails.front().n, errors[0]);
  v.params = {{"beta", beta}, {"a", options.a}};
  add_sim_params(v, options.sim);
  report.verdicts.push_back(std::move(v));
  add_consistency(report, "theorem2/slope-consistency", model, starts, 0);

  // The prefactor W^(-beta)(a) = e^(Phi(-beta) a) W_{-beta}(a) fixes tail ratios across starts.
  const ConditionedPathSampler h(model, beta);
  for (std::size_t j = 1; j < starts.size() && main; ++j) {
    if (!report.fits[j]) continue;  // already failed in the consistency verdicts
    const RateFit& b = *report.fits[j];
    const double lo = std::max(main->lo, b.lo), hi = std::min(main->hi, b.hi);
    const double x = hi > lo ? 0.5 * (lo + hi) : main->hi;
    const auto [ya, sa] = main->predict(x);
    const auto [yb, sb] = b.predict(x);
    Verdict r;
    r.check = "theorem2/prefactor-ratio";
    r.model_hash = model.hash();
    r.params = {{"beta", beta}, {"a1", starts[0]}, {"a2", starts[j]}, {"x", x}};
    r.target = phi_b * (starts[0] - starts[j]) + h.log_h(starts[0]) - h.log_h(starts[j]);
    r.estimate = ya - yb;
    r.se = std::hypot(sa, sb);
    r.tolerance = std::max(2.0 * r.se, 0.05);
    r.window_lo = lo;
    r.window_hi = hi;
    r.n = report.tails[0].n + report.tails[j].n;
    r.pass = std::abs(r.estimate - r.target) < r.tolerance;
    r.note = "log of P_a1(M >= x) / P_a2(M >= x) against log W^(-beta)(a1) / W^(-beta)(a2)";
    report.verdicts.push_back(std::move(r));
  }
  return report;
}

CheckReport verify_corollary(const LevyModel& model, double beta, const CorollaryOptions& options) {
  const auto chars = characteristics(model, options.sim.critical_band);
  if (chars.regime(beta) != Regime::DiesOutSubcritical || chars.psi_prime_at_zero >= 0.0) {
    throw InputError("verify_corollary: needs Psi'(0) < 0 and 0 <= beta < q*");
  }
  if (options.starts.empty()) throw InputError("verify_corollary: no starts");
  const double phi_b = phi(model, chars, -beta);
  const auto grid = threshold_grid(options.step, options.x_max);

  CheckReport report;
  std::string error;
  for (double a : options.starts) {
    BranchingConfig cfg;
    cfg.model = model;
    cfg.beta = beta;
    cfg.start = a;
    cfg.barrier = BarrierKind::Free;
    cfg.prune_depth = options.prune_depth;
    cfg.horizon = 2000.0;
    cfg.dt = options.sim.dt;
    cfg.seed = options.sim.seed;
    cfg.particle_cap = options.sim.particle_cap;
    cfg.stop_at_max = a + options.x_max;
    cfg.purpose = "corollary/a=" + fmt(a);
    cfg.validate();
    std::vector<double> shifted(grid);
    for (double& x : shifted) x += a;
    TailEstimate tail = max_tail(simulate_replicates(cfg, options.sim.replicates, options.sim.jobs), shifted);
    tail.thresholds = grid;  // M - a
    report.tails.push_back(std::move(tail));
    report.tail_labels.push_back("free a=" + fmt(a));
    std::string e;
    report.fits.push_back(try_fit(report.tails.back(), false, options.fit, e));
    report.fit_errors.push_back(e);
    if (error.empty()) error = e;
  }

  const double target = -phi_b;
  const auto& main = report.fits.front();
  Verdict v = rate_verdict("corollary", model, main, target, rate_tolerance(target, fit_se(main)),
                           report.tails.front().n, error);
  v.params = {{"beta", beta}, {"a", options.starts.front()}, {"prune_depth", options.prune_depth}};
  add_sim_params(v, options.sim);
  report.verdicts.push_back(std::move(v));
  add_consistency(report, "corollary/slope-consistency", model, options.starts, 0);

  // Pointwise bound P(M - a >= x) <= e^(-Phi x), violated only if the whole CI lies above it.
  for (std::size_t f = 0; f < report.tails.size(); ++f) {
    const TailEstimate& t = report.tails[f];
    Verdict b;
    b.check = "corollary/bound";
    b.model_hash = model.hash();
    b.params = {{"beta", beta}, {"a", options.starts[f]}};
    b.n = t.n;
    b.pass = true;
    b.window_lo = t.thresholds.front();
    b.window_hi = t.thresholds.back();
    std::size_t report_at = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < t.thresholds.size(); ++i) {
      const double bound = std::exp(-phi_b * t.thresholds[i]);
      if (t.ci_lo[i] > bound) b.pass = false;
      if (std::abs(t.thresholds[i] - options.bound_at) < std::abs(t.thresholds[report_at] - options.bound_at)) report_at = i;
      const double se = t.se(i);
      if (se > 0.0) worst = std::max(worst, (t.survival[i] - bound) / se);
    }
    b.estimate = t.survival[report_at];
    b.se = t.se(report_at);
    b.target = std::exp(-phi_b * t.thresholds[report_at]);
    std::ostringstream note;
    note << "estimate and target at x=" << t.thresholds[report_at] << "; largest (p - bound)/se over thresholds "
         << worst;
    b.note = note.str();
    report.verdicts.push_back(std::move(b));
  }
  return report;
}

CheckReport verify_exit_rate(const LevyModel& model, double a, double x, const ExitRateOptions& options) {
  if (!(model.gaussian() > 0.0)) {
    throw InputError("verify_exit_rate: needs a Gaussian part (eta > 0) for the exit time to have a density");
  }
  if (!(a > 0.0 && a < x)) throw InputError("verify_exit_rate: needs 0 < a < x");
  const double target = -rho(model, x).rho;
  const auto thresholds = threshold_grid(options.step, options.horizon);
  const PathDynamics dyn(model);
  SegmentOptions so;
  so.dt = options.sim.dt;
  so.lower = 0.0;
  so.upper = x;

  std::vector<double> exit_time(options.sim.replicates);
  parallel_for(options.sim.replicates, options.sim.jobs, [&](std::size_t i) {
    RandomStream rng(replicate_key(options.sim.seed, "exit-rate", i), 0);
    const auto r = sample_segment(dyn, a, options.horizon, so, rng);
    exit_time[i] = r.hit_lower ? r.hit_time : (r.hit_upper ? r.upper_time : std::numeric_limits<double>::infinity());
  });
  std::vector<std::uint64_t> counts(thresholds.size(), 0);
  for (double t : exit_time) {
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      if (t > thresholds[k]) ++counts[k];
    }
  }

  CheckReport report;
  report.tails.push_back(tail_from_counts("t", thresholds, counts, options.sim.replicates));
  report.tail_labels.push_back("exit a=" + fmt(a) + " x=" + fmt(x));
  std::string error;
  report.fits.push_back(try_fit(report.tails.back(), false, options.fit, error));
  report.fit_errors.push_back(error);
  const auto& f = report.fits.back();
  Verdict v = rate_verdict("exit-rate", model, f, target, rate_tolerance(target, fit_se(f)), report.tails.back().n, error);
  v.params = {{"a", a}, {"x", x}};
  add_sim_params(v, options.sim);
  report.verdicts.push_back(std::move(v));
  return report;
}

}  // namespace snlevy
