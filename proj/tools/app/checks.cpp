#include "checks.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <limits>
#include <ostream>
#include <sstream>

#include "snlevy/asymptotics.hpp"
#include "snlevy/errors.hpp"
#include "snlevy/parallel.hpp"
#include "snlevy/picard.hpp"
#include "snlevy/rng.hpp"
#include "snlevy/scale_fn.hpp"
#include "snlevy/tilt.hpp"

namespace snlevy::app {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kPi = std::acos(-1.0);

std::string num(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

json opt(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

Verdict make(const std::string& check, const ExperimentConfig& c) {
  Verdict v;
  v.check = check;
  v.model_hash = c.model.hash();
  v.target = kNaN;
  v.estimate = kNaN;
  v.se = kNaN;
  v.window_lo = kNaN;
  v.window_hi = kNaN;
  return v;
}

Verdict z_verdict(const std::string& check, const ExperimentConfig& c, const ZScore& z, std::uint64_t n) {
  Verdict v = make(check, c);
  v.estimate = z.estimate;
  v.target = z.target;
  v.se = z.se;
  v.tolerance = 3.0 * z.se;
  v.n = n;
  v.pass = std::abs(z.z) <= 3.0;
  return v;
}

struct Context {
  const ExperimentConfig& c;
  const std::string& check;
  std::filesystem::path dir;
  unsigned jobs;
  std::uint64_t seed;
  CheckResult& r;

  std::size_t replicates() const { return c.count(check, "replicates", c.replicates); }
  FitOptions window(FitOptions base, const char* lo = "window_lo", const char* hi = "window_hi") const {
    base.lo = c.number(check, lo, base.lo.value_or(kNaN));
    base.hi = c.number(check, hi, base.hi.value_or(kNaN));
    if (std::isnan(*base.lo)) base.lo.reset();
    if (std::isnan(*base.hi)) base.hi.reset();
    return base;
  }
  SimulationKnobs knobs() const {
    SimulationKnobs k;
    k.replicates = replicates();
    k.dt = c.dt;
    k.seed = seed;
    k.jobs = jobs;
    k.critical_band = c.critical_band;
    return k;
  }
  void artifact(const std::string& name) { r.artifacts.push_back(name); }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  /// CSV and SVG for every tail of an asymptotics report, then its verdicts.
  void absorb(const CheckReport& rep, const std::string& stem) {
    for (std::size_t i = 0; i < rep.tails.size(); ++i) {
      const std::string base = stem + (rep.tails.size() > 1 ? "_" + std::to_string(i) : "");
      const std::optional<RateFit> fit = i < rep.fits.size() ? rep.fits[i] : std::nullopt;
      // The first verdicts belong to the first tails, in order, for every asymptotics check.
      const std::optional<double> target = i == 0 ? std::optional(rep.verdicts.front().target) : std::nullopt;
      const std::string warning = i < rep.fit_errors.size() ? rep.fit_errors[i] : std::string();
      write_tail_csv(rep.tails[i], fit, path(base + ".csv"));
      emit_plot(rep.tails[i], fit, target, check + ": " + rep.tail_labels[i], path(base + ".svg"), warning);
      artifact(base + ".csv");
      artifact(base + ".svg");
    }
    for (const auto& v : rep.verdicts) r.add(v);
  }
};

bool is_brownian(const LevyModel& m) { return m.is_brownian() && m.gaussian() > 0.0; }

void check_characteristics(Context& x) {
  const auto& m = x.c.model;
  const double beta = x.c.beta;
  const auto ch = characteristics(m, x.c.critical_band);
  json d{{"psi_prime_at_zero", ch.psi_prime_at_zero},
         {"lambda_star", opt(ch.lambda_star)},
         {"q_star", opt(ch.q_star)},
         {"psi_second_at_star", opt(ch.psi_second_at_star)},
         {"phi_0", phi(m, ch, 0.0)},
         {"beta", beta},
         {"regime", to_string(ch.regime(beta))}};
  double worst = std::abs(psi(m, phi(m, ch, 0.0)));
  bool ok = ch.q_star.has_value() == (ch.psi_prime_at_zero < 0.0);
  if (ch.lambda_star) {
    const auto dd = psi_derivatives(m, *ch.lambda_star);
    worst = std::max(worst, std::abs(dd.first));
    ok = ok && dd.second > 0.0 && *ch.q_star > 0.0;
  }
  if (-beta >= -ch.q_star_or_zero()) {
    const double p = phi(m, ch, -beta);
    d["phi_neg_beta"] = p;
    worst = std::max(worst, std::abs(psi(m, p) + beta));
  }
  Verdict v = make("characteristics", x.c);
  v.params = {{"beta", beta}};
  v.estimate = worst;
  v.target = 0.0;
  v.tolerance = 1e-9;
  v.pass = ok && worst < 1e-9;
  v.note = "largest residual of Psi'(lambda*) = 0 and Psi(Phi(q)) = q";
  x.r.add(v, d);

  // Closed forms where they exist.
  std::optional<double> lam, qs, phi0, phib;
  const double dr = m.drift(), eta = m.gaussian();
  if (is_brownian(m)) {
    phi0 = std::max(0.0, -2.0 * dr / (eta * eta));
    if (dr < 0.0) {
      lam = -dr / (eta * eta);
      qs = dr * dr / (2.0 * eta * eta);
    }
    if (dr * dr - 2.0 * beta * eta * eta >= 0.0) phib = (-dr + std::sqrt(dr * dr - 2.0 * beta * eta * eta)) / (eta * eta);
  } else if (eta == 0.0 && std::holds_alternative<CompoundPoisson>(m.jumps())) {
    const auto& cp = std::get<CompoundPoisson>(m.jumps());
    if (const auto* e = std::get_if<ExponentialMagnitude>(&cp.jump_law); e && dr > 0.0 && dr < cp.rate * e->mean) {
      const double s = std::sqrt(cp.rate) - std::sqrt(dr / e->mean);
      qs = s * s;
      lam = (std::sqrt(cp.rate * e->mean / dr) - 1.0) / e->mean;
    }
  }
  if (!qs) return;
  double err = std::abs(*ch.q_star - *qs);
  if (lam) err = std::max(err, std::abs(*ch.lambda_star - *lam));
  if (phi0) err = std::max(err, std::abs(phi(m, ch, 0.0) - *phi0));
  if (phib && d.contains("phi_neg_beta")) err = std::max(err, std::abs(d["phi_neg_beta"].get<double>() - *phib));
  Verdict cf = make("characteristics/closed-form", x.c);
  cf.params = {{"beta", beta}};
  cf.estimate = *ch.q_star;
  cf.target = *qs;
  cf.tolerance = 1e-10;
  cf.pass = err < 1e-10;
  cf.note = "largest error over lambda*, q*, Phi(0), Phi(-beta): " + num(err);
  x.r.add(cf, json{{"lambda_star", opt(lam)}, {"q_star", *qs}, {"phi_0", opt(phi0)}, {"phi_neg_beta", opt(phib)},
                   {"largest_error", err}});
}

void check_scale(Context& x) {
  const auto& m = x.c.model;
  const double x_max = x.c.number("scale", "x_max", 8.0);
  const double h = x.c.number("scale", "h", 1.0 / 64.0);
  const auto chars = characteristics(m);
  std::vector<double> qs = x.c.numbers("scale", "q", {0.0, x.c.beta});
  if (-x.c.beta >= -chars.q_star_or_zero() && x.c.beta > 0.0) qs.push_back(-x.c.beta);
  for (double q : qs) {
    const auto g = w_q_grid(m, q, x_max, h);
    const std::string name = "scale_q" + num(q) + ".csv";
    {
      std::ostringstream out;
      write_csv(out, g);
      write_text(x.path(name), out.str());
      x.artifact(name);
    }
    if (is_brownian(m) && q >= -chars.q_star_or_zero()) {
      double worst = 0.0;
      for (std::size_t i = 1; i < g.size(); ++i) {
        const double exact = brownian_scale(m.drift(), m.gaussian(), q, g.x(i));
        worst = std::max(worst, std::abs(g.values[i] - exact) / std::abs(exact));
      }
      Verdict v = make("scale/closed-form", x.c);
      v.params = {{"q", q}, {"x_max", x_max}, {"h", h}};
      v.estimate = worst;
      v.target = 0.0;
      v.tolerance = 1e-7;
      v.window_lo = 0.0;
      v.window_hi = x_max;
      v.pass = worst < 1e-7;
      v.note = std::string("sup relative error of the ") + to_string(g.method) + " grid against the closed form";
      x.r.add(v);
    }
    if (q >= 0.0) {
      json rows = json::array();
      double worst = 0.0;
      bool ok = true;
      for (const auto& lc : laplace_check(m, g)) {
        rows.push_back({{"lambda", lc.lambda}, {"numeric", lc.numeric}, {"exact", lc.exact},
                        {"tail_bound", lc.tail_bound}, {"relative_error", lc.relative_error}});
        worst = std::max(worst, lc.relative_error);
        ok = ok && lc.relative_error < 1e-5 + lc.tail_bound / std::abs(lc.exact);
      }
      Verdict v = make("scale/laplace", x.c);
      v.params = {{"q", q}, {"x_max", x_max}, {"h", h}};
      v.estimate = worst;
      v.target = 0.0;
      v.tolerance = 1e-5;
      v.pass = ok;
      v.note = "relative error of the Laplace transform at Phi(q) + 2, 3, 4 (plus the neglected tail bound)";
      x.r.add(v, json{{"points", rows}});
    }
  }
}

void check_rho(Context& x) {
  const auto& m = x.c.model;
  const auto xs = x.c.numbers("rho", "x", {kPi, 2.0 * kPi, 20.0});
  const double qs = characteristics(m).q_star_or_zero();
  std::ostringstream csv;
  csv.precision(17);
  csv << "x,rho,q_lo,q_hi\n";
  double last = std::numeric_limits<double>::infinity(), last_x = 0.0;
  for (double at : xs) {
    const auto r = rho(m, at);
    csv << at << ',' << r.rho << ',' << r.q_lo << ',' << r.q_hi << '\n';
    Verdict v = make("rho", x.c);
    v.params = {{"x", at}};
    v.estimate = r.rho;
    if (is_brownian(m)) {
      const double d = m.drift(), eta = m.gaussian();
      v.target = d * d / (2.0 * eta * eta) + kPi * kPi * eta * eta / (2.0 * at * at);
      v.tolerance = 1e-6;
      v.pass = std::abs(r.rho - v.target) < 1e-6;
    } else {
      v.target = qs;
      v.pass = r.rho >= qs - 1e-9 && (at <= last_x || r.rho <= last + 1e-9);
      v.note = "no closed form: checks rho(x) >= q* and that rho decreases in x";
    }
    if (at > last_x) {
      last = r.rho;
      last_x = at;
    }
    x.r.add(v, json{{"bracket", {r.q_lo, r.q_hi}}});
  }
  write_text(x.path("rho.csv"), csv.str());
  x.artifact("rho.csv");
}

void check_tilt(Context& x) {
  const auto& m = x.c.model;
  const std::string s = "tilt-adjudicate";
  const double c = x.c.number(s, "c", -x.c.beta);
  const double q = x.c.number(s, "q", 0.0);
  const auto rep = tilted_scale_check(m, c, q, x.c.number(s, "x_max", 10.0), x.c.number(s, "h", 1.0 / 32.0));
  Verdict v = make("tilt-adjudicate", x.c);
  v.params = {{"c", c}, {"q", q}};
  v.estimate = rep.alternative_laplace_error;
  v.target = 0.0;
  v.pass = rep.supported == "alternative" || rep.supported == "both";
  v.note = "supported: " + rep.supported + "; the repo uses W_c^(q)(x) = e^(-Phi(c) x) W^(q+c)(x)";
  x.r.add(v, json{{"phi_c", rep.phi_c},
                  {"printed_discrepancy", rep.printed_discrepancy},
                  {"alternative_discrepancy", rep.alternative_discrepancy},
                  {"printed_laplace_error", rep.printed_laplace_error},
                  {"alternative_laplace_error", rep.alternative_laplace_error},
                  {"direct_laplace_error", rep.direct_laplace_error},
                  {"supported", rep.supported}});

  const double t = x.c.number(s, "t", 1.0);
  const auto e = measure_change_check(m, c, 0.0, t, x.replicates(), x.c.dt, x.seed, x.jobs);
  Verdict w = make("tilt-adjudicate/esscher", x.c);
  w.params = {{"c", c}, {"t", t}};
  w.estimate = e.tilted_mean;
  w.target = e.base_mean;
  w.se = std::hypot(e.base_se, e.tilted_se);
  w.tolerance = 3.0 * w.se;
  w.n = e.n;
  w.pass = e.pass;
  w.note = "P(L_t > 0) under the tilted law against the reweighted base law";
  x.r.add(w, json{{"z", e.z}});
}

void check_picard(Context& x) {
  const auto& m = x.c.model;
  const std::string s = "picard-cross";
  const double beta = x.c.beta;
  PicardOptions po;
  po.h = x.c.number(s, "h", po.h);
  po.dt = x.c.number(s, "dt", po.dt);
  const auto starts = x.c.numbers(s, "starts", {0.5, 1.0, 2.0, 3.0});
  const auto times = x.c.numbers(s, "times", {1.0, 2.0, 5.0});
  const auto levels = x.c.numbers(s, "levels", {2.0, 3.0, 4.0, 5.0});
  const std::size_t n = x.replicates();
  const auto rep = picard_cross_check(m, beta, starts, times, levels, n, x.c.dt, x.seed, x.jobs, po);

  std::ostringstream csv;
  csv.precision(17);
  csv << "kind,a,t_or_x,solver,mc,ci_lo,ci_hi,inside\n";
  auto block = [&](const char* kind, const std::vector<Probe>& probes, std::size_t inside) {
    json rows = json::array();
    for (const auto& p : probes) {
      csv << kind << ',' << p.a << ',' << p.second << ',' << p.solver << ',' << p.mc << ',' << p.ci_lo << ','
          << p.ci_hi << ',' << (p.inside ? 1 : 0) << '\n';
      rows.push_back({{"a", p.a}, {"t_or_x", p.second}, {"solver", p.solver}, {"mc", p.mc}, {"ci", {p.ci_lo, p.ci_hi}},
                      {"inside", p.inside}});
    }
    const std::size_t need = x.c.count(s, "min_inside", std::min<std::size_t>(10, probes.size()));
    Verdict v = make(std::string("picard-cross/") + kind, x.c);
    v.params = {{"beta", beta}, {"h", po.h}, {"dt", po.dt}, {"replicates", static_cast<double>(n)}};
    v.estimate = static_cast<double>(inside);
    v.target = static_cast<double>(probes.size());
    v.n = n;
    v.pass = !probes.empty() && inside >= need;
    v.note = "probes whose solver value lies inside the 95% Wilson interval; needs " + std::to_string(need);
    x.r.add(v, json{{"probes", rows}});
  };
  block("survival", rep.survival, rep.survival_inside);
  block("maximum", rep.maximum, rep.maximum_inside);
  write_text(x.path("picard_probes.csv"), csv.str());
  x.artifact("picard_probes.csv");

  if (!times.empty()) {
    const double t_max = *std::max_element(times.begin(), times.end());
    const double a_max = *std::max_element(starts.begin(), starts.end());
    write_surface_csv(solve_survival(m, beta, a_max, t_max, po), x.path("picard_survival.csv"));
    x.artifact("picard_survival.csv");
  }
  if (!levels.empty()) {
    const double top = *std::max_element(levels.begin(), levels.end());
    write_surface_csv(solve_max(m, beta, top, po), x.path("picard_maximum.csv"));
    x.artifact("picard_maximum.csv");
  }

  const std::size_t lemma_n = x.c.count(s, "lemma3_replicates", 100000);
  for (int k = 1; k <= 3; ++k) {
    const auto l = lemma3_identity_check(m, beta, k, 1.0, 2.0, lemma_n, hash_combine(x.seed, 100 + k), po);
    Verdict v = make("picard-cross/lemma3", x.c);
    v.params = {{"n", k}, {"a", l.a}, {"t", l.t}, {"beta", beta}};
    v.estimate = l.monte_carlo;
    v.target = l.quadrature;
    v.se = l.se;
    v.tolerance = 3.0 * l.se;
    v.n = lemma_n;
    v.pass = l.pass;
    v.note = "n-fold operator against the Gamma / ordered-uniform expectation";
    x.r.add(v, json{{"z", l.z}});
  }

  // beta = 0 reductions.
  const double d = m.drift(), eta = m.gaussian();
  const auto s0 = solve_survival(m, 0.0, 3.0, 5.0, po);
  double worst = 0.0;
  for (std::size_t i = 0; i < s0.a.size(); ++i) {
    for (std::size_t k = 0; k < s0.second.size(); ++k) {
      worst = std::max(worst, std::abs(s0(i, k) - brownian_survival_phi(d, eta, 0.0, s0.a[i], s0.second[k])));
    }
  }
  Verdict rs = make("picard-cross/reduction-survival", x.c);
  rs.params = {{"beta", 0.0}, {"a_max", 3.0}, {"t_max", 5.0}};
  rs.estimate = worst;
  rs.target = 0.0;
  rs.tolerance = 1e-6;
  rs.pass = worst < 1e-6;
  rs.note = "sup error against the single-particle survival formula";
  x.r.add(rs);

  const double level = 4.0;
  const auto u0 = solve_max(m, 0.0, level, po);
  worst = 0.0;
  const double wx = brownian_scale(d, eta, 0.0, level);
  for (std::size_t i = 0; i < u0.a.size(); ++i) {
    worst = std::max(worst, std::abs(u0(i, 0) - brownian_scale(d, eta, 0.0, u0.a[i]) / wx));
  }
  Verdict rm = make("picard-cross/reduction-maximum", x.c);
  rm.params = {{"beta", 0.0}, {"x", level}};
  rm.estimate = worst;
  rm.target = 0.0;
  rm.tolerance = 1e-6;
  rm.pass = worst < 1e-6;
  rm.note = "sup error against W(a)/W(x)";
  x.r.add(rm);
}

void check_theorem1(Context& x) {
  const std::string s = "theorem1";
  Theorem1Options o;
  o.a = x.c.number(s, "a", x.c.start);
  o.horizon = x.c.number(s, "horizon", x.c.horizon);
  o.step = x.c.number(s, "step", o.step);
  o.fit = x.window(o.fit);
  if (auto p = x.c.raw(s, "power")) o.power = x.c.number(s, "power", 0.0);
  o.single_particle = x.c.flag(s, "single_particle", o.single_particle);
  o.sim = x.knobs();
  x.absorb(verify_theorem1(x.c.model, x.c.beta, o), "theorem1");
}

void check_theorem2(Context& x) {
  const std::string s = "theorem2";
  Theorem2Options o;
  o.a = x.c.number(s, "a", x.c.start);
  o.consistency_starts = x.c.numbers(s, "starts", o.consistency_starts);
  o.x_max = x.c.number(s, "x_max", x.c.threshold_max.value_or(o.x_max));
  o.step = x.c.number(s, "step", x.c.threshold_step.value_or(o.step));
  o.fit = x.window(o.fit);
  o.critical_x_max = x.c.number(s, "critical_x_max", o.critical_x_max);
  o.critical_fit = x.window(o.critical_fit, "critical_window_lo", "critical_window_hi");
  o.sim = x.knobs();
  x.absorb(verify_theorem2(x.c.model, x.c.beta, o), "theorem2");
}

void check_corollary(Context& x) {
  const std::string s = "corollary";
  CorollaryOptions o;
  o.starts = x.c.numbers(s, "starts", o.starts);
  o.x_max = x.c.number(s, "x_max", x.c.threshold_max.value_or(o.x_max));
  o.step = x.c.number(s, "step", x.c.threshold_step.value_or(o.step));
  o.fit = x.window(o.fit);
  o.prune_depth = x.c.number(s, "prune_depth", o.prune_depth);
  o.sim = x.knobs();
  x.absorb(verify_corollary(x.c.model, x.c.beta, o), "corollary");
}

void check_exit(Context& x) {
  const std::string s = "exit-rate";
  const auto& m = x.c.model;
  const double a = x.c.number(s, "a", x.c.start);
  const double level = x.c.number(s, "x", kPi);
  ExitRateOptions o;
  o.horizon = x.c.number(s, "horizon", o.horizon);
  o.step = x.c.number(s, "step", o.step);
  o.fit = x.window(o.fit);
  o.sim = x.knobs();
  x.absorb(verify_exit_rate(m, a, level, o), "exit_rate");

  const std::size_t n = x.replicates();
  const double q = x.c.number(s, "q", 0.1);
  const auto e = exit_law_checks(m, a, level, q, x.c.beta, n, x.c.dt, hash_combine(x.seed, 1), x.jobs);
  Verdict one = z_verdict("exit-law/one-sided", x.c, e.one_sided, n);
  one.params = {{"a", a}, {"x", level}, {"q", q}};
  one.note = "E[e^(-q tau_x^+)] against e^(-Phi(q)(x - a))";
  x.r.add(one);
  Verdict two = z_verdict("exit-law/two-sided", x.c, e.two_sided, n);
  two.params = {{"a", a}, {"x", level}, {"beta", x.c.beta}};
  two.note = "P(tau_x^+ < e_beta, tau_x^+ < tau_0^-) against W^(beta)(a) / W^(beta)(x)";
  x.r.add(two);

  BranchingConfig cfg;
  cfg.model = m;
  cfg.beta = x.c.beta;
  cfg.start = a;
  cfg.lattice = x.c.numbers(s, "lattice", {0.5, 1.0, 2.0, 3.0});
  cfg.horizon = cfg.lattice.back();
  cfg.dt = std::min(x.c.dt, cfg.horizon / 100.0);
  cfg.seed = hash_combine(x.seed, 2);
  cfg.purpose = "expected-count";
  const auto ec = expected_count_check(cfg, n, x.jobs);
  for (std::size_t i = 0; i < ec.rows.size(); ++i) {
    Verdict v = z_verdict("expected-count", x.c, ec.rows[i], n);
    v.params = {{"a", a}, {"beta", x.c.beta}, {"t", ec.times[i]}};
    v.note = "E[N_t] against e^(beta t) P(tau_0^- > t)";
    x.r.add(v);
  }
}

void check_kendall(Context& x) {
  const std::string s = "kendall";
  LevyModel m = x.c.model;
  std::optional<double> tilt;
  if (x.c.raw(s, "tilt")) {
    tilt = x.c.number(s, "tilt", 0.0);
    m = make_tilted(m, *tilt).model;
  }
  const double level = x.c.number(s, "level", 1.0);
  const auto edges = x.c.numbers(s, "edges", {0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0});
  const auto rep = kendall_check(m, level, edges, x.replicates(), x.c.number(s, "dt", 0.01), x.seed,
                                 x.jobs);
  json cells = json::array();
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    cells.push_back({{"cell", {rep.cell_edges[i], rep.cell_edges[i + 1]}}, {"estimate", rep.cells[i].estimate},
                     {"target", rep.cells[i].target}, {"z", rep.cells[i].z}});
  }
  Verdict v = make("kendall", x.c);
  v.params = {{"level", level}};
  if (tilt) v.params.emplace_back("tilt", *tilt);
  v.estimate = rep.chi_square;
  v.target = static_cast<double>(rep.cells.size());
  v.window_lo = edges.front();
  v.window_hi = edges.back();
  v.n = rep.n;
  v.pass = rep.pass;
  v.note = "chi-square over cells (target: its degrees of freedom); passes when the p-value is >= 0.0027";
  x.r.add(v, json{{"p_value", rep.p_value}, {"cells", cells}});
}

void check_kappa(Context& x) {
  const std::string s = "kappa";
  const auto& m = x.c.model;
  const double beta = x.c.beta;
  const double step = 0.125;
  const double cover = std::max(4.0, std::ceil(kappa_required_coverage(m, beta) / step) * step);
  const auto th = threshold_grid(step, cover);
  const auto curve = free_maximum_curve(m, beta, th, x.c.count(s, "curve_replicates", x.replicates()),
                                        x.c.number(s, "curve_dt", 0.05), 10.0, hash_combine(x.seed, 1), x.jobs);
  write_tail_csv(curve, std::nullopt, x.path("kappa_free_curve.csv"));
  x.artifact("kappa_free_curve.csv");

  KappaOptions ko;
  ko.mc_size = x.c.count(s, "mc_size", ko.mc_size);
  ko.seed = hash_combine(x.seed, 2);
  ko.jobs = x.jobs;
  const auto k = estimate_kappa(m, beta, curve, ko);

  const double x_lo = x.c.number(s, "x_lo", 6.0), x_hi = x.c.number(s, "x_hi", 10.0);
  BranchingConfig cfg;
  cfg.model = m;
  cfg.beta = beta;
  cfg.start = x.c.start;
  cfg.horizon = 400.0;
  cfg.dt = x.c.dt;
  cfg.seed = hash_combine(x.seed, 3);
  cfg.stop_at_max = x_hi;
  cfg.purpose = "kappa/tail";
  std::vector<double> levels;
  for (double v = x_lo; v <= x_hi + 1e-9; v += 0.5) levels.push_back(v);
  const std::size_t n = x.c.count(s, "tail_replicates", x.replicates());
  const auto tail = simulate_max_tail(cfg, n, levels, x.jobs);

  const ConditionedPathSampler h(m, beta);
  const double w = std::exp(k.phi_neg_beta * x.c.start + h.log_h(x.c.start));
  std::ostringstream csv;
  csv.precision(17);
  csv << "x,count,mc,ci_lo,ci_hi,implied,implied_lo,implied_hi,overlap\n";
  json rows = json::array();
  bool all = k.kappa > 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double decay = w * std::exp(-k.phi_neg_beta * levels[i]);
    const double lo = k.ci_lo * decay, hi = k.ci_hi * decay;
    const bool overlap = std::max(lo, tail.ci_lo[i]) <= std::min(hi, tail.ci_hi[i]);
    all = all && overlap;
    csv << levels[i] << ',' << tail.counts[i] << ',' << tail.survival[i] << ',' << tail.ci_lo[i] << ','
        << tail.ci_hi[i] << ',' << k.kappa * decay << ',' << lo << ',' << hi << ',' << (overlap ? 1 : 0) << '\n';
    rows.push_back({{"x", levels[i]}, {"mc", tail.survival[i]}, {"ci", {tail.ci_lo[i], tail.ci_hi[i]}},
                    {"implied", k.kappa * decay}, {"implied_ci", {lo, hi}}, {"overlap", overlap}});
  }
  write_text(x.path("kappa_tail.csv"), csv.str());
  x.artifact("kappa_tail.csv");

  Verdict v = make("kappa", x.c);
  v.params = {{"beta", beta}, {"a", x.c.start}, {"mc_size", static_cast<double>(k.mc_size)}};
  v.estimate = k.kappa;
  v.se = (k.ci_hi - k.ci_lo) / (2.0 * 1.959963984540054);
  v.window_lo = x_lo;
  v.window_hi = x_hi;
  v.n = tail.n;
  v.pass = all;
  v.note = "kappa W^(-beta)(a) e^(-Phi(-beta) x) must overlap the MC tail interval at every x in the window";
  x.r.add(v, json{{"kappa", k.kappa}, {"ci", {k.ci_lo, k.ci_hi}}, {"raw", k.raw}, {"raw_se", k.raw_se},
                  {"psi_prime", k.psi_prime}, {"phi_neg_beta", k.phi_neg_beta}, {"w_neg_beta_a", w},
                  {"truncation_horizon", k.truncation_horizon}, {"truncation_change", k.truncation_change},
                  {"method", k.method}, {"rows", rows}});
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::uint64_t check_seed(std::uint64_t seed, const std::string& check) {
  return hash_combine(seed, hash_string(check));
}

CheckResult run_check(const std::string& name, const ExperimentConfig& config, const std::string& out_dir,
                      unsigned jobs) {
  CheckResult r;
  r.check = name;
  r.model_hash = config.model.hash();
  Context x{config, name, out_dir, jobs, check_seed(config.seed, name), r};
  if (name == "characteristics") {
    check_characteristics(x);
  } else if (name == "scale") {
    check_scale(x);
  } else if (name == "rho") {
    check_rho(x);
  } else if (name == "tilt-adjudicate") {
    check_tilt(x);
  } else if (name == "picard-cross") {
    check_picard(x);
  } else if (name == "theorem1") {
    check_theorem1(x);
  } else if (name == "theorem2") {
    check_theorem2(x);
  } else if (name == "corollary") {
    check_corollary(x);
  } else if (name == "exit-rate") {
    check_exit(x);
  } else if (name == "kendall") {
    check_kendall(x);
  } else if (name == "kappa") {
    check_kappa(x);
  } else {
    throw InputError("unknown check " + name);
  }
  return r;
}

RunSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir, std::ostream& log) {
  std::filesystem::create_directories(out_dir);
  const std::string started = utc_now();
  RunSummary summary;
  summary.results.resize(config.checks.size());

  auto one = [&](std::size_t i, unsigned jobs) {
    const std::string& name = config.checks[i];
    CheckResult& r = summary.results[i];
    try {
      r = run_check(name, config, out_dir, jobs);
    } catch (const std::exception& e) {
      r.check = name;
      r.model_hash = config.model.hash();
      r.error = e.what();
    }
    r.artifacts.insert(r.artifacts.begin(), name + ".json");
    write_text((std::filesystem::path(out_dir) / (name + ".json")).string(), dump(r.to_json()));
  };
  if (config.parallel_checks) {
    parallel_for(config.checks.size(), config.jobs, [&](std::size_t i) { one(i, 1); });
  } else {
    for (std::size_t i = 0; i < config.checks.size(); ++i) {
      log << "running " << config.checks[i] << std::endl;
      one(i, config.jobs);
    }
  }

  json checks = json::array();
  bool all = true;
  for (const auto& r : summary.results) {
    const std::string status = !r.error.empty() ? "ERROR" : (r.pass() ? "PASS" : "FAIL");
    all = all && r.pass();
    log << status << "  " << r.check;
    if (!r.error.empty()) log << "  " << r.error;
    log << '\n';
    for (const auto& v : r.verdicts) {
      log << "    " << (v.pass ? "PASS" : "FAIL") << "  " << v.check << "  estimate " << v.estimate << "  target "
          << v.target;
      if (std::isfinite(v.se)) log << "  se " << v.se;
      log << '\n';
    }
    checks.push_back({{"check", r.check},
                      {"seed", check_seed(config.seed, r.check)},
                      {"verdict", status},
                      {"artifacts", r.artifacts}});
  }
  summary.exit_status = all ? 0 : 1;

  json manifest{{"tool", "snlevy"},
                {"config", config.source},
                {"model", config.model.describe()},
                {"model_hash", config.model.hash()},
                {"seed", config.seed},
                {"jobs", config.jobs},
                {"parallel_checks", config.parallel_checks},
                {"started", started},
                {"finished", utc_now()},
                {"checks", checks},
                {"exit_status", summary.exit_status}};
  write_text((std::filesystem::path(out_dir) / "manifest.json").string(), dump(manifest));
  return summary;
}

}  // namespace snlevy::app
