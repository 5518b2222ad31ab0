#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "snlevy/errors.hpp"

namespace snlevy::app {

namespace {

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run",
       {"beta", "start", "barrier", "replicates", "horizon", "dt", "seed", "critical_band", "threshold_step",
        "threshold_max", "out", "checks", "jobs", "parallel_checks"}},
      {"model",
       {"kind", "drift", "gaussian", "jump_rate", "jump_law", "jump_mean", "jump_size", "mixture_weights",
        "mixture_means", "intensity", "alpha", "tempering", "cutoff"}},
      {"scale", {"x_max", "h", "q"}},
      {"rho", {"x"}},
      {"theorem1", {"a", "horizon", "step", "window_lo", "window_hi", "power", "single_particle", "replicates"}},
      {"theorem2",
       {"a", "starts", "x_max", "step", "window_lo", "window_hi", "critical_x_max", "critical_window_lo",
        "critical_window_hi", "replicates"}},
      {"corollary", {"starts", "x_max", "step", "window_lo", "window_hi", "prune_depth", "replicates"}},
      {"exit-rate", {"a", "x", "horizon", "step", "window_lo", "window_hi", "replicates", "q", "lattice"}},
      {"kendall", {"level", "edges", "tilt", "replicates", "dt"}},
      {"picard-cross", {"starts", "times", "levels", "replicates", "min_inside", "h", "dt", "lemma3_replicates"}},
      {"kappa", {"mc_size", "x_lo", "x_hi", "tail_replicates", "curve_replicates", "curve_dt"}},
      {"tilt-adjudicate", {"c", "q", "x_max", "h", "t", "replicates"}},
  };
  return keys;
}

[[noreturn]] void bad(const std::string& section, const std::string& key, const std::string& why) {
  throw InputError("config: [" + section + "] " + key + ": " + why);
}

std::vector<std::string> tokens(const std::string& s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

/// A number, or a multiple of pi written as "pi", "2pi", "0.5pi".
std::optional<double> parse_number(const std::string& s) {
  std::string t = s;
  double scale = 1.0;
  if (t.size() >= 2 && t.compare(t.size() - 2, 2, "pi") == 0) {
    t.resize(t.size() - 2);
    if (!t.empty() && t.back() == '*') t.pop_back();
    scale = std::acos(-1.0);
    if (t.empty()) return scale;
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size() || !std::isfinite(v)) return std::nullopt;
    return v * scale;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

double get_number(const std::map<std::string, std::string>& sec, const std::string& section, const std::string& key,
                  double fallback) {
  const auto it = sec.find(key);
  if (it == sec.end()) return fallback;
  const auto v = parse_number(it->second);
  if (!v) bad(section, key, "expected a number, got '" + it->second + "'");
  return *v;
}

std::uint64_t get_unsigned(const std::map<std::string, std::string>& sec, const std::string& section,
                           const std::string& key, std::uint64_t fallback) {
  const auto it = sec.find(key);
  if (it == sec.end()) return fallback;
  const auto v = parse_number(it->second);
  if (!v || *v < 0.0 || std::floor(*v) != *v || *v > 1.8e19) {
    bad(section, key, "expected a nonnegative integer, got '" + it->second + "'");
  }
  return static_cast<std::uint64_t>(*v);
}

std::vector<double> get_numbers(const std::map<std::string, std::string>& sec, const std::string& section,
                                const std::string& key) {
  std::vector<double> out;
  const auto it = sec.find(key);
  if (it == sec.end()) return out;
  for (const auto& w : tokens(it->second)) {
    const auto v = parse_number(w);
    if (!v) bad(section, key, "expected numbers, got '" + w + "'");
    out.push_back(*v);
  }
  return out;
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  bad(section, key, "expected true or false, got '" + v + "'");
}

LevyModel build_model(const std::map<std::string, std::string>& m) {
  const std::string s = "model";
  auto text = [&](const std::string& key, const std::string& fallback) {
    const auto it = m.find(key);
    return it == m.end() ? fallback : it->second;
  };
  auto required = [&](const std::string& key) {
    if (!m.count(key)) bad(s, key, "required for this model kind");
    return get_number(m, s, key, 0.0);
  };
  const std::string kind = text("kind", "brownian");
  const double drift = get_number(m, s, "drift", -1.0);
  const double gaussian = get_number(m, s, "gaussian", 1.0);

  auto reject = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
      if (m.count(k)) bad(s, k, "not used by kind = " + kind);
    }
  };

  try {
    if (kind == "brownian") {
      reject({"jump_rate", "jump_law", "jump_mean", "jump_size", "mixture_weights", "mixture_means", "intensity",
              "alpha", "tempering", "cutoff"});
      return LevyModel::brownian(drift, gaussian);
    }
    if (kind == "compound-poisson") {
      reject({"intensity", "alpha", "tempering", "cutoff"});
      const double rate = required("jump_rate");
      const std::string law = text("jump_law", "exponential");
      NegativeJumpLaw jl = ExponentialMagnitude{1.0};
      if (law == "exponential") {
        jl = ExponentialMagnitude{required("jump_mean")};
      } else if (law == "fixed") {
        jl = FixedMagnitude{required("jump_size")};
      } else if (law == "mixture") {
        jl = MixtureOfExponentials{get_numbers(m, s, "mixture_weights"), get_numbers(m, s, "mixture_means")};
      } else {
        bad(s, "jump_law", "expected exponential, fixed or mixture, got '" + law + "'");
      }
      return LevyModel(drift, gaussian, CompoundPoisson{rate, jl});
    }
    if (kind == "stable-like") {
      reject({"jump_rate", "jump_law", "jump_mean", "jump_size", "mixture_weights", "mixture_means"});
      return LevyModel(drift, gaussian,
                       TruncatedStableLike{required("intensity"), required("alpha"), get_number(m, s, "tempering", 1.0),
                                           get_number(m, s, "cutoff", 0.01)});
    }
  } catch (const InputError& e) {
    const std::string what = e.what();
    if (what.rfind("config:", 0) == 0) throw;
    throw InputError("config: [model] " + what);
  }
  bad(s, "kind", "expected brownian, compound-poisson or stable-like, got '" + kind + "'");
}

void check_positive(const std::string& section, const std::string& key, double v) {
  if (!(v > 0.0)) bad(section, key, "must be > 0");
}

}  // namespace

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> order{"characteristics", "scale",     "rho",       "tilt-adjudicate",
                                              "picard-cross",    "theorem1",  "theorem2",  "corollary",
                                              "exit-rate",       "kendall",   "kappa"};
  return order;
}

std::optional<std::string> ExperimentConfig::raw(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  if (s == sections.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

double ExperimentConfig::number(const std::string& section, const std::string& key, double fallback) const {
  const auto s = sections.find(section);
  return s == sections.end() ? fallback : get_number(s->second, section, key, fallback);
}

std::size_t ExperimentConfig::count(const std::string& section, const std::string& key, std::size_t fallback) const {
  const auto s = sections.find(section);
  return s == sections.end() ? fallback : get_unsigned(s->second, section, key, fallback);
}

bool ExperimentConfig::flag(const std::string& section, const std::string& key, bool fallback) const {
  const auto v = raw(section, key);
  return v ? parse_bool(section, key, *v) : fallback;
}

std::vector<double> ExperimentConfig::numbers(const std::string& section, const std::string& key,
                                              std::vector<double> fallback) const {
  const auto s = sections.find(section);
  if (s == sections.end() || !s->second.count(key)) return fallback;
  auto v = get_numbers(s->second, section, key);
  if (v.empty()) bad(section, key, "empty list");
  return v;
}

void set_checks(ExperimentConfig& config, const std::vector<std::string>& checks) {
  const auto& order = known_checks();
  std::set<std::string> wanted;
  for (const auto& c : checks) {
    if (std::find(order.begin(), order.end(), c) == order.end()) {
      std::string list;
      for (const auto& k : order) list += (list.empty() ? "" : ", ") + k;
      bad("run", "checks", "unknown check '" + c + "' (known: " + list + ")");
    }
    wanted.insert(c);
  }
  config.checks.clear();
  for (const auto& c : order) {
    if (wanted.count(c)) config.checks.push_back(c);
  }
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InputError("config: " + source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  ExperimentConfig c;
  c.source = source;
  std::map<std::string, std::map<std::string, std::string>> all;
  for (const auto& [name, section] : tree) {
    if (section.empty() && !section.data().empty()) throw InputError("config: key '" + name + "' outside a section");
    const auto allowed = allowed_keys().find(name);
    if (allowed == allowed_keys().end()) throw InputError("config: unknown section [" + name + "]");
    for (const auto& [key, value] : section) {
      if (!allowed->second.count(key)) bad(name, key, "unknown key");
      all[name][key] = value.get_value<std::string>();
    }
  }

  const auto& run = all["run"];
  const std::string r = "run";
  c.beta = get_number(run, r, "beta", c.beta);
  c.start = get_number(run, r, "start", c.start);
  c.replicates = get_unsigned(run, r, "replicates", c.replicates);
  c.horizon = get_number(run, r, "horizon", c.horizon);
  c.dt = get_number(run, r, "dt", c.dt);
  c.seed = get_unsigned(run, r, "seed", c.seed);
  c.critical_band = get_number(run, r, "critical_band", c.critical_band);
  c.jobs = static_cast<unsigned>(get_unsigned(run, r, "jobs", c.jobs));
  if (run.count("threshold_step")) c.threshold_step = get_number(run, r, "threshold_step", 0.0);
  if (run.count("threshold_max")) c.threshold_max = get_number(run, r, "threshold_max", 0.0);
  if (run.count("out")) c.out = run.at("out");
  if (run.count("parallel_checks")) c.parallel_checks = parse_bool(r, "parallel_checks", run.at("parallel_checks"));
  if (run.count("barrier")) {
    const auto& b = run.at("barrier");
    if (b == "absorbed") {
      c.barrier = BarrierKind::Absorbed;
    } else if (b == "free") {
      c.barrier = BarrierKind::Free;
    } else {
      bad(r, "barrier", "expected absorbed or free, got '" + b + "'");
    }
  }
  if (run.count("checks")) set_checks(c, tokens(run.at("checks")));

  if (!(c.beta >= 0.0)) bad(r, "beta", "must be >= 0");
  if (c.barrier == BarrierKind::Absorbed && !(c.start > 0.0)) bad(r, "start", "must be > 0 with an absorbing barrier");
  if (c.replicates == 0) bad(r, "replicates", "must be > 0");
  check_positive(r, "horizon", c.horizon);
  if (!(c.dt > 0.0 && c.dt <= 1.0)) bad(r, "dt", "must lie in (0, 1]");
  if (!(c.critical_band >= 0.0 && c.critical_band < 0.1)) bad(r, "critical_band", "must lie in [0, 0.1)");
  if (c.threshold_step) check_positive(r, "threshold_step", *c.threshold_step);
  if (c.threshold_max && !(*c.threshold_max >= c.threshold_step.value_or(0.25))) {
    bad(r, "threshold_max", "must be >= threshold_step");
  }

  c.model = build_model(all["model"]);
  all.erase("run");
  all.erase("model");
  c.sections = std::move(all);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot read " + path);
  return parse_config(in, path);
}

void validate_for_checks(const ExperimentConfig& c) {
  const auto chars = characteristics(c.model, c.critical_band);
  const bool dies = chars.q_star.has_value() && chars.psi_prime_at_zero < 0.0;
  const double qs = chars.q_star_or_zero();
  auto wants = [&](const char* name) { return std::find(c.checks.begin(), c.checks.end(), name) != c.checks.end(); };
  auto need_absorbed = [&](const char* name) {
    if (wants(name) && c.barrier == BarrierKind::Free) {
      bad("run", "barrier", std::string(name) + " needs barrier = absorbed (the corollary check covers the free process)");
    }
  };
  for (const char* name : {"theorem1", "theorem2", "picard-cross", "kappa", "exit-rate"}) need_absorbed(name);

  for (const char* name : {"theorem1", "theorem2"}) {
    if (!wants(name)) continue;
    if (!dies) bad("model", "drift", std::string(name) + " needs Psi'(0) < 0");
    if (chars.regime(c.beta) == Regime::SurvivesWithPositiveProbability) {
      bad("run", "beta", std::string(name) + " needs beta <= q* = " + std::to_string(qs));
    }
  }
  for (const char* name : {"corollary", "kappa"}) {
    if (!wants(name)) continue;
    if (!dies || chars.regime(c.beta) != Regime::DiesOutSubcritical) {
      bad("run", "beta", std::string(name) + " needs Psi'(0) < 0 and beta < q*");
    }
  }
  if (wants("picard-cross") && c.model.has_jumps()) bad("model", "kind", "picard-cross needs a Brownian model");
  if (wants("exit-rate")) {
    if (!(c.model.gaussian() > 0.0)) bad("model", "gaussian", "exit-rate needs a Gaussian part");
    const double a = c.number("exit-rate", "a", c.start);
    const double x = c.number("exit-rate", "x", std::acos(-1.0));
    if (!(a > 0.0 && a < x)) bad("exit-rate", "x", "needs 0 < a < x");
  }
  if (wants("tilt-adjudicate")) {
    const double cc = c.number("tilt-adjudicate", "c", -c.beta);
    if (cc < -qs) bad("tilt-adjudicate", "c", "must be >= -q*");
  }
  if (wants("theorem1") && c.number("theorem1", "horizon", c.horizon) <= 0.0) {
    bad("theorem1", "horizon", "must be > 0");
  }
}

}  // namespace snlevy::app
