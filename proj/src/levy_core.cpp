#include "snlevy/levy_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "snlevy/errors.hpp"
#include "snlevy/rng.hpp"

namespace snlevy {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double integrate_finite(const auto& f, double a, double b) {
  thread_local boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(f, a, b, 1e-13);
}

double integrate_to_infinity(const auto& f, double a) {
  thread_local boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate(f, a, kInf, 1e-13);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// (expm1(-x) + x) / x^2, accurate for small x >= 0.
double compensated_kernel(double x) {
  if (x < 1e-3) {
    return 0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0;
  }
  return (std::expm1(-x) + x) / (x * x);
}

// -expm1(-x) / x, accurate for small x >= 0.
double one_minus_exp_over(double x) {
  if (x < 1e-8) return 1.0 - 0.5 * x;
  return -std::expm1(-x) / x;
}

// --- jump law moments -------------------------------------------------------

// E[exp(-l Y)], E[Y exp(-l Y)], E[Y^2 exp(-l Y)] for the magnitude law.
struct LawMoments {
  double m0, m1, m2;
};

LawMoments law_moments(const NegativeJumpLaw& law, double l) {
  return std::visit(
      Overloaded{
          [l](const ExponentialMagnitude& e) {
            const double d = 1.0 + l * e.mean;
            return LawMoments{1.0 / d, e.mean / (d * d), 2.0 * e.mean * e.mean / (d * d * d)};
          },
          [l](const FixedMagnitude& f) {
            const double w = std::exp(-l * f.size);
            return LawMoments{w, f.size * w, f.size * f.size * w};
          },
          [l](const MixtureOfExponentials& m) {
            LawMoments acc{0, 0, 0};
            for (std::size_t i = 0; i < m.weights.size(); ++i) {
              const double mean = m.means[i];
              const double d = 1.0 + l * mean;
              acc.m0 += m.weights[i] / d;
              acc.m1 += m.weights[i] * mean / (d * d);
              acc.m2 += m.weights[i] * 2.0 * mean * mean / (d * d * d);
            }
            return acc;
          }},
      law);
}

std::complex<double> law_transform(const NegativeJumpLaw& law, std::complex<double> l) {
  return std::visit(Overloaded{[l](const ExponentialMagnitude& e) {
                                 return 1.0 / (1.0 + l * e.mean);
                               },
                               [l](const FixedMagnitude& f) { return std::exp(-l * f.size); },
                               [l](const MixtureOfExponentials& m) {
                                 std::complex<double> acc = 0.0;
                                 for (std::size_t i = 0; i < m.weights.size(); ++i) {
                                   acc += m.weights[i] / (1.0 + l * m.means[i]);
                                 }
                                 return acc;
                               }},
                    law);
}

double law_mean(const NegativeJumpLaw& law) { return law_moments(law, 0.0).m1; }

void validate_law(const NegativeJumpLaw& law) {
  std::visit(Overloaded{[](const ExponentialMagnitude& e) {
                          if (!(e.mean > 0.0) || !std::isfinite(e.mean)) {
                            throw InputError("exponential jump mean must be positive");
                          }
                        },
                        [](const FixedMagnitude& f) {
                          if (!(f.size > 0.0) || !std::isfinite(f.size)) {
                            throw InputError("fixed jump size must be positive");
                          }
                        },
                        [](const MixtureOfExponentials& m) {
                          if (m.weights.empty() || m.weights.size() != m.means.size()) {
                            throw InputError("mixture needs matching, nonempty weights and means");
                          }
                          double total = 0.0;
                          for (std::size_t i = 0; i < m.weights.size(); ++i) {
                            if (!(m.weights[i] >= 0.0)) throw InputError("mixture weights must be >= 0");
                            if (!(m.means[i] > 0.0)) throw InputError("mixture means must be positive");
                            total += m.weights[i];
                          }
                          if (std::abs(total - 1.0) > 1e-12) {
                            throw InputError("mixture weights must sum to 1");
                          }
                        }},
             law);
}

// Levy density of the magnitude law, used by the quadrature backend.
double law_density(const NegativeJumpLaw& law, double y) {
  return std::visit(Overloaded{[y](const ExponentialMagnitude& e) {
                                 return std::exp(-y / e.mean) / e.mean;
                               },
                               [](const FixedMagnitude&) { return 0.0; },
                               [y](const MixtureOfExponentials& m) {
                                 double acc = 0.0;
                                 for (std::size_t i = 0; i < m.weights.size(); ++i) {
                                   acc += m.weights[i] * std::exp(-y / m.means[i]) / m.means[i];
                                 }
                                 return acc;
                               }},
                    law);
}

// --- stable-like helpers ------------------------------------------------------

double stable_integral(const TruncatedStableLike& s, double power, double lo, double hi) {
  // int_lo^hi y^power e^(-tempering y) dy
  auto f = [&](double y) { return std::pow(y, power) * std::exp(-s.tempering * y); };
  if (std::isinf(hi)) return integrate_to_infinity(f, lo);
  return integrate_finite(f, lo, hi);
}

double stable_jump_psi_quadrature(const TruncatedStableLike& s, double l) {
  const double a = s.alpha;
  const double th = s.tempering;
  auto near = [&](double y) {
    return std::pow(y, 1.0 - a) * compensated_kernel(l * y) * l * l * std::exp(-th * y);
  };
  auto far = [&](double y) { return std::expm1(-l * y) * std::pow(y, -1.0 - a) * std::exp(-th * y); };
  double total = integrate_finite(near, 0.0, 1.0);
  if (l > 0.0) total += integrate_to_infinity(far, 1.0);
  return s.intensity * total;
}

double stable_jump_dpsi_quadrature(const TruncatedStableLike& s, double l) {
  const double a = s.alpha;
  const double th = s.tempering;
  auto near = [&](double y) {
    return std::pow(y, 1.0 - a) * l * one_minus_exp_over(l * y) * std::exp(-th * y);
  };
  auto far = [&](double y) { return -std::pow(y, -a) * std::exp(-(l + th) * y); };
  double total = l > 0.0 ? integrate_finite(near, 0.0, 1.0) : 0.0;
  total += integrate_to_infinity(far, 1.0);
  return s.intensity * total;
}

double stable_jump_d2psi(const TruncatedStableLike& s, double l) {
  const double z = l + s.tempering;
  if (z <= 0.0) return kInf;
  return s.intensity * std::tgamma(2.0 - s.alpha) * std::pow(z, s.alpha - 2.0);
}

std::complex<double> stable_jump_psi_complex(const TruncatedStableLike& s,
                                             const detail::StableMoments& mom,
                                             std::complex<double> l) {
  const double a = s.alpha;
  const double th = s.tempering;
  const double g = boost::math::tgamma(-a);
  const std::complex<double> shifted = std::pow(th + l, a);
  const double base = th > 0.0 ? std::pow(th, a) : 0.0;
  if (a > 1.0) {
    const double slope = th > 0.0 ? a * std::pow(th, a - 1.0) : 0.0;
    return s.intensity * (g * (shifted - base - slope * l) - l * mom.above_one);
  }
  return s.intensity * (g * (shifted - base) + l * mom.below_one);
}

void require_nonnegative(double lambda) {
  if (!(lambda >= 0.0)) {
    throw DomainError("Laplace exponent requires lambda >= 0, got " + fmt(lambda));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

LevyModel::LevyModel(double drift, double gaussian, JumpPart jumps)
    : drift_(drift), gaussian_(gaussian), jumps_(std::move(jumps)) {
  if (!std::isfinite(drift_)) throw InputError("drift must be finite");
  if (!(gaussian_ >= 0.0) || !std::isfinite(gaussian_)) {
    throw InputError("gaussian coefficient must be finite and >= 0");
  }
  std::visit(Overloaded{[&](const NoJumps&) {
                          if (gaussian_ == 0.0 && drift_ <= 0.0) {
                            throw InputError(
                                "pure drift with drift <= 0 is the negative of a subordinator");
                          }
                        },
                        [&](const CompoundPoisson& cp) {
                          if (!(cp.rate > 0.0) || !std::isfinite(cp.rate)) {
                            throw InputError("compound Poisson rate must be positive");
                          }
                          validate_law(cp.jump_law);
                          if (gaussian_ == 0.0 && drift_ <= 0.0) {
                            throw InputError(
                                "drift <= 0 without Gaussian part: the negative of a subordinator");
                          }
                        },
                        [&](const TruncatedStableLike& s) {
                          if (!(s.intensity > 0.0)) throw InputError("stable-like intensity must be positive");
                          if (!(s.alpha > 0.0 && s.alpha < 2.0) || s.alpha == 1.0) {
                            throw InputError("stable-like alpha must lie in (0,1) or (1,2)");
                          }
                          if (!(s.tempering >= 0.0)) throw InputError("tempering must be >= 0");
                          if (!(s.cutoff > 0.0 && s.cutoff <= 1.0)) {
                            throw InputError("small-jump cutoff must lie in (0,1]");
                          }
                          if (s.alpha < 1.0 && s.tempering == 0.0) {
                            throw InputError("alpha < 1 needs tempering > 0 for a finite mean");
                          }
                          // int (x^2 ^ 1) nu(dx) < inf holds for alpha < 2.
                          stable_.above_one = stable_integral(s, -s.alpha, 1.0, kInf);
                          if (s.alpha < 1.0) {
                            stable_.below_one = stable_integral(s, -s.alpha, 0.0, 1.0);
                            if (gaussian_ == 0.0 &&
                                drift_ + s.intensity * stable_.below_one <= 0.0) {
                              throw InputError(
                                  "non-positive bounded-variation drift: the negative of a "
                                  "subordinator");
                            }
                          }
                        }},
             jumps_);
}

bool LevyModel::bounded_variation() const noexcept {
  if (gaussian_ > 0.0) return false;
  if (const auto* s = std::get_if<TruncatedStableLike>(&jumps_)) return s->alpha < 1.0;
  return true;
}

double LevyModel::bounded_variation_drift() const {
  if (const auto* s = std::get_if<TruncatedStableLike>(&jumps_)) {
    return drift_ + s->intensity * stable_.below_one;
  }
  return drift_;
}

std::string LevyModel::describe() const {
  std::ostringstream out;
  out << "drift=" << fmt(drift_) << ";gaussian=" << fmt(gaussian_) << ";jumps=";
  std::visit(Overloaded{[&](const NoJumps&) { out << "none"; },
                        [&](const CompoundPoisson& cp) {
                          out << "cp(rate=" << fmt(cp.rate) << ",";
                          std::visit(Overloaded{[&](const ExponentialMagnitude& e) {
                                                  out << "exp(mean=" << fmt(e.mean) << ")";
                                                },
                                                [&](const FixedMagnitude& f) {
                                                  out << "fixed(size=" << fmt(f.size) << ")";
                                                },
                                                [&](const MixtureOfExponentials& m) {
                                                  out << "mixture(";
                                                  for (std::size_t i = 0; i < m.weights.size(); ++i) {
                                                    if (i) out << ",";
                                                    out << fmt(m.weights[i]) << ":" << fmt(m.means[i]);
                                                  }
                                                  out << ")";
                                                }},
                                     cp.jump_law);
                          out << ")";
                        },
                        [&](const TruncatedStableLike& s) {
                          out << "stable(intensity=" << fmt(s.intensity) << ",alpha=" << fmt(s.alpha)
                              << ",tempering=" << fmt(s.tempering) << ",cutoff=" << fmt(s.cutoff)
                              << ")";
                        }},
             jumps_);
  return out.str();
}

std::string LevyModel::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash_string(describe())));
  return buf;
}

// ---------------------------------------------------------------------------

double psi(const LevyModel& model, double lambda) {
  require_nonnegative(lambda);
  const double eta = model.gaussian();
  double value = model.drift() * lambda + 0.5 * eta * eta * lambda * lambda;
  std::visit(Overloaded{[](const NoJumps&) {},
                        [&](const CompoundPoisson& cp) {
                          value += cp.rate * (law_moments(cp.jump_law, lambda).m0 - 1.0);
                        },
                        [&](const TruncatedStableLike& s) {
                          value += stable_jump_psi_quadrature(s, lambda);
                        }},
             model.jumps());
  return value;
}

PsiDerivatives psi_derivatives(const LevyModel& model, double lambda) {
  require_nonnegative(lambda);
  const double eta2 = model.gaussian() * model.gaussian();
  PsiDerivatives d{model.drift() + eta2 * lambda, eta2};
  std::visit(Overloaded{[](const NoJumps&) {},
                        [&](const CompoundPoisson& cp) {
                          const auto m = law_moments(cp.jump_law, lambda);
                          d.first -= cp.rate * m.m1;
                          d.second += cp.rate * m.m2;
                        },
                        [&](const TruncatedStableLike& s) {
                          d.first += stable_jump_dpsi_quadrature(s, lambda);
                          d.second += stable_jump_d2psi(s, lambda);
                        }},
             model.jumps());
  return d;
}

double psi_quadrature(const LevyModel& model, double lambda) {
  require_nonnegative(lambda);
  const double eta = model.gaussian();
  double value = model.drift() * lambda + 0.5 * eta * eta * lambda * lambda;
  std::visit(Overloaded{[](const NoJumps&) {},
                        [&](const CompoundPoisson& cp) {
                          if (const auto* f = std::get_if<FixedMagnitude>(&cp.jump_law)) {
                            // An atom has no density; integrate against the point mass.
                            value += cp.rate * std::expm1(-lambda * f->size);
                            return;
                          }
                          auto integrand = [&](double y) {
                            return std::expm1(-lambda * y) * law_density(cp.jump_law, y);
                          };
                          value += cp.rate * integrate_to_infinity(integrand, 0.0);
                        },
                        [&](const TruncatedStableLike& s) {
                          value += stable_jump_psi_quadrature(s, lambda);
                        }},
             model.jumps());
  return value;
}

std::complex<double> psi_complex(const LevyModel& model, std::complex<double> lambda) {
  const double eta = model.gaussian();
  std::complex<double> value = model.drift() * lambda + 0.5 * eta * eta * lambda * lambda;
  std::visit(Overloaded{[](const NoJumps&) {},
                        [&](const CompoundPoisson& cp) {
                          value += cp.rate * (law_transform(cp.jump_law, lambda) - 1.0);
                        },
                        [&](const TruncatedStableLike& s) {
                          value += stable_jump_psi_complex(s, model.stable_moments(), lambda);
                        }},
             model.jumps());
  return value;
}

// ---------------------------------------------------------------------------

const char* to_string(Regime r) noexcept {
  switch (r) {
    case Regime::DiesOutSubcritical:
      return "DiesOutSubcritical";
    case Regime::DiesOutCritical:
      return "DiesOutCritical";
    case Regime::SurvivesWithPositiveProbability:
      return "SurvivesWithPositiveProbability";
  }
  return "unknown";
}

Regime Characteristics::regime(double beta) const {
  if (!q_star) return Regime::SurvivesWithPositiveProbability;
  const double band = critical_band * std::max(1.0, *q_star);
  if (std::abs(beta - *q_star) <= band) return Regime::DiesOutCritical;
  return beta < *q_star ? Regime::DiesOutSubcritical : Regime::SurvivesWithPositiveProbability;
}

namespace {

double psi_prime_at_zero(const LevyModel& model) {
  return std::visit(Overloaded{[&](const NoJumps&) { return model.drift(); },
                               [&](const CompoundPoisson& cp) {
                                 return model.drift() - cp.rate * law_mean(cp.jump_law);
                               },
                               [&](const TruncatedStableLike& s) {
                                 return model.drift() - s.intensity * model.stable_moments().above_one;
                               }},
                    model.jumps());
}

}  // namespace

Characteristics characteristics(const LevyModel& model, double critical_band) {
  Characteristics c;
  c.critical_band = critical_band;
  c.psi_prime_at_zero = psi_prime_at_zero(model);
  if (c.psi_prime_at_zero >= 0.0) return c;

  double hi = 1.0;
  while (psi_derivatives(model, hi).first <= 0.0) {
    hi *= 2.0;
    if (hi > 1e12) throw NumericError("could not bracket the minimum of Psi", hi);
  }
  double lo = 0.0;
  // Shrink the bracket by bisection first: Newton from a poor guess is slow
  // where Psi'' is large near zero (stable-like jumps).
  for (int i = 0; i < 8; ++i) {
    const double mid = 0.5 * (lo + hi);
    (psi_derivatives(model, mid).first < 0.0 ? lo : hi) = mid;
  }
  std::uintmax_t iterations = 200;
  auto newton = [&](double l) {
    const auto d = psi_derivatives(model, l);
    return std::make_pair(d.first, d.second);
  };
  const double star =
      boost::math::tools::newton_raphson_iterate(newton, 0.5 * (lo + hi), lo, hi, 45, iterations);
  c.lambda_star = star;
  c.q_star = -psi(model, star);
  c.psi_second_at_star = psi_derivatives(model, star).second;
  return c;
}

double phi(const LevyModel& model, double q) { return phi(model, characteristics(model), q); }

double phi(const LevyModel& model, const Characteristics& chars, double q) {
  const double q_min = -chars.q_star_or_zero();
  if (q < q_min) {
    if (q >= q_min - 1e-12 * std::max(1.0, std::abs(q_min))) return chars.lambda_star_or_zero();
    throw DomainError("phi: q = " + fmt(q) + " lies below -q* = " + fmt(q_min) +
                      "; Psi(lambda) = q has no real root (q* = " + fmt(-q_min) + ")");
  }
  const double lo = chars.lambda_star_or_zero();
  auto f = [&](double l) { return psi(model, l) - q; };
  const double f_lo = f(lo);
  if (f_lo >= 0.0) return lo;
  double hi = std::max(1.0, 2.0 * lo);
  double f_hi = f(hi);
  while (f_hi <= 0.0) {
    hi *= 2.0;
    if (hi > 1e15) throw NumericError("phi: could not bracket the root", hi);
    f_hi = f(hi);
  }
  std::uintmax_t iterations = 300;
  const auto bracket = boost::math::tools::toms748_solve(
      f, lo, hi, f_lo, f_hi, boost::math::tools::eps_tolerance<double>(42), iterations);
  return 0.5 * (bracket.first + bracket.second);
}

// ---------------------------------------------------------------------------

SimulationParameters simulation_parameters(const LevyModel& model) {
  SimulationParameters p;
  p.drift = model.drift();
  p.sigma = model.gaussian();
  std::visit(Overloaded{[](const NoJumps&) {},
                        [&](const CompoundPoisson& cp) {
                          p.jump_rate = cp.rate;
                          p.magnitudes = cp.jump_law;
                        },
                        [&](const TruncatedStableLike& s) {
                          const double eps = s.cutoff;
                          p.jump_rate = s.intensity * stable_integral(s, -1.0 - s.alpha, eps, kInf);
                          const double small_var = s.intensity * stable_integral(s, 1.0 - s.alpha, 0.0, eps);
                          p.sigma = std::sqrt(p.sigma * p.sigma + small_var);
                          if (eps < 1.0) p.drift += s.intensity * stable_integral(s, -s.alpha, eps, 1.0);
                          p.magnitudes = s;
                        }},
             model.jumps());
  return p;
}

}  // namespace snlevy
