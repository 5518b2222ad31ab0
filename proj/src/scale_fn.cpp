#include "snlevy/scale_fn.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <ostream>

#include "snlevy/errors.hpp"
#include "snlevy/tilt.hpp"

namespace snlevy {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kLevels = 3;  // h, h/2, h/4
constexpr int kMaxTerms = 512;

double sup_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Trapezoidal (f * g)(x_i) = int_0^x_i f(y) g(x_i - y) dy for every grid point.
std::vector<double> convolve(const std::vector<double>& f, const std::vector<double>& g, double h) {
  const std::size_t n = f.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    double s = 0.5 * (f[0] * g[i] + f[i] * g[0]);
    const double* gp = g.data() + i;
    for (std::size_t j = 1; j < i; ++j) s += f[j] * gp[-static_cast<std::ptrdiff_t>(j)];
    out[i] = h * s;
  }
  return out;
}

// Two Richardson steps on trapezoid values at steps h, h/2, h/4.
struct Romberg {
  double value;
  double error;
};

Romberg romberg(double s0, double s1, double s2) {
  const double r0 = (4.0 * s1 - s0) / 3.0;
  const double r1 = (4.0 * s2 - s1) / 3.0;
  const double rr = (16.0 * r1 - r0) / 15.0;
  return {rr, std::abs(rr - r1)};
}

std::vector<double> subsample(const std::vector<double>& fine, std::size_t stride) {
  std::vector<double> out;
  out.reserve(fine.size() / stride + 1);
  for (std::size_t i = 0; i < fine.size(); i += stride) out.push_back(fine[i]);
  return out;
}

/// Contour shift: past Phi(0), by at most 1/t so that e^(sigma0 t) stays near
/// e^(Phi(0) t) and the alternating sum does not cancel catastrophically.
double contour(double phi0, double t) { return phi0 + std::min(1.0, 1.0 / t); }

double bromwich(const LevyModel& model, double sigma0, double t, const InversionParameters& p) {
  // g(t) = e^(-sigma0 t) W(t) has transform 1 / Psi(s + sigma0).
  auto transform = [&](std::complex<double> s) { return 1.0 / psi_complex(model, s + sigma0); };
  const double scale = std::exp(p.a / 2.0) / t;
  std::vector<double> partial(p.terms + p.euler + 1);
  double sum = 0.5 * transform({p.a / (2.0 * t), 0.0}).real();
  partial[0] = sum;
  for (int k = 1; k <= p.terms + p.euler; ++k) {
    const std::complex<double> s(p.a / (2.0 * t), k * kPi / t);
    sum += (k % 2 ? -1.0 : 1.0) * transform(s).real();
    partial[k] = sum;
  }
  double binom = 1.0;
  double acc = 0.0;
  for (int m = 0; m <= p.euler; ++m) {
    acc += binom * partial[p.terms + m];
    binom = binom * (p.euler - m) / (m + 1);
  }
  acc *= std::pow(2.0, -p.euler);
  return std::exp(sigma0 * t) * scale * acc;
}

struct ZeroValues {
  std::vector<double> values;
  ScaleMethod method;
};

// W^(0) on x_i = i*h, i = 0..n.
ZeroValues w_zero_values(const LevyModel& model, std::size_t n, double h) {
  ZeroValues out{std::vector<double>(n + 1), ScaleMethod::ClosedFormBrownian};
  if (model.is_brownian()) {
    for (std::size_t i = 0; i <= n; ++i) {
      out.values[i] = brownian_scale(model.drift(), model.gaussian(), 0.0, i * h);
    }
    return out;
  }
  out.method = ScaleMethod::LaplaceInversion;
  const double phi0 = phi(model, 0.0);
  out.values[0] = w_at_origin(model);
  for (std::size_t i = 1; i <= n; ++i) out.values[i] = bromwich(model, contour(phi0, i * h), i * h, {});

  const InversionParameters fine{25.0, 40, 36};
  double worst = 0.0;
  for (double frac : {0.1, 0.3, 0.5, 0.7, 1.0}) {
    const auto i = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac * n)));
    const double check = bromwich(model, contour(phi0, i * h), i * h, fine);
    worst = std::max(worst, std::abs(check - out.values[i]) / std::max(std::abs(check), 1e-300));
  }
  if (worst > 1e-7) {
    throw NumericError("Laplace inversion cross-check failed: relative disagreement " +
                           std::to_string(worst),
                       worst);
  }
  return out;
}

std::size_t grid_points(double x_max, double h) {
  if (!(x_max > 0.0) || !(h > 0.0)) throw InputError("scale grid needs x_max > 0 and h > 0");
  const double n = x_max / h;
  const auto rounded = static_cast<std::size_t>(std::llround(n));
  if (std::abs(n - rounded) > 1e-9 * n) throw InputError("x_max must be a multiple of h");
  if (rounded < 64) throw InputError("scale grid needs x_max / h >= 64");
  return rounded;
}

void record_sign_changes(ScaleGrid& g) {
  g.sign_changes.clear();
  for (std::size_t i = 1; i + 1 < g.values.size(); ++i) {
    if ((g.values[i] > 0.0) != (g.values[i + 1] > 0.0) && g.values[i] != 0.0) {
      g.sign_changes.push_back(g.x(i));
    }
  }
}

// Successive convolution powers W^(0)*(k+1) of one model evaluated at a fixed
// x, Richardson-combined across three trapezoid steps.
class ConvolutionPowers {
 public:
  ConvolutionPowers(const LevyModel& model, double x, std::size_t n) : h_(x / n) {
    const auto fine = w_zero_values(model, 4 * n, h_ / 4.0);
    for (int l = 0; l < kLevels; ++l) {
      base_[l] = subsample(fine.values, std::size_t{1} << (2 - l));
      term_[l] = base_[l];
    }
    push_current();
  }

  std::size_t size() const noexcept { return coeffs_.size(); }
  double coefficient(std::size_t k) const { return coeffs_[k]; }

  void extend() {
    if (coeffs_.size() >= kMaxTerms) {
      throw NumericError("convolution series did not converge within 512 terms", coeffs_.back());
    }
    double last[kLevels];
    for (int l = 0; l < kLevels; ++l) {
      const double hl = h_ / (1 << l);
      term_[l] = convolve(base_[l], term_[l], hl);
      last[l] = term_[l].back();
    }
    coeffs_.push_back(romberg(last[0], last[1], last[2]).value);
  }

  /// sum_k (-delta)^k C_k with enough terms for double precision.
  double evaluate(double delta) {
    if (delta == 0.0) return coeffs_[0];
    std::size_t k = 0;
    double sum = 0.0, mag = 0.0, prev = INFINITY, power = 1.0;
    for (;; ++k) {
      if (k == coeffs_.size()) extend();
      const double t = power * coeffs_[k];
      sum += t;
      mag = std::max(mag, std::abs(t));
      if (k >= 2 && std::abs(t) <= 1e-17 * mag && std::abs(t) < prev) break;
      prev = std::abs(t);
      power *= -delta;
    }
    return sum;
  }

 private:
  void push_current() {
    coeffs_.push_back(romberg(term_[0].back(), term_[1].back(), term_[2].back()).value);
  }

  double h_;
  std::vector<double> base_[kLevels];
  std::vector<double> term_[kLevels];
  std::vector<double> coeffs_;
};

double simpson(const std::vector<double>& f, double h) {
  const std::size_t n = f.size() - 1;
  if (n < 2) return n == 1 ? 0.5 * h * (f[0] + f[1]) : 0.0;
  std::size_t m = n % 2 ? n - 3 : n;
  double s = 0.0;
  for (std::size_t i = 0; i < m; i += 2) s += f[i] + 4.0 * f[i + 1] + f[i + 2];
  s *= h / 3.0;
  if (m != n) s += 3.0 * h / 8.0 * (f[m] + 3.0 * f[m + 1] + 3.0 * f[m + 2] + f[m + 3]);
  return s;
}

double laplace_on_grid(const std::vector<double>& values, double h, double lambda) {
  std::vector<double> f(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) f[i] = std::exp(-lambda * i * h) * values[i];
  if ((f.size() - 1) % 4 != 0) return simpson(f, h);
  return (16.0 * simpson(f, h) - simpson(subsample(f, 2), 2.0 * h)) / 15.0;
}

}  // namespace

const char* to_string(ScaleMethod m) noexcept {
  switch (m) {
    case ScaleMethod::ClosedFormBrownian:
      return "ClosedFormBrownian";
    case ScaleMethod::LaplaceInversion:
      return "LaplaceInversion";
    case ScaleMethod::ConvolutionSeries:
      return "ConvolutionSeries";
  }
  return "unknown";
}

double ScaleGrid::at(double xq) const {
  if (xq < 0.0) return 0.0;
  const double xm = x_max();
  if (xq > xm * (1.0 + 1e-12)) throw DomainError("scale grid evaluated beyond x_max");
  const double pos = std::min(xq / h, static_cast<double>(values.size() - 1));
  auto i = static_cast<std::ptrdiff_t>(std::floor(pos));
  const auto last = static_cast<std::ptrdiff_t>(values.size()) - 1;
  if (values.size() < 4) {
    const std::ptrdiff_t j = std::min(i, last - 1);
    const double t = pos - j;
    return (1 - t) * values[j] + t * values[j + 1];
  }
  std::ptrdiff_t start = std::clamp<std::ptrdiff_t>(i - 1, 0, last - 3);
  double result = 0.0;
  for (std::ptrdiff_t a = start; a < start + 4; ++a) {
    double w = 1.0;
    for (std::ptrdiff_t b = start; b < start + 4; ++b) {
      if (b != a) w *= (pos - b) / static_cast<double>(a - b);
    }
    result += w * values[a];
  }
  return result;
}

double w_at_origin(const LevyModel& model) {
  return model.bounded_variation() ? 1.0 / model.bounded_variation_drift() : 0.0;
}

double brownian_scale(double d, double eta, double q, double x) {
  if (x < 0.0) return 0.0;
  if (eta == 0.0) return std::exp(q * x / d) / d;
  const double e2 = eta * eta;
  const double disc = d * d + 2.0 * q * e2;
  const double center = -d / e2;
  if (disc > 0.0) {
    const double s = std::sqrt(disc);
    // (e^(r+ x) - e^(r- x)) / s with r+- = center +- s / eta^2
    return 2.0 * std::exp(center * x) * std::sinh(s * x / e2) / s;
  }
  if (disc == 0.0) return 2.0 / e2 * x * std::exp(center * x);
  const double w = std::sqrt(-disc) / e2;
  return 2.0 / e2 * std::exp(center * x) * std::sin(w * x) / w;
}

double w_zero_inverted(const LevyModel& model, double x, const InversionParameters& p) {
  if (!(x > 0.0)) return x < 0.0 ? 0.0 : w_at_origin(model);
  return bromwich(model, contour(phi(model, 0.0), x), x, p);
}

ScaleGrid w_zero_grid(const LevyModel& model, double x_max, double h) {
  const auto n = grid_points(x_max, h);
  auto z = w_zero_values(model, n, h);
  ScaleGrid g;
  g.q = 0.0;
  g.h = h;
  g.values = std::move(z.values);
  g.method = z.method;
  g.model_hash = model.hash();
  g.error_estimate.assign(g.values.size(), 0.0);
  return g;
}

ScaleGrid w_q_grid(const LevyModel& model, double q, double x_max, double h) {
  if (q == 0.0) return w_zero_grid(model, x_max, h);
  const auto n = grid_points(x_max, h);
  const auto fine = w_zero_values(model, 4 * n, h / 4.0);

  std::vector<double> sums[kLevels];
  for (int l = 0; l < kLevels; ++l) {
    const double hl = h / (1 << l);
    const auto base = subsample(fine.values, std::size_t{1} << (2 - l));
    std::vector<double> term = base;
    std::vector<double> sum = base;
    double prev = sup_norm(term);
    for (int k = 1;; ++k) {
      if (k > kMaxTerms) {
        throw NumericError("convolution series did not converge within 512 terms; reduce x_max or h",
                           prev / std::max(sup_norm(sum), 1e-300));
      }
      term = convolve(base, term, hl);
      for (double& v : term) v *= q;
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += term[i];
      const double size = sup_norm(term);
      if (size < 1e-12 * sup_norm(sum) && size < prev) break;
      prev = size;
    }
    sums[l] = subsample(sum, std::size_t{1} << l);
  }

  ScaleGrid g;
  g.q = q;
  g.h = h;
  g.method = ScaleMethod::ConvolutionSeries;
  g.model_hash = model.hash();
  g.values.resize(n + 1);
  g.error_estimate.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const auto r = romberg(sums[0][i], sums[1][i], sums[2][i]);
    g.values[i] = r.value;
    g.error_estimate[i] = r.error;
  }
  g.values[0] = w_at_origin(model);
  record_sign_changes(g);
  return g;
}

std::vector<LaplaceCheck> laplace_check(const LevyModel& model, const ScaleGrid& grid) {
  if (grid.q < 0.0) throw InputError("laplace_check needs q >= 0");
  const double phi_q = phi(model, grid.q);
  const double slope = psi_derivatives(model, phi_q).first;
  const double xm = grid.x_max();
  const double w_inf = std::exp(-phi_q * xm) * grid.values.back();
  std::vector<LaplaceCheck> out;
  for (double shift : {2.0, 3.0, 4.0}) {
    const double lambda = phi_q + shift;
    const double decay = std::exp(-shift * xm) / shift;
    const double tail = w_inf * decay;
    const double bound = slope > 0.0 ? decay / slope : 2.0 * tail;
    LaplaceCheck c{};
    c.lambda = lambda;
    c.numeric = laplace_on_grid(grid.values, grid.h, lambda) + tail;
    c.exact = 1.0 / (psi(model, lambda) - grid.q);
    c.tail_bound = std::abs(bound - tail);
    c.relative_error = std::abs(c.numeric - c.exact) / std::abs(c.exact);
    out.push_back(c);
  }
  return out;
}

RhoValue rho(const LevyModel& model, double x) {
  if (!(x > 0.0)) throw InputError("rho needs x > 0");
  const auto chars = characteristics(model);
  const double q0 = chars.q_star_or_zero();
  // Work in the frame tilted by c = -q0, where W^(-q)(x) = e^(Phi(-q0) x) W_c^(q0 - q)(x)
  // and the series in delta = q - q0 has no catastrophic cancellation.
  const auto tilted = make_tilted(model, -q0);
  const std::size_t n = std::max<std::size_t>(256, static_cast<std::size_t>(std::ceil(x * 16.0)));
  ConvolutionPowers powers(tilted.model, x, n);

  double lo = 0.0;
  double f_lo = powers.evaluate(0.0);
  double hi = 1e-10;
  bool found = false;
  while (hi <= 1000.0 - q0) {
    const double f_hi = powers.evaluate(hi);
    if ((f_hi > 0.0) != (f_lo > 0.0)) {
      found = true;
      break;
    }
    lo = hi;
    f_lo = f_hi;
    hi *= 1.05;
  }
  if (!found) throw NumericError("rho: no sign change of W^(-q)(x) below q = 1000", hi);
  while (hi - lo > 1e-12 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = powers.evaluate(mid);
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return RhoValue{x, q0 + 0.5 * (lo + hi), q0 + lo, q0 + hi};
}

TiltedScaleReport tilted_scale_check(const LevyModel& model, double c, double q, double x_max,
                                     double h) {
  const auto tilted = make_tilted(model, c);
  const auto direct = w_q_grid(tilted.model, q, x_max, h);
  const auto printed_base = w_q_grid(model, q - c, x_max, h);
  const auto alt_base = w_q_grid(model, q + c, x_max, h);

  TiltedScaleReport r{};
  r.c = c;
  r.q = q;
  r.phi_c = tilted.phi_c;
  std::vector<double> printed(direct.size()), alt(direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) {
    const double x = direct.x(i);
    printed[i] = std::exp(tilted.phi_c * x) * printed_base.values[i];
    alt[i] = std::exp(-tilted.phi_c * x) * alt_base.values[i];
    if (i == 0) continue;
    const double scale = std::max(std::abs(direct.values[i]), 1e-300);
    r.printed_discrepancy = std::max(r.printed_discrepancy, std::abs(printed[i] - direct.values[i]) / scale);
    r.alternative_discrepancy = std::max(r.alternative_discrepancy, std::abs(alt[i] - direct.values[i]) / scale);
  }
  const double phi_cq = phi(tilted.model, q);
  for (double shift : {2.0, 3.0, 4.0}) {
    const double lambda = phi_cq + shift;
    const double exact = 1.0 / (psi(model, lambda + tilted.phi_c) - c - q);
    auto err = [&](const std::vector<double>& v) {
      return std::abs(laplace_on_grid(v, h, lambda) - exact) / std::abs(exact);
    };
    r.printed_laplace_error = std::max(r.printed_laplace_error, err(printed));
    r.alternative_laplace_error = std::max(r.alternative_laplace_error, err(alt));
    r.direct_laplace_error = std::max(r.direct_laplace_error, err(direct.values));
  }
  const double tol = 1e-6;
  const bool p = r.printed_discrepancy < tol, a = r.alternative_discrepancy < tol;
  r.supported = p && a ? "both" : p ? "printed" : a ? "alternative" : "neither";
  return r;
}

void write_csv(std::ostream& out, const ScaleGrid& grid) {
  char buf[64];
  out << "# model_hash=" << grid.model_hash;
  std::snprintf(buf, sizeof buf, "%.17g", grid.q);
  out << " q=" << buf;
  std::snprintf(buf, sizeof buf, "%.17g", grid.h);
  out << " h=" << buf << " method=" << to_string(grid.method) << "\n";
  out << "x,W_q\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,", grid.x(i));
    out << buf;
    std::snprintf(buf, sizeof buf, "%.17g\n", grid.values[i]);
    out << buf;
  }
}

}  // namespace snlevy
