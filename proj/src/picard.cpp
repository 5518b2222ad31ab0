#include "snlevy/picard.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "snlevy/errors.hpp"
#include "snlevy/parallel.hpp"
#include "snlevy/rng.hpp"
#include "snlevy/scale_fn.hpp"

namespace snlevy {

namespace {

constexpr double kRangeSlack = 1e-6;

/// Masses of N(mean, sd^2) over half cells of width h/2 on the lattice of
/// offsets p*h/2, |p| <= 2R+1. Each tail is kept on its own side of the mean
/// so that far-out masses keep full relative accuracy.
class HalfCellTable {
 public:
  HalfCellTable(double mean, double sd, double h, long reach)
      : reach_(reach), tail_(static_cast<std::size_t>(4 * reach + 3)), upper_(tail_.size()) {
    for (long p = -2 * reach - 1; p <= 2 * reach + 1; ++p) {
      const double z = (0.5 * static_cast<double>(p) * h - mean) / sd;
      const std::size_t k = index(p);
      upper_[k] = z >= 0.0;
      tail_[k] = 0.5 * std::erfc(std::abs(z) * std::numbers::sqrt2 / 2.0);
    }
  }

  long reach() const noexcept { return reach_; }

  /// Mass over [(m - 1/2) h, m h].
  double left(long m) const { return between(2 * m - 1, 2 * m); }
  /// Mass over [m h, (m + 1/2) h].
  double right(long m) const { return between(2 * m, 2 * m + 1); }
  double full(long m) const { return between(2 * m - 1, 2 * m + 1); }
  /// Mass above p*h/2.
  double above(long p) const {
    if (p > 2 * reach_ + 1) return 0.0;
    if (p < -2 * reach_ - 1) return 1.0;
    const std::size_t k = index(p);
    return upper_[k] ? tail_[k] : 1.0 - tail_[k];
  }

 private:
  std::size_t index(long p) const { return static_cast<std::size_t>(p + 2 * reach_ + 1); }

  double between(long p0, long p1) const {
    if (p1 < -2 * reach_ - 1 || p0 > 2 * reach_ + 1) return 0.0;
    p0 = std::max(p0, -2 * reach_ - 1);
    p1 = std::min(p1, 2 * reach_ + 1);
    const std::size_t k0 = index(p0), k1 = index(p1);
    double m;
    if (upper_[k0] && upper_[k1]) {
      m = tail_[k0] - tail_[k1];
    } else if (!upper_[k0] && !upper_[k1]) {
      m = tail_[k1] - tail_[k0];
    } else {
      m = 1.0 - tail_[k0] - tail_[k1];
    }
    return std::max(m, 0.0);
  }

  long reach_;
  std::vector<double> tail_;
  std::vector<char> upper_;
};

struct BrownianParameters {
  double drift;
  double sigma;
};

BrownianParameters require_brownian(const LevyModel& model, const char* op) {
  if (!model.is_brownian() || !(model.gaussian() > 0.0)) {
    throw InputError(std::string(op) + ": requires a Brownian model with gaussian > 0");
  }
  return {model.drift(), model.gaussian()};
}

void check_beta(double beta, const char* op) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw InputError(std::string(op) + ": beta must be finite and >= 0");
  }
}

std::string regime_warning(const LevyModel& model, double beta) {
  const auto chars = characteristics(model);
  if (chars.psi_prime_at_zero >= 0.0) {
    return "Psi'(0+) >= 0: the process does not drift to -inf";
  }
  if (beta > chars.q_star_or_zero() + chars.critical_band) {
    std::ostringstream os;
    os << "beta=" << beta << " exceeds q*=" << chars.q_star_or_zero()
       << ": the fixed point may be the non-extinction solution";
    return os.str();
  }
  return {};
}

void append(std::string& to, const std::string& what) {
  if (what.empty()) return;
  if (!to.empty()) to += "; ";
  to += what;
}

/// Asserts the probabilistic range, then clamps rounding-level excursions.
void enforce_range(double* data, std::size_t size, const char* op) {
  double worst = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    worst = std::max({worst, -data[i], data[i] - 1.0});
  }
  if (worst > kRangeSlack) {
    throw NumericError(std::string(op) + ": iterate left [0, 1]", worst);
  }
  for (std::size_t i = 0; i < size; ++i) data[i] = std::clamp(data[i], 0.0, 1.0);
}

std::string non_contraction(const std::vector<double>& history) {
  std::ostringstream os;
  os << "no convergence after " << history.size() << " sweeps, residual " << history.back();
  if (history.size() >= 2) {
    os << ", last ratio " << history.back() / history[history.size() - 2];
  }
  return os.str();
}

/// The survival problem on the full padded grid. Rows are nodes 1..n, columns
/// times k*dt, k = 0..K; node 0 is absorbing and holds 0.
class SurvivalSolver {
 public:
  SurvivalSolver(const LevyModel& model, double beta, double a_max, double t_max,
                 const PicardOptions& options)
      : beta_(beta), options_(options) {
    const auto bm = require_brownian(model, "solve_survival");
    check_beta(beta, "solve_survival");
    if (!(a_max > 0.0) || !(t_max >= 0.0) || !(options.h > 0.0) || !(options.dt > 0.0) ||
        !(options.padding >= 0.0)) {
      throw InputError("solve_survival: need a_max > 0, t_max >= 0, h > 0, dt > 0, padding >= 0");
    }
    h_ = options.h;
    n_ = static_cast<std::size_t>(std::ceil((a_max + options.padding) / h_ - 1e-9));
    rows_out_ = static_cast<std::size_t>(std::ceil(a_max / h_ - 1e-9));
    steps_ = static_cast<std::size_t>(std::ceil(t_max / options.dt - 1e-9));
    dt_ = steps_ > 0 ? t_max / static_cast<double>(steps_) : options.dt;
    const double storage = static_cast<double>(steps_) * static_cast<double>(n_ * n_);
    if (storage > 6e7) {
      throw InputError("solve_survival: grid too large (" + std::to_string(steps_) + " steps x " +
                       std::to_string(n_) + " nodes); coarsen h or dt, or reduce t_max");
    }

    phi_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(steps_ + 1));
    for (std::size_t i = 1; i <= n_; ++i) {
      for (std::size_t k = 0; k <= steps_; ++k) {
        phi_(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(k)) =
            brownian_survival_phi(bm.drift, bm.sigma, beta, x(i), t(k));
      }
    }

    // Product integration of beta e^(-beta s) against piecewise-linear
    // interpolation in s: exact for constants.
    const double x1 = beta * dt_;
    const double e0 = -std::expm1(-x1);
    const double e1 = x1 > 0.0 ? (e0 - x1 * std::exp(-x1)) / x1 : 0.0;
    first_weight_ = e0 - e1;
    interior_.resize(steps_ + 1);
    last_.resize(steps_ + 1);
    for (std::size_t j = 0; j <= steps_; ++j) {
      const double sj = t(j);
      interior_[j] = std::exp(-beta * sj) * (e0 - e1) + (j > 0 ? std::exp(-beta * t(j - 1)) * e1 : 0.0);
      last_[j] = j > 0 ? std::exp(-beta * t(j - 1)) * e1 : 0.0;
    }

    kernels_.resize(steps_ + 1);
    for (std::size_t j = 1; j <= steps_; ++j) {
      const auto kk = KilledKernel::build(model, t(j), h_, n_);
      kernels_[j] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          kk.mass.data(), static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    }
  }

  double x(std::size_t i) const { return static_cast<double>(i) * h_; }
  double t(std::size_t k) const { return static_cast<double>(k) * dt_; }
  std::size_t nodes() const { return n_; }
  std::size_t steps() const { return steps_; }
  std::size_t rows_out() const { return rows_out_; }
  const Eigen::MatrixXd& phi() const { return phi_; }
  const Eigen::MatrixXd& v() const { return v_; }

  /// T applied to g = (2 - v) f, or to g directly when called from the sweep.
  Eigen::MatrixXd integrate(const Eigen::MatrixXd& g) const {
    const auto n = static_cast<Eigen::Index>(n_);
    const auto kmax = static_cast<Eigen::Index>(steps_);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, kmax + 1);
    if (beta_ == 0.0 || steps_ == 0) return out;
    out.rightCols(kmax) += first_weight_ * g.rightCols(kmax);
    for (Eigen::Index j = 1; j <= kmax; ++j) {
      const auto& kern = kernels_[static_cast<std::size_t>(j)];
      // Interior weight for every target k > j, end weight at k = j.
      if (j < kmax) {
        out.middleCols(j + 1, kmax - j).noalias() +=
            interior_[static_cast<std::size_t>(j)] * (kern * g.middleCols(1, kmax - j));
      }
      out.col(j).noalias() += last_[static_cast<std::size_t>(j)] * (kern * g.col(0));
    }
    return out;
  }

  void solve(SolutionSurface& report) {
    v_ = phi_;
    for (int it = 0; it < options_.max_iterations; ++it) {
      const Eigen::MatrixXd g = 2.0 * v_ - v_.cwiseProduct(v_);
      Eigen::MatrixXd next = phi_ + integrate(g);
      enforce_range(next.data(), static_cast<std::size_t>(next.size()), "solve_survival");
      const double change = (next - v_).cwiseAbs().maxCoeff();
      v_ = std::move(next);
      report.residual_history.push_back(change);
      report.iterations = it + 1;
      report.residual = change;
      if (change < options_.tolerance) {
        report.converged = true;
        break;
      }
    }
    if (!report.converged) append(report.diagnostic, non_contraction(report.residual_history));
  }

  /// Bilinear interpolation of a column-per-time matrix over the padded grid.
  double interpolate(const Eigen::MatrixXd& m, double a, double tt) const {
    if (a <= 0.0) return 0.0;
    const double fi = std::min(a / h_, static_cast<double>(n_));
    const double fk = std::clamp(tt / dt_, 0.0, static_cast<double>(steps_));
    const auto i0 = static_cast<std::size_t>(std::floor(fi));
    const auto k0 = std::min(static_cast<std::size_t>(std::floor(fk)), steps_ > 0 ? steps_ - 1 : 0);
    const double wi = fi - static_cast<double>(i0);
    const double wk = steps_ > 0 ? fk - static_cast<double>(k0) : 0.0;
    auto value = [&](std::size_t i, std::size_t k) {
      if (i == 0) return 0.0;
      i = std::min(i, n_);
      k = std::min(k, steps_);
      return m(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(k));
    };
    return (1 - wi) * ((1 - wk) * value(i0, k0) + wk * value(i0, k0 + 1)) +
           wi * ((1 - wk) * value(i0 + 1, k0) + wk * value(i0 + 1, k0 + 1));
  }

 private:
  double beta_;
  PicardOptions options_;
  double h_ = 0.0;
  double dt_ = 0.0;
  std::size_t n_ = 0;
  std::size_t rows_out_ = 0;
  std::size_t steps_ = 0;
  double first_weight_ = 0.0;
  std::vector<double> interior_;
  std::vector<double> last_;
  std::vector<Eigen::MatrixXd> kernels_;
  Eigen::MatrixXd phi_;
  Eigen::MatrixXd v_;
};

}  // namespace

KilledKernel KilledKernel::build(const LevyModel& model, double dt, double h, std::size_t n) {
  const auto bm = require_brownian(model, "KilledKernel");
  if (!(dt > 0.0) || !(h > 0.0) || n == 0) throw InputError("KilledKernel: need dt > 0, h > 0, n > 0");
  KilledKernel k{bm.drift, bm.sigma, dt, h, n, std::vector<double>(n * n, 0.0)};
  const long ln = static_cast<long>(n);
  const HalfCellTable table(bm.drift * dt, bm.sigma * std::sqrt(dt), h, 2 * ln + 1);
  const double var = bm.sigma * bm.sigma;
  for (long i = 1; i <= ln; ++i) {
    const double log_w = -2.0 * bm.drift * static_cast<double>(i) * h / var;
    const double w = std::exp(std::min(log_w, 700.0));
    double* row = &k.mass[static_cast<std::size_t>(i - 1) * n];
    for (long j = 1; j < ln; ++j) {
      row[j - 1] = std::max(0.0, table.full(j - i) - w * table.full(j + i));
    }
    row[n - 1] = std::max(0.0, table.above(2 * (ln - i) - 1) - w * table.above(2 * (ln + i) - 1));
  }
  return k;
}

double KilledKernel::row_sum(std::size_t i) const {
  double s = 0.0;
  for (std::size_t j = 1; j <= n; ++j) s += (*this)(i, j);
  return s;
}

double SolutionSurface::at(double a_value, double s_value) const {
  if (a.empty() || second.empty()) throw InputError("SolutionSurface::at: empty surface");
  auto locate = [](const std::vector<double>& axis, double v, std::size_t& i0, double& w) {
    if (axis.size() == 1 || v <= axis.front()) {
      i0 = 0;
      w = 0.0;
      return;
    }
    if (v >= axis.back()) {
      i0 = axis.size() - 2;
      w = 1.0;
      return;
    }
    i0 = static_cast<std::size_t>(std::upper_bound(axis.begin(), axis.end(), v) - axis.begin()) - 1;
    w = (v - axis[i0]) / (axis[i0 + 1] - axis[i0]);
  };
  std::size_t i0, k0;
  double wi, wk;
  locate(a, a_value, i0, wi);
  locate(second, s_value, k0, wk);
  const std::size_t i1 = std::min(i0 + 1, a.size() - 1);
  const std::size_t k1 = std::min(k0 + 1, second.size() - 1);
  return (1 - wi) * ((1 - wk) * (*this)(i0, k0) + wk * (*this)(i0, k1)) +
         wi * ((1 - wk) * (*this)(i1, k0) + wk * (*this)(i1, k1));
}

double brownian_survival_phi(double drift, double sigma, double beta, double x, double t) {
  if (x <= 0.0) return 0.0;
  if (t <= 0.0) return 1.0;
  const double s = sigma * std::sqrt(t);
  auto cdf = [](double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); };
  const double direct = cdf((x + drift * t) / s);
  const double image_cdf = cdf((-x + drift * t) / s);
  const double image = image_cdf > 0.0
                           ? std::exp(-2.0 * drift * x / (sigma * sigma) + std::log(image_cdf))
                           : 0.0;
  return std::exp(-beta * t) * std::clamp(direct - image, 0.0, 1.0);
}

SolutionSurface solve_survival(const LevyModel& model, double beta, double a_max, double t_max,
                               const PicardOptions& options) {
  SurvivalSolver solver(model, beta, a_max, t_max, options);
  SolutionSurface out;
  out.diagnostic = regime_warning(model, beta);
  solver.solve(out);
  const std::size_t rows = solver.rows_out() + 1;
  const std::size_t cols = solver.steps() + 1;
  for (std::size_t i = 0; i < rows; ++i) out.a.push_back(solver.x(i));
  for (std::size_t k = 0; k < cols; ++k) out.second.push_back(solver.t(k));
  out.values.assign(rows * cols, 0.0);
  for (std::size_t i = 1; i < rows; ++i) {
    for (std::size_t k = 0; k < cols; ++k) {
      out(i, k) = solver.v()(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(k));
    }
  }
  return out;
}

std::vector<double> exponential_time_kernel(const LevyModel& model, double beta, double x,
                                            std::size_t n) {
  const auto bm = require_brownian(model, "exponential_time_kernel");
  check_beta(beta, "exponential_time_kernel");
  if (!(x > 0.0) || n < 2) throw InputError("exponential_time_kernel: need x > 0 and n >= 2");
  const std::size_t size = n + 1;
  std::vector<double> e(size * size, 0.0);
  if (beta == 0.0) return e;

  const double h = x / static_cast<double>(n);
  const double var = bm.sigma * bm.sigma;
  const double mu = bm.drift;
  const double rho = mu * mu / (2.0 * var) + std::numbers::pi * std::numbers::pi * var / (2.0 * x * x);
  const double s_min = h * h / (1024.0 * var);
  const double s_max = 40.0 / (beta + rho);
  const long ln = static_cast<long>(n);

  // Below s_min the path has not left its own cell.
  const double identity = -std::expm1(-beta * s_min);
  for (std::size_t i = 1; i < n; ++i) e[i * size + i] += identity;

  using Gauss = boost::math::quadrature::gauss<double, 10>;
  std::vector<double> term(size);
  for (double lo = s_min; lo < s_max; lo *= 2.0) {
    const double hi = std::min(2.0 * lo, s_max);
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (std::size_t g = 0; g < 2 * Gauss::abscissa().size(); ++g) {
      const std::size_t idx = g / 2;
      const double s = mid + half * Gauss::abscissa()[idx] * (g % 2 == 0 ? 1.0 : -1.0);
      const double factor = half * Gauss::weights()[idx] * beta * std::exp(-beta * s);
      const double sd = bm.sigma * std::sqrt(s);
      const long images = static_cast<long>(std::ceil((9.0 * sd + std::abs(mu) * s) / (2.0 * x))) + 1;
      const HalfCellTable table(mu * s, sd, h, (2 * images + 3) * ln);
      for (long i = 1; i < ln; ++i) {
        std::fill(term.begin(), term.end(), 0.0);
        int quiet = 0;
        for (long step = 0; step <= 2 * images && quiet < 2; ++step) {
          const long k = (step % 2 == 1) ? (step + 1) / 2 : -step / 2;
          const double two_kn = 2.0 * static_cast<double>(k) * static_cast<double>(ln);
          const long shift = 2 * k * ln;
          const double log_direct = 2.0 * mu * static_cast<double>(k) * x / var;
          const double log_image = mu * (two_kn * h - 2.0 * static_cast<double>(i) * h) / var;
          const double wd = std::exp(std::min(log_direct, 700.0));
          const double wr = std::exp(std::min(log_image, 700.0));
          double biggest = 0.0;
          for (long j = 0; j <= ln; ++j) {
            const long md = j - i - shift, mr = j + i - shift;
            double d, r;
            if (j == 0) {
              d = table.right(md);
              r = table.right(mr);
            } else if (j == ln) {
              d = table.left(md);
              r = table.left(mr);
            } else {
              d = table.full(md);
              r = table.full(mr);
            }
            const double c = wd * d - wr * r;
            term[static_cast<std::size_t>(j)] += c;
            biggest = std::max(biggest, std::abs(c));
          }
          quiet = biggest < 1e-13 ? quiet + 1 : 0;
        }
        double* row = &e[static_cast<std::size_t>(i) * size];
        for (std::size_t j = 0; j < size; ++j) row[j] += factor * std::max(term[j], 0.0);
      }
    }
  }
  return e;
}

SolutionSurface solve_max(const LevyModel& model, double beta, double x, const PicardOptions& options) {
  const auto bm = require_brownian(model, "solve_max");
  check_beta(beta, "solve_max");
  if (!(x > 0.0) || !(options.h > 0.0)) throw InputError("solve_max: need x > 0 and h > 0");
  const auto n = std::max<std::size_t>(8, static_cast<std::size_t>(std::llround(x / options.h)));
  const double h = x / static_cast<double>(n);

  SolutionSurface out;
  out.diagnostic = regime_warning(model, beta);
  out.second = {x};
  for (std::size_t i = 0; i <= n; ++i) out.a.push_back(static_cast<double>(i) * h);

  const double w_top = brownian_scale(bm.drift, bm.sigma, beta, x);
  Eigen::VectorXd phi(static_cast<Eigen::Index>(n + 1));
  for (std::size_t i = 0; i <= n; ++i) {
    phi(static_cast<Eigen::Index>(i)) =
        i == n ? 1.0 : brownian_scale(bm.drift, bm.sigma, beta, out.a[i]) / w_top;
  }
  const auto raw = exponential_time_kernel(model, beta, x, n);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> kernel(
      raw.data(), static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(n + 1));

  Eigen::VectorXd u = phi;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd g = 2.0 * u - u.cwiseProduct(u);
    Eigen::VectorXd next = phi + kernel * g;
    enforce_range(next.data(), static_cast<std::size_t>(next.size()), "solve_max");
    const double change = (next - u).cwiseAbs().maxCoeff();
    u = std::move(next);
    out.residual_history.push_back(change);
    out.iterations = it + 1;
    out.residual = change;
    if (change < options.tolerance) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) append(out.diagnostic, non_contraction(out.residual_history));
  out.values.assign(u.data(), u.data() + u.size());
  return out;
}

void write_surface_csv(const SolutionSurface& surface, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InputError("write_surface_csv: cannot open " + path);
  os << "a,t_or_x,value,residual,iterations\n";
  char line[160];
  for (std::size_t i = 0; i < surface.a.size(); ++i) {
    for (std::size_t k = 0; k < surface.second.size(); ++k) {
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.6g,%d\n", surface.a[i], surface.second[k],
                    surface(i, k), surface.residual, surface.iterations);
      os << line;
    }
  }
}

Lemma3Report lemma3_identity_check(const LevyModel& model, double beta, int n, double a, double t,
                                   std::size_t mc_size, std::uint64_t seed, const PicardOptions& options) {
  const auto bm = require_brownian(model, "lemma3_identity_check");
  if (n < 1 || n > 3) throw InputError("lemma3_identity_check: n must be in 1..3");
  if (!(a > 0.0) || !(t > 0.0) || mc_size < 2) {
    throw InputError("lemma3_identity_check: need a > 0, t > 0 and mc_size >= 2");
  }
  SurvivalSolver solver(model, beta, a, t, options);
  SolutionSurface scratch;
  solver.solve(scratch);
  const Eigen::MatrixXd& v = solver.v();

  Eigen::MatrixXd f = solver.phi();
  const Eigen::MatrixXd factor = (2.0 - v.array()).matrix();
  for (int r = 0; r < n; ++r) f = solver.integrate(factor.cwiseProduct(f));

  Lemma3Report rep;
  rep.n = n;
  rep.a = a;
  rep.t = t;
  rep.quadrature = solver.interpolate(f, a, t);

  double sum = 0.0, sum_sq = 0.0;
  const double var = bm.sigma * bm.sigma;
  std::vector<double> times(static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < mc_size; ++r) {
    RandomStream rng(replicate_key(seed, "lemma3", r), 1);
    double gn = 0.0;
    for (int i = 0; i < n; ++i) gn += rng.exponential(beta);
    for (int i = 0; i + 1 < n; ++i) times[static_cast<std::size_t>(i)] = rng.uniform();
    double value = 0.0;
    if (gn <= t) {
      std::sort(times.begin(), times.end() - 1);
      for (int i = 0; i + 1 < n; ++i) times[static_cast<std::size_t>(i)] *= gn;
      times.back() = gn;
      double pos = a, prev = 0.0;
      value = std::exp(-beta * (t - gn));
      for (double g : times) {
        const double step = g - prev;
        const double next = pos + bm.drift * step + bm.sigma * std::sqrt(step) * rng.normal();
        if (next <= 0.0) {
          value = 0.0;
          break;
        }
        if (step > 0.0) value *= -std::expm1(-2.0 * pos * next / (var * step));
        value *= 2.0 - solver.interpolate(v, next, t - g);
        pos = next;
        prev = g;
      }
      if (value > 0.0) value *= brownian_survival_phi(bm.drift, bm.sigma, 0.0, pos, t - gn);
    }
    sum += value;
    sum_sq += value * value;
  }
  const double m = static_cast<double>(mc_size);
  rep.monte_carlo = sum / m;
  rep.se = std::sqrt(std::max(0.0, (sum_sq / m - rep.monte_carlo * rep.monte_carlo) / (m - 1.0)));
  if (rep.se > 0.0) {
    rep.z = (rep.quadrature - rep.monte_carlo) / rep.se;
    rep.pass = std::abs(rep.z) <= 3.0;
  } else {
    rep.z = 0.0;
    rep.pass = std::abs(rep.quadrature - rep.monte_carlo) < 1e-12;
  }
  return rep;
}

CrossCheckReport picard_cross_check(const LevyModel& model, double beta, const std::vector<double>& starts,
                                    const std::vector<double>& times, const std::vector<double>& levels,
                                    std::size_t mc_size, double dt, std::uint64_t seed, unsigned jobs,
                                    const PicardOptions& options) {
  require_brownian(model, "picard_cross_check");
  if (starts.empty() || mc_size == 0) throw InputError("picard_cross_check: need starts and mc_size > 0");
  CrossCheckReport rep;
  rep.mc_size = mc_size;

  auto probe = [](double a, double s, double solver, const TailEstimate& tail, std::size_t i) {
    Probe p{a, s, solver, tail.survival[i], tail.ci_lo[i], tail.ci_hi[i], false};
    p.inside = solver >= p.ci_lo && solver <= p.ci_hi;
    return p;
  };

  if (!times.empty()) {
    const double t_max = *std::max_element(times.begin(), times.end());
    const double a_max = *std::max_element(starts.begin(), starts.end());
    const auto surface = solve_survival(model, beta, a_max, t_max, options);
    for (std::size_t si = 0; si < starts.size(); ++si) {
      BranchingConfig cfg;
      cfg.model = model;
      cfg.beta = beta;
      cfg.start = starts[si];
      cfg.horizon = t_max;
      cfg.dt = std::min(dt, t_max / 100.0);
      cfg.seed = hash_combine(seed, si);
      cfg.purpose = "picard/survival";
      const auto tail = extinction_tail(simulate_replicates(cfg, mc_size, jobs), times);
      for (std::size_t k = 0; k < times.size(); ++k) {
        rep.survival.push_back(probe(starts[si], times[k], surface.at(starts[si], times[k]), tail, k));
      }
    }
  }

  if (!levels.empty()) {
    std::vector<SolutionSurface> maxima;
    for (double x : levels) maxima.push_back(solve_max(model, beta, x, options));
    const double top = *std::max_element(levels.begin(), levels.end());
    for (std::size_t si = 0; si < starts.size(); ++si) {
      BranchingConfig cfg;
      cfg.model = model;
      cfg.beta = beta;
      cfg.start = starts[si];
      cfg.horizon = 400.0;
      cfg.dt = dt;
      cfg.stop_at_max = top;
      cfg.seed = hash_combine(seed, si);
      cfg.purpose = "picard/maximum";
      const auto tail = max_tail(simulate_replicates(cfg, mc_size, jobs), levels);
      for (std::size_t k = 0; k < levels.size(); ++k) {
        if (starts[si] >= levels[k]) continue;
        rep.maximum.push_back(probe(starts[si], levels[k], maxima[k].at(starts[si], levels[k]), tail, k));
      }
    }
  }
  for (const auto& p : rep.survival) rep.survival_inside += p.inside ? 1 : 0;
  for (const auto& p : rep.maximum) rep.maximum_inside += p.inside ? 1 : 0;
  return rep;
}

}  // namespace snlevy
