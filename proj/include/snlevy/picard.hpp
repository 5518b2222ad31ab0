#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snlevy/branching_sim.hpp"
#include "snlevy/levy_core.hpp"

namespace snlevy {

/// Transition masses of Brownian motion with drift killed below 0, over one
/// time step, between the space nodes i*h, i = 1..n. Cell j is
/// [(j - 1/2) h, (j + 1/2) h]; the last cell extends to +inf.
struct KilledKernel {
  double drift = 0.0;
  double sigma = 1.0;
  double dt = 0.0;
  double h = 0.0;
  std::size_t n = 0;
  std::vector<double> mass;  ///< row-major n x n, row = start node, column = cell

  static KilledKernel build(const LevyModel& model, double dt, double h, std::size_t n);
  double operator()(std::size_t i, std::size_t j) const { return mass[(i - 1) * n + (j - 1)]; }
  double row_sum(std::size_t i) const;
};

/// Values on nodes a_i (rows) by a second axis s_k (columns: time t or level x).
struct SolutionSurface {
  std::vector<double> a;
  std::vector<double> second;
  std::vector<double> values;  ///< row-major, a.size() x second.size()
  int iterations = 0;
  double residual = 0.0;                 ///< last sup-norm change
  std::vector<double> residual_history;  ///< sup-norm change per sweep
  bool converged = false;
  std::string diagnostic;  ///< non-contraction or regime warnings, empty when clean

  double operator()(std::size_t i, std::size_t k) const { return values[i * second.size() + k]; }
  double& operator()(std::size_t i, std::size_t k) { return values[i * second.size() + k]; }

  /// Bilinear interpolation; clamps outside the grid.
  double at(double a_value, double s_value) const;
};

struct PicardOptions {
  double h = 0.05;        ///< space step
  double dt = 0.05;       ///< time step (survival only)
  double padding = 8.0;   ///< extra space above the requested a range (survival only)
  double tolerance = 1e-8;
  int max_iterations = 200;
};

/// v(a, t) = P_a(zeta > t) for Brownian motion with drift, by Picard iteration of
/// v = phi + T[v], phi(x, t) = e^(-beta t) P_x(tau_0^- > t). Rows cover
/// a in [0, a_max], columns t in [0, t_max].
SolutionSurface solve_survival(const LevyModel& model, double beta, double a_max, double t_max,
                               const PicardOptions& options = {});

/// u(a) = P_a(M >= x) for a in [0, x], by Picard iteration of u = phi + E[2u - u^2]
/// with phi = W^(beta)(a) / W^(beta)(x) and E the exponential-time kernel killed
/// at 0 and x. The surface has one column, second = {x}.
SolutionSurface solve_max(const LevyModel& model, double beta, double x, const PicardOptions& options = {});

/// Rows a, t_or_x, value, residual, iterations.
void write_surface_csv(const SolutionSurface& surface, const std::string& path);

/// e^(-beta t) P_x(tau_0^- > t) for Brownian motion with drift.
double brownian_survival_phi(double drift, double sigma, double beta, double x, double t);

/// Exponential-time killed kernel of solve_max on nodes i*h, i = 0..n (h = x/n):
/// entry (i, j) = int_0^inf beta e^(-beta s) P_{a_i}(L_s in cell_j, s < tau) ds.
std::vector<double> exponential_time_kernel(const LevyModel& model, double beta, double x,
                                            std::size_t n);

struct Lemma3Report {
  int n = 0;
  double a = 0.0;
  double t = 0.0;
  double quadrature = 0.0;  ///< n-fold application of the discretised operator
  double monte_carlo = 0.0; ///< Gamma / ordered-uniform representation
  double se = 0.0;
  double z = 0.0;
  bool pass = false;
};

/// T^(n)[phi](a, t) two ways, using the converged survival surface inside both.
Lemma3Report lemma3_identity_check(const LevyModel& model, double beta, int n, double a, double t,
                                   std::size_t mc_size, std::uint64_t seed,
                                   const PicardOptions& options = {});

struct Probe {
  double a;
  double second;  ///< t for survival, x for the maximum
  double solver;
  double mc;
  double ci_lo;
  double ci_hi;
  bool inside;
};

struct CrossCheckReport {
  std::vector<Probe> survival;
  std::vector<Probe> maximum;
  std::size_t mc_size = 0;
  std::size_t survival_inside = 0;
  std::size_t maximum_inside = 0;
};

/// Solver values against branching Monte Carlo (Wilson 95% intervals) at
/// every (a, t) in starts x times and every (a, x) in starts x levels.
CrossCheckReport picard_cross_check(const LevyModel& model, double beta, const std::vector<double>& starts,
                                    const std::vector<double>& times, const std::vector<double>& levels,
                                    std::size_t mc_size, double dt, std::uint64_t seed, unsigned jobs = 1,
                                    const PicardOptions& options = {});

}  // namespace snlevy
