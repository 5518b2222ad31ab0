#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "snlevy/branching_sim.hpp"
#include "snlevy/levy_core.hpp"

namespace snlevy {

struct FitOptions {
  /// Explicit window on the threshold axis; the data-driven cuts still apply.
  std::optional<double> lo;
  std::optional<double> hi;
  /// Known power of x moved to the left side: fit log p - power * log x.
  double fixed_power = 0.0;
  double max_relative_halfwidth = 0.5;
  std::uint64_t min_survivors = 50;
};

/// log p = intercept + slope * x [+ log_coef * log x] [+ fixed_power * log x].
struct RateFit {
  double lo = 0.0;  ///< first and last threshold used
  double hi = 0.0;
  std::size_t points = 0;
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;
  double intercept_se = 0.0;
  std::optional<double> log_coef;
  std::optional<double> log_coef_se;
  double fixed_power = 0.0;
  double r2 = 0.0;  ///< weighted
  /// Covariance of (intercept, slope[, log_coef]), row-major.
  std::vector<double> covariance;

  /// Fitted log p at x, with its standard error.
  std::pair<double, double> predict(double x) const;
};

/// Weighted least squares on log survival, weights from the delta-method
/// variances. Standard errors use the sandwich form with the exact covariance
/// of a survival curve estimated from one sample. Throws InputError with
/// fewer than 6 usable thresholds.
RateFit fit_rate(const TailEstimate& tail, bool with_log_correction, const FitOptions& options = {});

/// Machine-checkable outcome of one comparison with a predicted value.
struct Verdict {
  std::string check;
  std::string model_hash;
  std::vector<std::pair<std::string, double>> params;
  double target = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  double tolerance = 0.0;  ///< allowed |estimate - target|; 0 for interval checks
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::uint64_t n = 0;
  bool pass = false;
  std::string note;
};

struct CheckReport {
  std::vector<Verdict> verdicts;
  std::vector<TailEstimate> tails;  ///< curves behind the verdicts, for CSV and plots
  std::vector<std::string> tail_labels;
  std::vector<std::optional<RateFit>> fits;  ///< parallel to tails; empty when too few points survived the cuts
  std::vector<std::string> fit_errors;       ///< parallel to fits, why a fit is missing

  bool pass() const;
};

/// max(2 SE, rel * |target|).
double rate_tolerance(double target, double se, double rel = 0.05);

struct SimulationKnobs {
  std::size_t replicates = 200000;
  double dt = 0.05;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::size_t particle_cap = 1'000'000;
  double critical_band = 1e-9;  ///< relative width of the beta = q* band
};

struct Theorem1Options {
  double a = 1.0;
  double horizon = 16.0;
  double step = 0.5;  ///< threshold spacing
  FitOptions fit{4.0, 14.0};
  /// Power of t in front of the exponential; default -3/2 below criticality, 0 at it.
  std::optional<double> power;
  bool single_particle = true;  ///< also fit P_a(tau_0^- > t) against -q*
  SimulationKnobs sim;
};

/// (1/t) log P_a(zeta > t) -> beta - q*.
CheckReport verify_theorem1(const LevyModel& model, double beta, const Theorem1Options& options = {});

struct Theorem2Options {
  double a = 1.0;
  std::vector<double> consistency_starts{0.5, 1.0, 2.0};
  double x_max = 6.0;
  double step = 0.25;
  FitOptions fit{3.0, 6.0};
  /// Used at beta = q*, where the fit carries the log x term.
  double critical_x_max = 8.0;
  FitOptions critical_fit{2.0, 8.0};
  double horizon = 400.0;
  SimulationKnobs sim;
};

/// P_a(M >= x) ~ kappa W^(-beta)(a) e^(-Phi(-beta) x) below criticality; with
/// the extra 1/x factor at beta = q*.
CheckReport verify_theorem2(const LevyModel& model, double beta, const Theorem2Options& options = {});

struct CorollaryOptions {
  std::vector<double> starts{0.0, 1.0};
  double x_max = 6.0;
  double step = 0.25;
  FitOptions fit{1.0, 6.0};
  double prune_depth = 10.0;
  double bound_at = 3.0;  ///< threshold of the pointwise bound check reported on its own
  SimulationKnobs sim;
};

/// Free process: P_0(M >= x) ~ kappa e^(-Phi(-beta) x) and P_0(M >= x) <= e^(-Phi(-beta) x).
CheckReport verify_corollary(const LevyModel& model, double beta, const CorollaryOptions& options = {});

struct ExitRateOptions {
  double horizon = 10.0;
  double step = 0.25;
  FitOptions fit{2.0, 10.0};
  SimulationKnobs sim;
};

/// P_a(tau_0^- ^ tau_x^+ > t) ~ C e^(-rho(x) t).
CheckReport verify_exit_rate(const LevyModel& model, double a, double x, const ExitRateOptions& options = {});

/// Thresholds step, 2 step, ... up to hi (inclusive within rounding).
std::vector<double> threshold_grid(double step, double hi);

}  // namespace snlevy
