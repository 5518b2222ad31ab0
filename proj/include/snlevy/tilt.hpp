#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snlevy/branching_sim.hpp"
#include "snlevy/levy_core.hpp"
#include "snlevy/rng.hpp"
#include "snlevy/scale_fn.hpp"

namespace snlevy {

/// Esscher transform of a model by exp(Phi(c) L_t - c t).
struct TiltedModel {
  LevyModel base;
  double c;
  double phi_c;
  LevyModel model;  ///< exponent Psi_c(lambda) = Psi(lambda + Phi(c)) - c
};

/// Throws DomainError when c < -q*.
TiltedModel make_tilted(const LevyModel& model, double c);

enum class ConditionedWeighting { ImportanceWeights, RejectionAtHorizon };

/// Paths of the model tilted by c = -beta, reweighted into the law conditioned
/// to stay positive: dP^up / dP = h(L_T) 1{tau_0^- > T} / h(a), h = W_c^(0).
class ConditionedPathSampler {
 public:
  ConditionedPathSampler(const LevyModel& model, double beta,
                         ConditionedWeighting mode = ConditionedWeighting::ImportanceWeights,
                         double grid_x_max = 12.0, double grid_h = 1.0 / 64.0);

  const TiltedModel& tilted() const noexcept { return tilted_; }
  const PathDynamics& dynamics() const noexcept { return dynamics_; }
  ConditionedWeighting mode() const noexcept { return mode_; }

  /// log W_c^(0)(x); -inf for x <= 0 unless W_c^(0)(0+) > 0.
  double log_h(double x) const;
  /// sup of h, finite only when the tilted process drifts to +inf.
  double h_sup() const noexcept { return h_sup_; }

 private:
  TiltedModel tilted_;
  PathDynamics dynamics_;
  ConditionedWeighting mode_;
  bool closed_form_ = false;
  ScaleGrid grid_;
  double h_sup_ = 0.0;
  double slope_ = 0.0;  ///< linear growth of h beyond the grid (critical tilt)
};

struct ConditionedOptions {
  double dt = 0.01;
  double floor = 0.0;  ///< paths are killed below this level (>= 0)
};

struct ConditionedPath {
  double dt = 0.0;
  std::vector<double> positions;  ///< L at k*dt, k = 0..steps
  double log_weight = 0.0;        ///< -inf when killed or rejected
  double running_min = 0.0;
};

/// One tilted path on [0, horizon] from a > 0 with its log weight. For any F
/// measurable at the horizon, mean(F * exp(log_weight)) estimates E^up_a[F].
ConditionedPath sample_conditioned(const ConditionedPathSampler& sampler, double a, double horizon,
                                   const ConditionedOptions& options, RandomStream& rng);

/// Exact path of Brownian motion with drift mu >= 0 conditioned to stay
/// positive, started at 0, on the grid k*dt: the 2M - B construction.
std::vector<double> sample_conditioned_brownian_from_zero(double mu, double sigma, double horizon,
                                                          double dt, RandomStream& rng);

struct MeasureChangeReport {
  double c = 0.0;
  double t = 0.0;
  double base_mean = 0.0;  ///< E[F(L_t) e^(Phi(c)(L_t - a) - ct)] under the base model
  double base_se = 0.0;
  double tilted_mean = 0.0;  ///< E[F(L_t)] under the tilted model
  double tilted_se = 0.0;
  double z = 0.0;
  std::size_t n = 0;
  bool pass = false;  ///< |z| <= 3
};

/// Free paths, F(y) = 1{y > a}.
MeasureChangeReport measure_change_check(const LevyModel& model, double c, double a, double t,
                                         std::size_t n, double dt, std::uint64_t seed,
                                         unsigned jobs = 1);

/// P_0(M >= x) for the free branching process, from runs that stop once some
/// particle reaches the last threshold. Particles more than prune_depth below
/// 0 are dropped.
TailEstimate free_maximum_curve(const LevyModel& model, double beta, const std::vector<double>& thresholds,
                                std::size_t n, double dt, double prune_depth, std::uint64_t seed,
                                unsigned jobs = 1);

struct KappaOptions {
  std::size_t mc_size = 100000;
  double dt = 0.02;
  double max_horizon = 4096.0;
  double truncation_tolerance = 1e-3;  ///< relative, on the last horizon doubling
  double start = 0.05;  ///< start level for models that cannot be conditioned from 0
  /// Use the weighted sampler even for Brownian models (cross-checks only).
  bool importance_weights = false;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
};

struct KappaEstimate {
  double beta = 0.0;
  double phi_neg_beta = 0.0;
  double psi_prime = 0.0;  ///< Psi'(Phi(-beta)) = 1 / W_{-beta}^(0)(+inf)
  double raw = 0.0;        ///< E^up_0[exp(-beta int_0^inf P_0(M >= L_r) dr)]
  double raw_se = 0.0;
  double kappa = 0.0;  ///< psi_prime * raw
  double ci_lo = 0.0;  ///< includes the m_curve band
  double ci_hi = 0.0;
  std::size_t mc_size = 0;
  double truncation_horizon = 0.0;
  double truncation_change = 0.0;  ///< relative change over the last doubling
  double start = 0.0;
  std::string method;  ///< "brownian-2M-B" or "importance-weights"
};

/// Constant in P_a(M >= x) ~ kappa W^(-beta)(a) e^(-Phi(-beta) x), beta < q*.
/// m_curve is P_0(M >= x) on [0, x_hi]; beyond x_hi it is continued by
/// m(x_hi) e^(-Phi(-beta)(x - x_hi)), never above the bound e^(-Phi(-beta) x).
KappaEstimate estimate_kappa(const LevyModel& model, double beta, const TailEstimate& m_curve,
                             const KappaOptions& options = {});

/// Smallest x_hi estimate_kappa accepts: where the bound e^(-Phi(-beta) x) drops to 1/20.
double kappa_required_coverage(const LevyModel& model, double beta);

}  // namespace snlevy
