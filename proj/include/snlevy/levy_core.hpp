#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace snlevy {

// ---------------------------------------------------------------------------
// Jump laws. All magnitudes are of -(jump), i.e. strictly positive.
// ---------------------------------------------------------------------------

struct ExponentialMagnitude {
  double mean;
};

struct FixedMagnitude {
  double size;
};

struct MixtureOfExponentials {
  std::vector<double> weights;
  std::vector<double> means;
};

using NegativeJumpLaw = std::variant<ExponentialMagnitude, FixedMagnitude, MixtureOfExponentials>;

struct NoJumps {};

/// Finite-activity negative jumps. For these models `drift` is the linear
/// coefficient of the bounded-variation form
///   Psi(l) = d l + eta^2 l^2 / 2 + rate (E[exp(-l Y)] - 1),
/// with no small-jump compensator.
struct CompoundPoisson {
  double rate;
  NegativeJumpLaw jump_law;
};

/// Levy density  intensity * y^(-1-alpha) * exp(-tempering * y)  on magnitudes
/// y > 0, compensated on y < 1. `cutoff` is the small-jump threshold used by the
/// path simulator: jumps below it are replaced by a Gaussian of matching variance.
/// alpha must lie in (0,1) or (1,2).
struct TruncatedStableLike {
  double intensity;
  double alpha;
  double tempering;
  double cutoff;
};

using JumpPart = std::variant<NoJumps, CompoundPoisson, TruncatedStableLike>;

namespace detail {
/// Moments of the stable-like Levy density that the closed forms need.
struct StableMoments {
  double below_one = 0.0;  ///< int_0^1 y^(-alpha) e^(-tempering y) dy (alpha < 1 only)
  double above_one = 0.0;  ///< int_1^inf y^(-alpha) e^(-tempering y) dy
};
}  // namespace detail

/// Spectrally negative Levy process: drift, Gaussian coefficient, negative jumps.
/// Construction validates the parameters and rejects negatives of subordinators.
class LevyModel {
 public:
  LevyModel(double drift, double gaussian, JumpPart jumps = NoJumps{});

  static LevyModel brownian(double drift, double gaussian) { return {drift, gaussian, NoJumps{}}; }

  double drift() const noexcept { return drift_; }
  double gaussian() const noexcept { return gaussian_; }
  const JumpPart& jumps() const noexcept { return jumps_; }

  bool has_jumps() const noexcept { return !std::holds_alternative<NoJumps>(jumps_); }
  bool is_brownian() const noexcept { return !has_jumps(); }

  /// Paths of bounded variation (no Gaussian part, finite-variation jumps).
  bool bounded_variation() const noexcept;

  /// Linear coefficient once the jump integral is written without compensator.
  /// Only meaningful when bounded_variation() holds.
  double bounded_variation_drift() const;

  /// Canonical one-line description; equal models give equal strings.
  std::string describe() const;

  /// 16 hex digits derived from describe().
  std::string hash() const;

  const detail::StableMoments& stable_moments() const noexcept { return stable_; }

 private:
  double drift_;
  double gaussian_;
  JumpPart jumps_;
  detail::StableMoments stable_;
};

/// Laplace exponent Psi(lambda) = log E_0[exp(lambda L_1)], lambda >= 0.
double psi(const LevyModel& model, double lambda);

struct PsiDerivatives {
  double first;
  double second;
};

/// (Psi'(lambda), Psi''(lambda)) for lambda >= 0.
PsiDerivatives psi_derivatives(const LevyModel& model, double lambda);

/// Psi evaluated by adaptive quadrature of the jump integral against the Levy
/// density, for every jump variant. Independent of the closed forms in psi().
double psi_quadrature(const LevyModel& model, double lambda);

/// Psi on the right half-plane. Used by the Laplace inversion in scale_fn; the
/// public real-argument API is psi().
std::complex<double> psi_complex(const LevyModel& model, std::complex<double> lambda);

enum class Regime { DiesOutSubcritical, DiesOutCritical, SurvivesWithPositiveProbability };

const char* to_string(Regime r) noexcept;

struct Characteristics {
  double psi_prime_at_zero = 0.0;
  std::optional<double> lambda_star;
  std::optional<double> q_star;
  std::optional<double> psi_second_at_star;
  double critical_band = 1e-9;

  /// Survival regime of the branching process with branching rate beta.
  Regime regime(double beta) const;

  /// q* when present, else 0. Lower end of the domain of Phi is -this.
  double q_star_or_zero() const noexcept { return q_star.value_or(0.0); }
  double lambda_star_or_zero() const noexcept { return lambda_star.value_or(0.0); }
};

/// lambda* = argmin Psi (safeguarded Newton, tolerance 1e-12) and q* = -Psi(lambda*).
Characteristics characteristics(const LevyModel& model, double critical_band = 1e-9);

/// Largest root of Psi(lambda) = q. Throws DomainError when q < -q*.
double phi(const LevyModel& model, double q);
double phi(const LevyModel& model, const Characteristics& chars, double q);

/// Parameters of the simulable representation of the model: drift, diffusion
/// coefficient, and the compound-Poisson part that is sampled exactly.
/// Truncated stable-like jumps below the cutoff become extra Gaussian variance.
struct SimulationParameters {
  double drift = 0.0;
  double sigma = 0.0;
  double jump_rate = 0.0;
  /// Jump magnitude law; for stable-like models a Pareto-type law on [cutoff, inf).
  std::variant<NoJumps, NegativeJumpLaw, TruncatedStableLike> magnitudes = NoJumps{};
};

SimulationParameters simulation_parameters(const LevyModel& model);

}  // namespace snlevy
