#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "snlevy/levy_core.hpp"

namespace snlevy {

enum class ScaleMethod { ClosedFormBrownian, LaplaceInversion, ConvolutionSeries };

const char* to_string(ScaleMethod m) noexcept;

/// W^(q) tabulated on the uniform grid x_i = i*h, i = 0..n.
struct ScaleGrid {
  double q = 0.0;
  double h = 0.0;
  std::vector<double> values;  ///< values[0] is W^(q)(0+)
  ScaleMethod method = ScaleMethod::ClosedFormBrownian;
  std::string model_hash;
  /// Grid abscissae where the tabulated values change sign (left end of the cell).
  std::vector<double> sign_changes;
  /// Per-point extrapolation error estimate (zero for closed forms).
  std::vector<double> error_estimate;

  std::size_t size() const noexcept { return values.size(); }
  double x(std::size_t i) const noexcept { return static_cast<double>(i) * h; }
  double x_max() const noexcept { return x(values.size() - 1); }

  /// Four-point Lagrange interpolation; 0 for x < 0, DomainError beyond x_max.
  double at(double x) const;
};

/// W^(q)(0+): 1/d for bounded-variation paths (d the drift without
/// compensator), 0 otherwise. Same for every q.
double w_at_origin(const LevyModel& model);

/// Closed-form W^(q)(x) of Brownian motion with drift (any real q).
double brownian_scale(double drift, double gaussian, double q, double x);

/// Bromwich inversion parameters (Abate-Whitt Euler algorithm).
struct InversionParameters {
  double a = 18.4;  ///< discretisation parameter; error ~ exp(-a)
  int terms = 20;   ///< partial sums before Euler averaging
  int euler = 18;   ///< binomial averaging order
};

/// W^(0)(x) at a single x > 0 by Laplace inversion of 1/Psi along the contour
/// Re(lambda) = Phi(0) + min(1, 1/x). Any model.
double w_zero_inverted(const LevyModel& model, double x, const InversionParameters& p = {});

/// W^(0) on [0, x_max]. Closed form for models without jumps, otherwise
/// Laplace inversion cross-checked at five points against a finer inversion.
/// Requires x_max / h >= 64; throws NumericError when the two inversions disagree
/// by more than 1e-7 relative.
ScaleGrid w_zero_grid(const LevyModel& model, double x_max, double h);

/// W^(q) for any real q by the convolution series sum_k q^k W^(0)*(k+1),
/// trapezoidal convolutions with two Richardson steps (h, h/2, h/4).
ScaleGrid w_q_grid(const LevyModel& model, double q, double x_max, double h);

struct LaplaceCheck {
  double lambda;
  double numeric;       ///< int_0^inf e^(-lambda x) W(x) dx (grid part + tail estimate)
  double exact;         ///< 1 / (Psi(lambda) - q)
  double tail_bound;    ///< bound on the neglected tail beyond x_max
  double relative_error;
};

/// Laplace transform of a q >= 0 grid at Phi(q) + 2, + 3, + 4.
std::vector<LaplaceCheck> laplace_check(const LevyModel& model, const ScaleGrid& grid);

struct RhoValue {
  double x;
  double rho;
  double q_lo;  ///< final bracket
  double q_hi;
};

/// rho(x) = inf{q >= 0 : W^(-q)(x) = 0}. Throws NumericError when no sign change
/// is found below q = 1000.
RhoValue rho(const LevyModel& model, double x);

struct TiltedScaleReport {
  double c;
  double q;
  double phi_c;
  /// max relative gap between W_c^(q) and e^(Phi(c) x) W^(q - c)(x)
  double printed_discrepancy;
  /// max relative gap between W_c^(q) and e^(-Phi(c) x) W^(q + c)(x)
  double alternative_discrepancy;
  /// Laplace-transform residual of each candidate against 1/(Psi_c(lambda) - q)
  double printed_laplace_error;
  double alternative_laplace_error;
  double direct_laplace_error;
  std::string supported;  ///< "printed", "alternative" or "neither"
};

/// Compares the scale function of the Esscher-tilted model with the two
/// candidate expressions built from the base model.
TiltedScaleReport tilted_scale_check(const LevyModel& model, double c, double q, double x_max,
                                     double h);

/// CSV with a comment header naming model hash, q, h and method; columns x,W_q.
void write_csv(std::ostream& out, const ScaleGrid& grid);

}  // namespace snlevy
