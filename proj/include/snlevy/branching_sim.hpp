#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "snlevy/levy_core.hpp"
#include "snlevy/rng.hpp"

namespace snlevy {

/// Simulable dynamics of one particle: drift and diffusion between the jumps of
/// a compound Poisson process with negative magnitudes.
class PathDynamics {
 public:
  using Magnitudes = std::variant<NoJumps, NegativeJumpLaw, TruncatedStableLike>;

  explicit PathDynamics(const LevyModel& model);
  /// Raw parameters, for degenerate dynamics that LevyModel rejects.
  PathDynamics(double drift, double sigma, double jump_rate = 0.0, Magnitudes magnitudes = NoJumps{});

  double drift() const noexcept { return drift_; }
  double sigma() const noexcept { return sigma_; }
  double jump_rate() const noexcept { return jump_rate_; }

  /// Magnitude of the next jump (positive).
  double sample_jump(RandomStream& rng) const;

 private:
  double drift_;
  double sigma_;
  double jump_rate_;
  Magnitudes magnitudes_;
};

/// Sample: the barrier kills the path with the bridge-crossing probability.
/// Weight: the path continues and accumulates log P(no bridge crossing).
enum class BarrierMode { Sample, Weight };

struct SegmentOptions {
  double dt = 0.01;
  std::optional<double> lower = 0.0;  ///< absorbing level, none for a free path
  BarrierMode lower_mode = BarrierMode::Sample;
  std::optional<double> upper;        ///< stop on reaching this level
  /// Sample the maximum of the Brownian bridge on each micro-step instead of
  /// using the endpoints only.
  bool bridge_max = true;
};

struct SegmentResult {
  double endpoint = 0.0;
  double running_min = 0.0;
  double running_max = 0.0;
  bool hit_lower = false;  ///< absorbed (hit_zero when the lower level is 0)
  double hit_time = std::numeric_limits<double>::infinity();
  bool hit_upper = false;
  double upper_time = std::numeric_limits<double>::infinity();
  double log_weight = 0.0;  ///< Weight mode only; -inf after an endpoint crossing
  double elapsed = 0.0;     ///< time simulated before stopping
};

/// One particle path over [0, duration]. Jumps are exact; the diffusion moves on
/// micro-steps of length dt with Brownian-bridge corrections for the barriers.
/// The uniform used by each bridge test is always drawn, so runs that differ only
/// in drift consume identical random numbers.
SegmentResult sample_segment(const PathDynamics& dynamics, double start, double duration,
                             const SegmentOptions& options, RandomStream& rng);

enum class BarrierKind { Absorbed, Free };

struct BranchingConfig {
  LevyModel model = LevyModel::brownian(-1.0, 1.0);
  double beta = 0.25;
  double start = 1.0;
  double horizon = 100.0;
  std::size_t particle_cap = 1'000'000;
  double dt = 0.01;
  std::uint64_t seed = 1;
  BarrierKind barrier = BarrierKind::Absorbed;
  /// Free mode: particles falling more than this below the start are dropped.
  double prune_depth = std::numeric_limits<double>::infinity();
  std::vector<double> lattice;  ///< sorted times at which N_t is recorded
  bool bridge_max = true;
  /// Stop a replicate as soon as some particle reaches this level.
  std::optional<double> stop_at_max;
  /// Name mixed into the replicate keys, so different checks draw different streams.
  std::string purpose = "population";

  /// Throws InputError naming the offending field.
  void validate() const;
};

enum class OutcomeStatus { Extinct, CensoredHorizon, CapHit, MaxReached };

const char* to_string(OutcomeStatus s) noexcept;

struct PopulationOutcome {
  OutcomeStatus status = OutcomeStatus::Extinct;
  double extinction_time = 0.0;  ///< zeta when Extinct, else the censoring time
  double max_location = 0.0;
  std::vector<std::uint32_t> counts;  ///< N_t at the lattice times
  std::uint64_t particles = 0;        ///< particles simulated
};

PopulationOutcome simulate_population(const BranchingConfig& config, const PathDynamics& dynamics,
                                      std::uint64_t replicate);
PopulationOutcome simulate_population(const BranchingConfig& config, std::uint64_t replicate);

/// Replicates 0..n-1 on `jobs` threads (0 = all cores). Results are indexed by
/// replicate, so they do not depend on the thread count.
std::vector<PopulationOutcome> simulate_replicates(const BranchingConfig& config, std::size_t n,
                                                   unsigned jobs = 1);

struct Interval {
  double lo;
  double hi;
};

/// Wilson score interval for k successes in n trials.
Interval wilson(std::uint64_t k, std::uint64_t n, double z = 1.959963984540054);

/// Empirical survival function with Wilson 95% intervals.
struct TailEstimate {
  std::string axis;  ///< "t" for P(zeta > t), "x" for P(M >= x)
  std::vector<double> thresholds;
  std::vector<std::uint64_t> counts;
  std::vector<double> survival;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  std::uint64_t n = 0;         ///< replicates used
  std::uint64_t excluded = 0;  ///< cap-hit replicates left out

  double se(std::size_t i) const;
};

TailEstimate tail_from_counts(std::string axis, std::vector<double> thresholds,
                              std::vector<std::uint64_t> counts, std::uint64_t n,
                              std::uint64_t excluded = 0);

/// P(zeta > t). Cap-hit replicates are excluded; horizon-censored ones count as
/// surviving, so thresholds must not exceed the horizon.
TailEstimate extinction_tail(const std::vector<PopulationOutcome>& outcomes,
                             const std::vector<double>& thresholds);

/// P(M >= x) over replicates that did not hit the particle cap.
TailEstimate max_tail(const std::vector<PopulationOutcome>& outcomes,
                      const std::vector<double>& thresholds);

/// max_tail of replicates 0..n-1 without keeping the outcomes; equal to
/// max_tail(simulate_replicates(config, n, jobs), thresholds).
TailEstimate simulate_max_tail(const BranchingConfig& config, std::size_t n,
                               const std::vector<double>& thresholds, unsigned jobs = 1);

struct ZScore {
  double estimate = 0.0;
  double target = 0.0;
  double se = 0.0;
  double z = 0.0;
};

ZScore make_z(double estimate, double target, double se);

struct ExpectedCountReport {
  std::vector<double> times;
  std::vector<ZScore> rows;  ///< estimate: mean N_t; target: e^(beta t) * single-particle P(tau > t)
  std::size_t n = 0;
  bool pass = false;  ///< every |z| <= 3
};

/// E[N_t] against e^(beta t) P(tau_0^- > t) at the configured lattice times,
/// the right side estimated from independent single-particle runs.
ExpectedCountReport expected_count_check(const BranchingConfig& config, std::size_t n,
                                         unsigned jobs = 1);

struct ExitLawReport {
  ZScore one_sided;  ///< E[e^(-q tau_x^+)] vs e^(-Phi(q)(x-a))
  ZScore two_sided;  ///< P(tau_x^+ <= e ^ tau_0^-) vs W^(beta)(a)/W^(beta)(x)
  std::size_t n = 0;
  bool pass = false;
};

/// Single-particle exit identities; `beta` is the rate of the exponential time.
ExitLawReport exit_law_checks(const LevyModel& model, double a, double x, double q, double beta,
                              std::size_t n, double dt, std::uint64_t seed, unsigned jobs = 1);

struct KendallReport {
  double level = 0.0;
  std::vector<double> cell_edges;
  std::vector<ZScore> cells;  ///< estimate: P(tau in cell); target: int (x/t) p_t(x) dt
  double chi_square = 0.0;
  double p_value = 0.0;
  std::size_t n = 0;
  bool pass = false;  ///< p-value >= 0.0027, the two-sided 3-sigma level
};

/// Two-sample test of t P(tau_x^+ in dt) = x P(L_t in dx) dt / dx for a path
/// started at 0, cell by cell over [edges.front(), edges.back()). The density
/// of L_t comes from the Gaussian last step when there is one; without it the
/// occupation density is read off the exact upward crossings of the level.
KendallReport kendall_check(const LevyModel& model, double level, std::vector<double> cell_edges,
                            std::size_t n, double dt, std::uint64_t seed, unsigned jobs = 1);

}  // namespace snlevy
