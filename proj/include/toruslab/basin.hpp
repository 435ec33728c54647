#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toruslab/torus.hpp"
#include "toruslab/weak_star.hpp"

namespace toruslab {

/// G^2 start points at cell centres, optionally with a seeded offset inside each cell.
struct SampleGrid {
    int resolution = 0;
    bool jitter = false;
    std::uint64_t seed = 0;

    std::size_t size() const { return static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution); }
    /// Point with row-major index idx = i * G + j (i indexes x1).
    TorusPoint point(std::size_t idx) const;
};

struct BasinRow {
    int n = 0;
    std::uint64_t hits = 0;
    std::uint64_t samples = 0;

    double fraction() const { return static_cast<double>(hits) / static_cast<double>(samples); }
    /// log(hits/samples); -inf when hits == 0.
    double log_fraction() const;
};

/// Hit counts of A_{eps,n}(target) on a fixed grid, one row per n.
struct BasinCurve {
    MomentVector target;
    double epsilon = 0.0;
    std::vector<BasinRow> rows;
};

struct RegressionWindow {
    int n_min = 0;
    int n_max = 0;
};

struct RateEstimate {
    double epsilon = 0.0;
    double slope = 0.0;
    double stderr_slope = 0.0;
    double intercept = 0.0;
    RegressionWindow window;
    std::vector<int> censored;
    std::uint64_t min_hits = 0;
    bool valid = false;
    std::string note;
    /// (n, observed - fitted log fraction) for each row used in the fit.
    std::vector<std::pair<int, double>> residuals;
};

enum class Verdict { consistent_with_zero, negative_rate, inconclusive };
enum class SlopeTrend { decreasing, increasing, flat, mixed, undetermined };

std::string to_string(Verdict v);
std::string to_string(SlopeTrend t);

struct EpsilonSweep {
    std::vector<BasinCurve> curves;
    std::vector<RateEstimate> estimates;
    /// How slopes move as epsilon shrinks (over valid estimates, in list order).
    SlopeTrend trend = SlopeTrend::undetermined;
    /// Estimate at the smallest epsilon that produced one; not a converged limit.
    std::optional<RateEstimate> last_valid;
};

inline constexpr std::uint64_t kDefaultMinHits = 30;

/// dist*(sigma_n(p), target) < eps, with sigma_n accumulated on the fly.
bool basin_membership(const HyperbolicToralMap& map, const TorusPoint& p, const MomentVector& target,
                      double epsilon, std::size_t n, const TestFunctionFamily& family);

struct VolumeEstimate {
    double fraction = 0.0;
    std::uint64_t hits = 0;
    std::uint64_t samples = 0;
};

VolumeEstimate basin_volume_estimate(const HyperbolicToralMap& map, const MomentVector& target, double epsilon,
                                     int n, const SampleGrid& grid, const TestFunctionFamily& family,
                                     int threads = 1);

/// One orbit traversal per grid point evaluates every n in n_values for every epsilon.
/// Hit counts are integer reductions, independent of the thread count.
std::vector<BasinCurve> basin_curves(const HyperbolicToralMap& map, const MomentVector& target,
                                     std::span<const double> epsilons, std::span<const int> n_values,
                                     const SampleGrid& grid, const TestFunctionFamily& family, int threads = 1);

BasinCurve basin_curve(const HyperbolicToralMap& map, const MomentVector& target, double epsilon,
                       std::span<const int> n_values, const SampleGrid& grid, const TestFunctionFamily& family,
                       int threads = 1);

/// Least-squares slope of log(hits/samples) against n over uncensored rows in the window.
/// Throws InsufficientData with fewer than 3 uncensored rows.
RateEstimate rate_estimate(const BasinCurve& curve, RegressionWindow window,
                           std::uint64_t min_hits = kDefaultMinHits);

/// epsilons must be strictly decreasing. Per-epsilon InsufficientData is recorded
/// as an invalid estimate instead of aborting the sweep.
EpsilonSweep epsilon_sweep(const HyperbolicToralMap& map, const MomentVector& target,
                           std::span<const double> epsilons, std::span<const int> n_values,
                           const SampleGrid& grid, const TestFunctionFamily& family, RegressionWindow window,
                           std::uint64_t min_hits = kDefaultMinHits, int threads = 1);

SlopeTrend slope_trend(std::span<const RateEstimate> estimates);

/// consistent_with_zero iff every valid slope lies in [-tol, tol];
/// negative_rate iff some valid slope < -3*stderr - tol; inconclusive otherwise.
Verdict weak_pseudo_physical_verdict(std::span<const RateEstimate> estimates, double tol);

/// a - (h - integral): zero when the measured rate matches the entropy formula.
inline double pesin_rate_residual(double rate, double entropy, double unstable_integral) {
    return rate - (entropy - unstable_integral);
}

/// h - int psi; zero exactly when Pesin's entropy formula holds.
inline double pesin_defect(double entropy, double unstable_integral) { return entropy - unstable_integral; }

}  // namespace toruslab
