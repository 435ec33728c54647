#pragma once

#include <cstddef>
#include <vector>

#include "toruslab/torus.hpp"
#include "toruslab/weak_star.hpp"

namespace toruslab {

inline constexpr int kDefaultWarmup = 60;
inline constexpr int kDefaultQuadratureResolution = 512;

struct LyapunovSpectrum {
    double chi_plus = 0.0;
    double chi_minus = 0.0;
    std::size_t n_steps = 0;
};

struct UnstableSample {
    TorusPoint point;
    Vec2 direction;  // unit vector spanning F(point)
    double psi = 0.0;
    int warmup = 0;
};

/// Seed vector (1, 0.618...) pushed through the cocycle; rotated by a fixed
/// angle if it sits too close to the stable eigendirection of the linear part.
Vec2 seed_vector(const HyperbolicToralMap& map);

/// Unit vector spanning F(p): the seed vector transported along the backward
/// orbit f^-N(p), ..., p and renormalized each step. Sign is fixed so the
/// component along the unstable eigenvector of A is non-negative.
Vec2 unstable_direction(const HyperbolicToralMap& map, const TorusPoint& p, int warmup = kDefaultWarmup);

UnstableSample unstable_sample(const HyperbolicToralMap& map, const TorusPoint& p, int warmup = kDefaultWarmup);

/// psi(p) = log |Df_p u| with u = unstable_direction(p).
double log_unstable_jacobian(const HyperbolicToralMap& map, const TorusPoint& p, int warmup = kDefaultWarmup);

/// psi(f^j p) for j < n by forward transport of F(p) along the orbit.
std::vector<double> unstable_log_jacobians_along_orbit(const HyperbolicToralMap& map, const TorusPoint& p,
                                                       std::size_t n, int warmup = kDefaultWarmup);

/// (1/n) sum_{j<n} psi(f^j p).
double birkhoff_unstable_average(const HyperbolicToralMap& map, const TorusPoint& p, std::size_t n,
                                 int warmup = kDefaultWarmup);

/// int psi dmu. Lebesgue parts use the midpoint rule on a grid_resolution^2 grid.
/// Partial sums are combined in a fixed order, so the value does not depend on `threads`.
double unstable_integral(const HyperbolicToralMap& map, const MeasureRep& mu, int warmup = kDefaultWarmup,
                         int grid_resolution = kDefaultQuadratureResolution, int threads = 1);

/// Two-dimensional QR (Gram-Schmidt) cocycle iteration along the orbit of p.
/// The initial frame is (F(p), F(p)^perp), so no transient is averaged in.
LyapunovSpectrum lyapunov_spectrum_qr(const HyperbolicToralMap& map, const TorusPoint& p, std::size_t n,
                                      int warmup = kDefaultWarmup);

}  // namespace toruslab
