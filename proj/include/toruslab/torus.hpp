#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "toruslab/errors.hpp"

namespace toruslab {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;

    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    Vec2 normalized() const {
        const double n = norm();
        return {x / n, y / n};
    }
};

/// Real 2x2 matrix, row-major: [[a, b], [c, d]].
struct Mat2 {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

    double det() const { return a * d - b * c; }
    double trace() const { return a + d; }
    Vec2 operator*(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
    Mat2 operator*(const Mat2& m) const {
        return {a * m.a + b * m.c, a * m.b + b * m.d, c * m.a + d * m.c, c * m.b + d * m.d};
    }
    Mat2 inverse() const {
        const double det_value = det();
        return {d / det_value, -b / det_value, -c / det_value, a / det_value};
    }
    /// Largest singular value.
    double operator_norm() const;
    friend bool operator==(const Mat2&, const Mat2&) = default;
};

using JacobianMatrix = Mat2;

/// Point of T^2 = R^2/Z^2, stored as its representative in [0,1)^2.
class TorusPoint {
public:
    TorusPoint() = default;
    TorusPoint(double x1, double x2) : x1_(wrap(x1)), x2_(wrap(x2)) {}
    explicit TorusPoint(Vec2 lift) : TorusPoint(lift.x, lift.y) {}

    double x1() const { return x1_; }
    double x2() const { return x2_; }
    Vec2 lift() const { return {x1_, x2_}; }

    /// Reduces a real coordinate into [0,1).
    static double wrap(double v) {
        double r = v - std::floor(v);
        if (r >= 1.0) r = 0.0;  // -tiny rounds up to 1.0
        return r;
    }

    friend bool operator==(const TorusPoint&, const TorusPoint&) = default;

private:
    double x1_ = 0.0;
    double x2_ = 0.0;
};

/// Shortest lift of p - q; each component in [-1/2, 1/2].
Vec2 torus_displacement(const TorusPoint& p, const TorusPoint& q);
double torus_distance(const TorusPoint& p, const TorusPoint& q);

struct IntMatrix2 {
    std::int64_t a = 0, b = 0, c = 0, d = 0;

    std::int64_t det() const { return a * d - b * c; }
    std::int64_t trace() const { return a + d; }
    Mat2 to_real() const {
        return {static_cast<double>(a), static_cast<double>(b), static_cast<double>(c),
                static_cast<double>(d)};
    }
    friend bool operator==(const IntMatrix2&, const IntMatrix2&) = default;
};

/// One term c * sin(2 pi k.x) of the perturbation field.
struct PerturbationTerm {
    Vec2 coefficient;
    std::array<int, 2> frequency{0, 0};
};

/// f(x) = A x + amplitude * sum_k c_k sin(2 pi k.x)  (mod 1).
///
/// Construction enforces |det A| = 1, no eigenvalue of A on the unit circle, and
/// amplitude * |A^-1| * Lip(perturbation) < 1/2, so the inverse is a
/// contraction fixed point. Cone hyperbolicity is a separate check
/// (verify_hyperbolicity) because it needs a grid sweep.
class HyperbolicToralMap {
public:
    explicit HyperbolicToralMap(IntMatrix2 matrix, double amplitude = 0.0,
                                std::vector<PerturbationTerm> perturbation = {});

    static HyperbolicToralMap cat_map() { return HyperbolicToralMap({2, 1, 1, 1}); }

    const IntMatrix2& matrix() const { return matrix_; }
    double amplitude() const { return amplitude_; }
    const std::vector<PerturbationTerm>& perturbation() const { return terms_; }
    bool is_linear() const { return amplitude_ == 0.0 || terms_.empty(); }

    /// Upper bound sum_k 2 pi |c_k| |k| on the Lipschitz constant of the field.
    double perturbation_lipschitz() const;
    /// amplitude * |A^-1| * Lip; strictly below 1/2 for every constructed map.
    double inverse_contraction_factor() const;

    TorusPoint step(const TorusPoint& p) const;
    /// Fixed-point inverse; throws IterationDivergence after 100 iterations.
    TorusPoint step_inverse(const TorusPoint& p) const;
    JacobianMatrix differential(const TorusPoint& p) const;
    std::vector<TorusPoint> orbit(const TorusPoint& p, std::size_t n) const;

    /// Perturbation field (without the amplitude factor) at a lifted point.
    Vec2 field(Vec2 x) const;

    static constexpr double kInverseTolerance = 1e-12;
    static constexpr int kInverseMaxIterations = 100;

private:
    IntMatrix2 matrix_;
    Mat2 real_matrix_;
    Mat2 inverse_matrix_;
    double amplitude_;
    std::vector<PerturbationTerm> terms_;
};

/// Eigen-decomposition of the linear part: unit eigenvectors and eigenvalues.
struct HyperbolicSplitting {
    double lambda_unstable = 0.0;  // |.| > 1
    double lambda_stable = 0.0;    // |.| < 1
    Vec2 unstable;
    Vec2 stable;

    /// Coordinates (u, s) of v in the eigenbasis.
    Vec2 to_eigen(Vec2 v) const;
    Vec2 from_eigen(Vec2 w) const { return w.x * unstable + w.y * stable; }
};

HyperbolicSplitting splitting_of(const IntMatrix2& matrix);

struct ConeReport {
    double lambda_expand = 0.0;
    double lambda_contract = 0.0;
    double cone_half_angle = 0.0;
    int grid_resolution = 0;
    bool pass = false;
    /// First grid point that violated a cone condition (if any).
    TorusPoint first_violation;
};

class NotHyperbolic : public Error {
public:
    NotHyperbolic(const std::string& what, ConeReport report)
        : Error(what), report_(report) {}
    const ConeReport& report() const noexcept { return report_; }

private:
    ConeReport report_;
};

inline constexpr double kDefaultConeHalfAngle = 0.05;

/// Cone-field sweep over grid cell centres. Cones are measured in the
/// eigen-coordinates of A: the unstable cone is {(1, t) : |t| <= tan(angle)}
/// and the stable cone {(t, 1) : |t| <= tan(angle)}. Expansion is the growth
/// of the cone's axis coordinate, so for a linear map lambda_expand equals the
/// unstable eigenvalue modulus exactly.
ConeReport inspect_hyperbolicity(const HyperbolicToralMap& map, int grid_resolution,
                                 double cone_half_angle = kDefaultConeHalfAngle);

/// As inspect_hyperbolicity, but throws NotHyperbolic when the check fails.
ConeReport verify_hyperbolicity(const HyperbolicToralMap& map, int grid_resolution,
                                double cone_half_angle = kDefaultConeHalfAngle);

}  // namespace toruslab
