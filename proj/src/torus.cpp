#include "toruslab/torus.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace toruslab {

double Mat2::operator_norm() const {
    const double s = a * a + b * b + c * c + d * d;
    const double dt = det();
    const double disc = std::max(0.0, s * s - 4.0 * dt * dt);
    return std::sqrt(0.5 * (s + std::sqrt(disc)));
}

Vec2 torus_displacement(const TorusPoint& p, const TorusPoint& q) {
    double dx = p.x1() - q.x1();
    double dy = p.x2() - q.x2();
    dx -= std::round(dx);
    dy -= std::round(dy);
    return {dx, dy};
}

double torus_distance(const TorusPoint& p, const TorusPoint& q) {
    return torus_displacement(p, q).norm();
}

HyperbolicToralMap::HyperbolicToralMap(IntMatrix2 matrix, double amplitude,
                                       std::vector<PerturbationTerm> perturbation)
    : matrix_(matrix),
      real_matrix_(matrix.to_real()),
      amplitude_(amplitude),
      terms_(std::move(perturbation)) {
    const std::int64_t det = matrix_.det();
    if (det != 1 && det != -1) {
        std::ostringstream os;
        os << "hyperbolicity check failed: |det A| must be 1, got det = " << det;
        throw InvalidMap(os.str());
    }
    // No eigenvalue on the unit circle: |tr| > 2 for det 1, tr != 0 for det -1.
    const std::int64_t tr = matrix_.trace();
    if ((det == 1 && std::llabs(tr) <= 2) || (det == -1 && tr == 0)) {
        std::ostringstream os;
        os << "hyperbolicity check failed: eigenvalue on the unit circle (trace " << tr << ", det " << det << ")";
        throw InvalidMap(os.str());
    }
    if (!(amplitude_ >= 0.0) || !std::isfinite(amplitude_)) {
        throw InvalidMap("perturbation amplitude must be finite and >= 0");
    }
    for (const auto& term : terms_) {
        if (!std::isfinite(term.coefficient.x) || !std::isfinite(term.coefficient.y)) {
            throw InvalidMap("perturbation coefficients must be finite");
        }
    }
    inverse_matrix_ = real_matrix_.inverse();
    if (!(inverse_contraction_factor() < 0.5)) {
        std::ostringstream os;
        os << "inverse contraction check failed: amplitude*|A^-1|*Lip = "
           << inverse_contraction_factor() << " must be < 1/2";
        throw InvalidMap(os.str());
    }
}

double HyperbolicToralMap::perturbation_lipschitz() const {
    double lip = 0.0;
    for (const auto& term : terms_) {
        const double k_norm = std::hypot(static_cast<double>(term.frequency[0]),
                                         static_cast<double>(term.frequency[1]));
        lip += kTwoPi * term.coefficient.norm() * k_norm;
    }
    return lip;
}

double HyperbolicToralMap::inverse_contraction_factor() const {
    return amplitude_ * inverse_matrix_.operator_norm() * perturbation_lipschitz();
}

Vec2 HyperbolicToralMap::field(Vec2 x) const {
    Vec2 out;
    for (const auto& term : terms_) {
        const double s = std::sin(kTwoPi * (term.frequency[0] * x.x + term.frequency[1] * x.y));
        out = out + s * term.coefficient;
    }
    return out;
}

TorusPoint HyperbolicToralMap::step(const TorusPoint& p) const {
    const Vec2 x = p.lift();
    Vec2 y = real_matrix_ * x;
    if (!is_linear()) y = y + amplitude_ * field(x);
    return TorusPoint(y);
}

TorusPoint HyperbolicToralMap::step_inverse(const TorusPoint& p) const {
    const Vec2 target = p.lift();
    Vec2 q = inverse_matrix_ * target;
    if (is_linear()) return TorusPoint(q);

    for (int iter = 0; iter < kInverseMaxIterations; ++iter) {
        const Vec2 next = inverse_matrix_ * (target - amplitude_ * field(q));
        const Vec2 delta = next - q;
        q = next;
        if (std::max(std::abs(delta.x), std::abs(delta.y)) <= 1e-15) break;
    }
    const TorusPoint result(q);
    const double residual = torus_distance(step(result), p);
    if (!(residual <= kInverseTolerance)) {
        std::ostringstream os;
        os << "inverse iteration did not reach tolerance " << kInverseTolerance
           << " (residual " << residual << ")";
        throw IterationDivergence(os.str());
    }
    return result;
}

JacobianMatrix HyperbolicToralMap::differential(const TorusPoint& p) const {
    Mat2 jac = real_matrix_;
    if (is_linear()) return jac;
    const Vec2 x = p.lift();
    for (const auto& term : terms_) {
        const double k1 = term.frequency[0];
        const double k2 = term.frequency[1];
        const double g = amplitude_ * kTwoPi * std::cos(kTwoPi * (k1 * x.x + k2 * x.y));
        jac.a += g * term.coefficient.x * k1;
        jac.b += g * term.coefficient.x * k2;
        jac.c += g * term.coefficient.y * k1;
        jac.d += g * term.coefficient.y * k2;
    }
    return jac;
}

std::vector<TorusPoint> HyperbolicToralMap::orbit(const TorusPoint& p, std::size_t n) const {
    std::vector<TorusPoint> out;
    out.reserve(n);
    TorusPoint x = p;
    for (std::size_t j = 0; j < n; ++j) {
        out.push_back(x);
        if (j + 1 < n) x = step(x);
    }
    return out;
}

namespace {

Vec2 eigenvector(const Mat2& m, double lambda) {
    Vec2 v = std::abs(m.b) >= std::abs(m.c) ? Vec2{m.b, lambda - m.a} : Vec2{lambda - m.d, m.c};
    v = v.normalized();
    if (v.x < 0.0 || (v.x == 0.0 && v.y < 0.0)) v = -1.0 * v;
    return v;
}

}  // namespace

Vec2 HyperbolicSplitting::to_eigen(Vec2 v) const {
    const double det = unstable.x * stable.y - stable.x * unstable.y;
    return {(v.x * stable.y - stable.x * v.y) / det, (unstable.x * v.y - v.x * unstable.y) / det};
}

HyperbolicSplitting splitting_of(const IntMatrix2& matrix) {
    const Mat2 m = matrix.to_real();
    const double tr = m.trace();
    const double disc = std::sqrt(tr * tr - 4.0 * m.det());
    // Larger-modulus root computed without cancellation; the other from det.
    const double big = 0.5 * (tr + std::copysign(disc, tr));
    const double small = m.det() / big;
    HyperbolicSplitting out;
    out.lambda_unstable = big;
    out.lambda_stable = small;
    out.unstable = eigenvector(m, big);
    out.stable = eigenvector(m, small);
    return out;
}

ConeReport inspect_hyperbolicity(const HyperbolicToralMap& map, int grid_resolution,
                                 double cone_half_angle) {
    if (grid_resolution < 16) throw Error("verify_hyperbolicity requires grid_resolution >= 16");
    const HyperbolicSplitting split = splitting_of(map.matrix());
    const double slope = std::tan(cone_half_angle);

    ConeReport report;
    report.cone_half_angle = cone_half_angle;
    report.grid_resolution = grid_resolution;
    report.lambda_expand = std::numeric_limits<double>::infinity();
    report.lambda_contract = 0.0;
    bool ok = true;

    auto in_eigen = [&](const Mat2& m) {
        // Columns of P^-1 M P.
        const Vec2 cu = split.to_eigen(m * split.unstable);
        const Vec2 cs = split.to_eigen(m * split.stable);
        return Mat2{cu.x, cs.x, cu.y, cs.y};
    };

    const double h = 1.0 / grid_resolution;
    for (int i = 0; i < grid_resolution; ++i) {
        for (int j = 0; j < grid_resolution; ++j) {
            const TorusPoint x((i + 0.5) * h, (j + 0.5) * h);
            const Mat2 df = map.differential(x);
            const Mat2 fwd = in_eigen(df);
            const Mat2 bwd = in_eigen(df.inverse());

            bool here = true;
            double grow_u = std::numeric_limits<double>::infinity();
            double grow_s = std::numeric_limits<double>::infinity();
            double sign_u = 0.0;
            double sign_s = 0.0;
            for (double t : {-slope, 0.0, slope}) {
                // unstable cone vector (1, t) under Df
                const double wu = fwd.a + fwd.b * t;
                const double ws = fwd.c + fwd.d * t;
                if (wu == 0.0 || (sign_u != 0.0 && std::signbit(wu) != std::signbit(sign_u))) here = false;
                sign_u = wu;
                if (!(std::abs(ws) < slope * std::abs(wu)) && slope > 0.0) here = false;
                grow_u = std::min(grow_u, std::abs(wu));
                // stable cone vector (t, 1) under Df^-1
                const double vu = bwd.a * t + bwd.b;
                const double vs = bwd.c * t + bwd.d;
                if (vs == 0.0 || (sign_s != 0.0 && std::signbit(vs) != std::signbit(sign_s))) here = false;
                sign_s = vs;
                if (!(std::abs(vu) < slope * std::abs(vs)) && slope > 0.0) here = false;
                grow_s = std::min(grow_s, std::abs(vs));
            }
            report.lambda_expand = std::min(report.lambda_expand, grow_u);
            report.lambda_contract = std::max(report.lambda_contract, 1.0 / grow_s);
            if (!here && ok) {
                ok = false;
                report.first_violation = x;
            }
        }
    }
    report.pass = ok && report.lambda_expand > 1.0 && report.lambda_contract < 1.0;
    return report;
}

ConeReport verify_hyperbolicity(const HyperbolicToralMap& map, int grid_resolution,
                                double cone_half_angle) {
    ConeReport report = inspect_hyperbolicity(map, grid_resolution, cone_half_angle);
    if (!report.pass) {
        std::ostringstream os;
        os << "cone condition violated near (" << report.first_violation.x1() << ", "
           << report.first_violation.x2() << "); lambda_expand=" << report.lambda_expand
           << " lambda_contract=" << report.lambda_contract;
        throw NotHyperbolic(os.str(), report);
    }
    return report;
}

}  // namespace toruslab
