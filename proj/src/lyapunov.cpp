#include "toruslab/lyapunov.hpp"

#include <sstream>

#include "toruslab/parallel.hpp"

namespace toruslab {

Vec2 seed_vector(const HyperbolicToralMap& map) {
    Vec2 v = Vec2{1.0, 0.6180339887498949}.normalized();
    const HyperbolicSplitting split = splitting_of(map.matrix());
    if (std::abs(v.dot(split.stable)) > 0.99) {
        const double c = std::cos(0.5), s = std::sin(0.5);
        v = Vec2{c * v.x - s * v.y, s * v.x + c * v.y};
    }
    return v;
}

Vec2 unstable_direction(const HyperbolicToralMap& map, const TorusPoint& p, int warmup) {
    if (warmup < 1) throw Error("unstable_direction requires warmup >= 1");
    std::vector<TorusPoint> back(static_cast<std::size_t>(warmup));
    TorusPoint x = p;
    for (int j = 0; j < warmup; ++j) {
        x = map.step_inverse(x);
        back[static_cast<std::size_t>(j)] = x;  // back[j] = f^{-(j+1)}(p)
    }
    Vec2 v = seed_vector(map);
    for (int j = warmup - 1; j >= 0; --j) {
        v = (map.differential(back[static_cast<std::size_t>(j)]) * v).normalized();
    }
    if (v.dot(splitting_of(map.matrix()).unstable) < 0.0) v = -1.0 * v;
    return v;
}

UnstableSample unstable_sample(const HyperbolicToralMap& map, const TorusPoint& p, int warmup) {
    UnstableSample s;
    s.point = p;
    s.warmup = warmup;
    s.direction = unstable_direction(map, p, warmup);
    s.psi = std::log((map.differential(p) * s.direction).norm());
    return s;
}

double log_unstable_jacobian(const HyperbolicToralMap& map, const TorusPoint& p, int warmup) {
    return unstable_sample(map, p, warmup).psi;
}

std::vector<double> unstable_log_jacobians_along_orbit(const HyperbolicToralMap& map, const TorusPoint& p,
                                                       std::size_t n, int warmup) {
    std::vector<double> out;
    out.reserve(n);
    Vec2 u = unstable_direction(map, p, warmup);
    TorusPoint x = p;
    for (std::size_t j = 0; j < n; ++j) {
        const Vec2 w = map.differential(x) * u;
        const double len = w.norm();
        out.push_back(std::log(len));
        u = (1.0 / len) * w;
        if (j + 1 < n) x = map.step(x);
    }
    return out;
}

double birkhoff_unstable_average(const HyperbolicToralMap& map, const TorusPoint& p, std::size_t n,
                                 int warmup) {
    if (n < 1) throw Error("birkhoff_unstable_average requires n >= 1");
    double sum = 0.0;
    for (double v : unstable_log_jacobians_along_orbit(map, p, n, warmup)) sum += v;
    return sum / static_cast<double>(n);
}

namespace {

double grid_average(const HyperbolicToralMap& map, int warmup, int g, int threads) {
    if (g < 1) throw Error("quadrature grid resolution must be >= 1");
    std::vector<double> rows(static_cast<std::size_t>(g), 0.0);
    const double h = 1.0 / g;
    parallel_chunks(static_cast<std::size_t>(g), static_cast<std::size_t>(g), threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i) {
                            double row = 0.0;
                            for (int j = 0; j < g; ++j) {
                                const TorusPoint x((static_cast<double>(i) + 0.5) * h, (j + 0.5) * h);
                                row += log_unstable_jacobian(map, x, warmup);
                            }
                            rows[i] = row;
                        }
                    });
    double total = 0.0;
    for (double r : rows) total += r;
    return total / (static_cast<double>(g) * g);
}

double atom_average(const HyperbolicToralMap& map, const DiscreteMeasure& mu, int warmup, int threads) {
    constexpr std::size_t kChunks = 256;
    const std::size_t n = mu.size();
    const std::size_t chunks = std::min(kChunks, n);
    std::vector<double> partial(chunks, 0.0);
    parallel_chunks(n, chunks, threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
        double s = 0.0;
        for (std::size_t a = begin; a < end; ++a) {
            s += mu.weights()[a] * log_unstable_jacobian(map, mu.atoms()[a], warmup);
        }
        partial[c] = s;
    });
    double total = 0.0;
    for (double v : partial) total += v;
    return total;
}

}  // namespace

double unstable_integral(const HyperbolicToralMap& map, const MeasureRep& mu, int warmup, int grid_resolution,
                         int threads) {
    const double t = mu.lebesgue_weight();
    double total = 0.0;
    if (t > 0.0) total += t * grid_average(map, warmup, grid_resolution, threads);
    if (t < 1.0) total += (1.0 - t) * atom_average(map, *mu.discrete_part(), warmup, threads);
    return total;
}

LyapunovSpectrum lyapunov_spectrum_qr(const HyperbolicToralMap& map, const TorusPoint& p, std::size_t n,
                                      int warmup) {
    if (n < 100) throw Error("lyapunov_spectrum_qr requires n >= 100");
    Vec2 q1 = unstable_direction(map, p, warmup);
    Vec2 q2{-q1.y, q1.x};
    double sum1 = 0.0, sum2 = 0.0;
    TorusPoint x = p;
    for (std::size_t j = 0; j < n; ++j) {
        const Mat2 df = map.differential(x);
        const Vec2 c1 = df * q1;
        const double r11 = c1.norm();
        if (!(r11 > 0.0)) throw DegenerateCocycle("first QR column vanished");
        q1 = (1.0 / r11) * c1;
        Vec2 c2 = df * q2;
        c2 = c2 - q1.dot(c2) * q1;
        const double r22 = c2.norm();
        if (!(r22 > 0.0)) throw DegenerateCocycle("second QR column vanished");
        q2 = (1.0 / r22) * c2;
        sum1 += std::log(r11);
        sum2 += std::log(r22);
        x = map.step(x);
    }
    return {sum1 / static_cast<double>(n), sum2 / static_cast<double>(n), n};
}

}  // namespace toruslab
