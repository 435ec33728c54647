#include "toruslab/basin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "toruslab/parallel.hpp"

namespace toruslab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double unit_from_bits(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

TorusPoint SampleGrid::point(std::size_t idx) const {
    const auto g = static_cast<std::size_t>(resolution);
    const double h = 1.0 / resolution;
    double u = 0.5, v = 0.5;
    if (jitter) {
        const std::uint64_t base = splitmix64(seed ^ splitmix64(idx));
        u = unit_from_bits(base);
        v = unit_from_bits(splitmix64(base));
    }
    return TorusPoint((static_cast<double>(idx / g) + u) * h, (static_cast<double>(idx % g) + v) * h);
}

double BasinRow::log_fraction() const {
    if (hits == 0) return -std::numeric_limits<double>::infinity();
    return std::log(fraction());
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::consistent_with_zero: return "consistent_with_zero";
        case Verdict::negative_rate: return "negative_rate";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

std::string to_string(SlopeTrend t) {
    switch (t) {
        case SlopeTrend::decreasing: return "decreasing";
        case SlopeTrend::increasing: return "increasing";
        case SlopeTrend::flat: return "flat";
        case SlopeTrend::mixed: return "mixed";
        case SlopeTrend::undetermined: return "undetermined";
    }
    return "undetermined";
}

bool basin_membership(const HyperbolicToralMap& map, const TorusPoint& p, const MomentVector& target,
                      double epsilon, std::size_t n, const TestFunctionFamily& family) {
    if (n < 1) throw Error("basin_membership requires n >= 1");
    if (!(epsilon > 0.0)) throw Error("basin_membership requires epsilon > 0");
    OrbitMomentAccumulator acc(family);
    TorusPoint x = p;
    for (std::size_t j = 0; j < n; ++j) {
        acc.add(x);
        if (j + 1 < n) x = map.step(x);
    }
    return acc.distance_to(target) < epsilon;
}

std::vector<BasinCurve> basin_curves(const HyperbolicToralMap& map, const MomentVector& target,
                                     std::span<const double> epsilons, std::span<const int> n_values,
                                     const SampleGrid& grid, const TestFunctionFamily& family, int threads) {
    if (n_values.empty()) throw Error("basin curve needs a non-empty n range");
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        if (n_values[i] < 1 || (i > 0 && n_values[i] <= n_values[i - 1])) {
            throw Error("n range must be positive and strictly increasing");
        }
    }
    for (double e : epsilons) {
        if (!(e > 0.0)) throw Error("epsilon must be > 0");
    }
    if (grid.resolution < 1) throw Error("sample grid resolution must be >= 1");
    if (target.size() != family.size()) throw FamilyMismatch("target moments use a different family");

    const std::size_t rows = n_values.size();
    const std::size_t ne = epsilons.size();
    const std::size_t samples = grid.size();
    const std::size_t chunks = std::min<std::size_t>(samples, 4096);
    const int n_max = n_values.back();

    std::vector<std::uint64_t> hits(rows * ne, 0);
    std::vector<std::vector<std::uint64_t>> partial(chunks);
    parallel_chunks(samples, chunks, threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
        std::vector<std::uint64_t> local(rows * ne, 0);
        OrbitMomentAccumulator acc(family);
        for (std::size_t idx = begin; idx < end; ++idx) {
            acc.reset();
            TorusPoint x = grid.point(idx);
            std::size_t next_row = 0;
            for (int j = 1; j <= n_max; ++j) {
                acc.add(x);
                if (j == n_values[next_row]) {
                    const double d = acc.distance_to(target);
                    for (std::size_t e = 0; e < ne; ++e) {
                        if (d < epsilons[e]) ++local[next_row * ne + e];
                    }
                    ++next_row;
                }
                if (j < n_max) x = map.step(x);
            }
        }
        partial[c] = std::move(local);
    });
    for (const auto& local : partial) {
        for (std::size_t i = 0; i < hits.size(); ++i) hits[i] += local[i];
    }

    std::vector<BasinCurve> out(ne);
    for (std::size_t e = 0; e < ne; ++e) {
        out[e].target = target;
        out[e].epsilon = epsilons[e];
        out[e].rows.reserve(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            out[e].rows.push_back(BasinRow{n_values[r], hits[r * ne + e], static_cast<std::uint64_t>(samples)});
        }
    }
    return out;
}

BasinCurve basin_curve(const HyperbolicToralMap& map, const MomentVector& target, double epsilon,
                       std::span<const int> n_values, const SampleGrid& grid, const TestFunctionFamily& family,
                       int threads) {
    const double eps[] = {epsilon};
    return std::move(basin_curves(map, target, eps, n_values, grid, family, threads).front());
}

VolumeEstimate basin_volume_estimate(const HyperbolicToralMap& map, const MomentVector& target, double epsilon,
                                     int n, const SampleGrid& grid, const TestFunctionFamily& family,
                                     int threads) {
    const int ns[] = {n};
    const BasinCurve curve = basin_curve(map, target, epsilon, ns, grid, family, threads);
    const BasinRow& row = curve.rows.front();
    return {row.fraction(), row.hits, row.samples};
}

RateEstimate rate_estimate(const BasinCurve& curve, RegressionWindow window, std::uint64_t min_hits) {
    RateEstimate est;
    est.epsilon = curve.epsilon;
    est.window = window;
    est.min_hits = min_hits;

    std::vector<double> xs, ys;
    for (const auto& row : curve.rows) {
        if (row.n < window.n_min || row.n > window.n_max) continue;
        if (row.hits < min_hits) {
            est.censored.push_back(row.n);
            continue;
        }
        xs.push_back(row.n);
        ys.push_back(row.log_fraction());
    }
    if (xs.size() < 3) {
        std::ostringstream os;
        os << "only " << xs.size() << " uncensored rows in window [" << window.n_min << ", " << window.n_max
           << "] at epsilon " << curve.epsilon << " (min_hits " << min_hits << ")";
        throw InsufficientData(os.str());
    }
    const double m = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    est.slope = sxy / sxx;
    est.intercept = my - est.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (est.intercept + est.slope * xs[i]);
        est.residuals.emplace_back(static_cast<int>(xs[i]), r);
        ssr += r * r;
    }
    est.stderr_slope = std::sqrt(ssr / (m - 2.0) / sxx);
    est.valid = true;
    return est;
}

SlopeTrend slope_trend(std::span<const RateEstimate> estimates) {
    std::vector<double> slopes;
    for (const auto& e : estimates) {
        if (e.valid) slopes.push_back(e.slope);
    }
    if (slopes.size() < 2) return SlopeTrend::undetermined;
    bool down = true, up = true, flat = true;
    for (std::size_t i = 1; i < slopes.size(); ++i) {
        const double d = slopes[i] - slopes[i - 1];
        if (d > 0.0) down = false;
        if (d < 0.0) up = false;
        if (std::abs(d) > 1e-12) flat = false;
    }
    if (flat) return SlopeTrend::flat;
    if (down) return SlopeTrend::decreasing;
    if (up) return SlopeTrend::increasing;
    return SlopeTrend::mixed;
}

EpsilonSweep epsilon_sweep(const HyperbolicToralMap& map, const MomentVector& target,
                           std::span<const double> epsilons, std::span<const int> n_values,
                           const SampleGrid& grid, const TestFunctionFamily& family, RegressionWindow window,
                           std::uint64_t min_hits, int threads) {
    if (epsilons.empty()) throw Error("epsilon sweep needs at least one epsilon");
    for (std::size_t i = 1; i < epsilons.size(); ++i) {
        if (!(epsilons[i] < epsilons[i - 1])) throw Error("epsilon list must be strictly decreasing");
    }
    EpsilonSweep sweep;
    sweep.curves = basin_curves(map, target, epsilons, n_values, grid, family, threads);
    for (const auto& curve : sweep.curves) {
        try {
            sweep.estimates.push_back(rate_estimate(curve, window, min_hits));
        } catch (const InsufficientData& e) {
            RateEstimate bad;
            bad.epsilon = curve.epsilon;
            bad.window = window;
            bad.min_hits = min_hits;
            bad.valid = false;
            bad.note = e.what();
            sweep.estimates.push_back(std::move(bad));
        }
    }
    for (const auto& e : sweep.estimates) {
        if (e.valid) sweep.last_valid = e;
    }
    sweep.trend = slope_trend(sweep.estimates);
    return sweep;
}

Verdict weak_pseudo_physical_verdict(std::span<const RateEstimate> estimates, double tol) {
    bool any = false, all_zero = true, negative = false;
    for (const auto& e : estimates) {
        if (!e.valid) continue;
        any = true;
        if (e.slope < -tol || e.slope > tol) all_zero = false;
        if (e.slope < -3.0 * e.stderr_slope - tol) negative = true;
    }
    if (!any) throw InsufficientData("verdict needs at least one valid rate estimate");
    if (all_zero) return Verdict::consistent_with_zero;
    if (negative) return Verdict::negative_rate;
    return Verdict::inconclusive;
}

}  // namespace toruslab
