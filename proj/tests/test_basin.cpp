#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "toruslab/basin.hpp"

using namespace toruslab;

namespace {

const double kLogLambda = std::log((3.0 + std::sqrt(5.0)) / 2.0);

BasinCurve synthetic(std::vector<int> ns, std::vector<std::uint64_t> hits, std::uint64_t samples) {
    BasinCurve c;
    c.epsilon = 0.1;
    for (std::size_t i = 0; i < ns.size(); ++i) c.rows.push_back({ns[i], hits[i], samples});
    return c;
}

RateEstimate slope(double value, double se) {
    RateEstimate r;
    r.slope = value;
    r.stderr_slope = se;
    r.valid = true;
    return r;
}

std::vector<int> range(int lo, int hi) {
    std::vector<int> v(static_cast<std::size_t>(hi - lo + 1));
    std::iota(v.begin(), v.end(), lo);
    return v;
}

}  // namespace

TEST(SampleGrid, CellCentresRowMajor) {
    const SampleGrid g{4};
    EXPECT_EQ(g.size(), 16u);
    EXPECT_EQ(g.point(0), TorusPoint(0.125, 0.125));
    EXPECT_EQ(g.point(1), TorusPoint(0.125, 0.375));
    EXPECT_EQ(g.point(4), TorusPoint(0.375, 0.125));
    const SampleGrid j{4, true, 9};
    for (std::size_t i = 0; i < j.size(); ++i) {
        const TorusPoint p = j.point(i);
        EXPECT_EQ(static_cast<std::size_t>(p.x1() * 4), i / 4);
        EXPECT_EQ(static_cast<std::size_t>(p.x2() * 4), i % 4);
        EXPECT_EQ(p, j.point(i));
    }
}

TEST(Membership, LargeEpsilonContainsEverything) {
    // dist* never exceeds 2 (every |m_i - n_i| <= 1, weights sum below 2).
    const TestFunctionFamily family;
    const auto cat = HyperbolicToralMap::cat_map();
    const auto target = lebesgue_moments(family);
    const auto v = basin_volume_estimate(cat, target, 2.1, 5, SampleGrid{16}, family);
    EXPECT_EQ(v.hits, v.samples);
    EXPECT_EQ(v.fraction, 1.0);
}

TEST(Membership, FixedPointLiesInDiracBasin) {
    const TestFunctionFamily family;
    const auto cat = HyperbolicToralMap::cat_map();
    const auto target = moments(DiscreteMeasure::dirac(TorusPoint(0, 0)), family);
    for (std::size_t n : {1u, 10u, 1000u}) {
        EXPECT_TRUE(basin_membership(cat, TorusPoint(0, 0), target, 1e-12, n, family));
    }
    EXPECT_FALSE(basin_membership(cat, TorusPoint(0.5, 0.5), target, 0.1, 3, family));
}

TEST(Membership, TypicalPointApproachesLebesgue) {
    const TestFunctionFamily family;
    const auto cat = HyperbolicToralMap::cat_map();
    EXPECT_TRUE(basin_membership(cat, TorusPoint(0.3, 0.7), lebesgue_moments(family), 0.1, 500, family));
}

TEST(Volume, MatchesBruteForceOracle) {
    const TestFunctionFamily family;
    const auto cat = HyperbolicToralMap::cat_map();
    const auto target = lebesgue_moments(family);
    const int g = 1024;
    const double eps = 0.3;
    // n = 1: sigma_1(p) = delta_p; compare against direct moment evaluation.
    std::uint64_t expected = 0;
    const SampleGrid grid{g};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto m = moments(DiscreteMeasure::dirac(grid.point(i)), family);
        if (weak_star_distance(m, target) < eps) ++expected;
    }
    const auto v = basin_volume_estimate(cat, target, eps, 1, grid, family, 2);
    EXPECT_EQ(v.hits, expected);
    EXPECT_EQ(v.samples, grid.size());
    EXPECT_GT(v.hits, 0u);
    EXPECT_LT(v.hits, v.samples);
}

TEST(Curves, MonotoneInEpsilonAndThreadIndependent) {
    const TestFunctionFamily family;
    const HyperbolicToralMap map({2, 1, 1, 1}, 0.005, {{Vec2{1.0, 0.0}, {0, 1}}});
    const auto target = moments(DiscreteMeasure::dirac(TorusPoint(0, 0)), family);
    const std::vector<double> eps{0.4, 0.3, 0.2};
    const std::vector<int> ns{1, 2, 3, 4, 6};
    const SampleGrid grid{96};
    const auto one = basin_curves(map, target, eps, ns, grid, family, 1);
    const auto three = basin_curves(map, target, eps, ns, grid, family, 3);
    ASSERT_EQ(one.size(), 3u);
    for (std::size_t e = 0; e < eps.size(); ++e) {
        for (std::size_t r = 0; r < ns.size(); ++r) {
            EXPECT_EQ(one[e].rows[r].hits, three[e].rows[r].hits);
            if (e > 0) {
                EXPECT_LE(one[e].rows[r].hits, one[e - 1].rows[r].hits);
            }
        }
    }
    // Single-epsilon entry point agrees with the batched one.
    const auto single = basin_curve(map, target, 0.3, ns, grid, family, 2);
    for (std::size_t r = 0; r < ns.size(); ++r) EXPECT_EQ(single.rows[r].hits, one[1].rows[r].hits);
}

// Basins for different n are not nested, so only the overall decay is checked.
TEST(Curves, DiracHitsDecayWithN) {
    const TestFunctionFamily family;
    const auto cat = HyperbolicToralMap::cat_map();
    const auto target = moments(DiscreteMeasure::dirac(TorusPoint(0, 0)), family);
    const auto curve = basin_curve(cat, target, 0.2, range(1, 8), SampleGrid{256}, family);
    EXPECT_LT(curve.rows.back().hits, curve.rows.front().hits);
}

TEST(Curves, EpsilonsMustDecrease) {
    const TestFunctionFamily family;
    const auto cat = HyperbolicToralMap::cat_map();
    const auto target = lebesgue_moments(family);
    const std::vector<double> bad{0.1, 0.2};
    const std::vector<int> ns{1, 2, 3};
    EXPECT_THROW(epsilon_sweep(cat, target, bad, ns, SampleGrid{16}, family, {1, 3}), Error);
}

TEST(Rate, RecoversSyntheticSlope) {
    std::vector<int> ns = range(1, 10);
    std::vector<std::uint64_t> hits;
    const std::uint64_t samples = 1ull << 40;
    for (int n : ns) hits.push_back(static_cast<std::uint64_t>(std::llround(samples * std::exp(-0.5 * n))));
    const auto r = rate_estimate(synthetic(ns, hits, samples), {1, 10});
    ASSERT_TRUE(r.valid);
    EXPECT_NEAR(r.slope, -0.5, 1e-9);
    EXPECT_NEAR(r.intercept, 0.0, 1e-9);
    EXPECT_LT(r.stderr_slope, 1e-9);
    EXPECT_EQ(r.residuals.size(), ns.size());
    for (const auto& [n, res] : r.residuals) EXPECT_NEAR(res, 0.0, 1e-9);
}

TEST(Rate, ConstantCurveHasZeroSlope) {
    const auto r = rate_estimate(synthetic({5, 6, 7, 8}, {700, 700, 700, 700}, 1000), {5, 8});
    EXPECT_EQ(r.slope, 0.0);
    EXPECT_EQ(r.stderr_slope, 0.0);
    EXPECT_NEAR(r.intercept, std::log(0.7), 1e-15);
}

TEST(Rate, CensorsSparseRowsAndWindow) {
    const auto curve = synthetic({1, 2, 3, 4, 5, 6}, {1000, 500, 250, 125, 20, 0}, 2000);
    const auto r = rate_estimate(curve, {1, 6});
    EXPECT_EQ(r.censored, (std::vector<int>{5, 6}));
    EXPECT_NEAR(r.slope, -std::log(2.0), 1e-12);
    EXPECT_EQ(r.min_hits, kDefaultMinHits);
    EXPECT_THROW(rate_estimate(curve, {3, 6}), InsufficientData);
    EXPECT_THROW(rate_estimate(curve, {1, 2}), InsufficientData);
}

TEST(Rate, LogFractionOfZeroHits) {
    const BasinRow row{3, 0, 10};
    EXPECT_TRUE(std::isinf(row.log_fraction()));
    EXPECT_LT(row.log_fraction(), 0.0);
}

TEST(Sweep, RecordsInvalidEstimatesInsteadOfThrowing) {
    const TestFunctionFamily family;
    const auto cat = HyperbolicToralMap::cat_map();
    const auto target = moments(DiscreteMeasure::dirac(TorusPoint(0, 0)), family);
    const std::vector<double> eps{0.3, 1e-6};
    const auto sweep = epsilon_sweep(cat, target, eps, range(1, 5), SampleGrid{64}, family, {1, 5});
    ASSERT_EQ(sweep.estimates.size(), 2u);
    EXPECT_TRUE(sweep.estimates[0].valid);
    EXPECT_FALSE(sweep.estimates[1].valid);
    EXPECT_FALSE(sweep.estimates[1].note.empty());
    ASSERT_TRUE(sweep.last_valid.has_value());
    EXPECT_EQ(sweep.last_valid->epsilon, 0.3);
}

TEST(Sweep, LebesgueRateIsZeroForCatMap) {
    const TestFunctionFamily family;
    const auto cat = HyperbolicToralMap::cat_map();
    const std::vector<double> eps{0.2};
    const auto sweep = epsilon_sweep(cat, lebesgue_moments(family), eps, range(40, 60), SampleGrid{64}, family,
                                     {40, 60});
    ASSERT_TRUE(sweep.last_valid.has_value());
    EXPECT_NEAR(sweep.last_valid->slope, 0.0, 5e-3);
    EXPECT_EQ(weak_pseudo_physical_verdict(sweep.estimates, 0.02), Verdict::consistent_with_zero);
}

TEST(Verdict, Cases) {
    const std::vector<RateEstimate> zero{slope(0.001, 0.001), slope(-0.004, 0.002)};
    EXPECT_EQ(weak_pseudo_physical_verdict(zero, 0.005), Verdict::consistent_with_zero);
    const std::vector<RateEstimate> negative{slope(-0.5, 0.01), slope(0.0, 0.0)};
    EXPECT_EQ(weak_pseudo_physical_verdict(negative, 0.005), Verdict::negative_rate);
    const std::vector<RateEstimate> noisy{slope(-0.1, 0.1)};
    EXPECT_EQ(weak_pseudo_physical_verdict(noisy, 0.005), Verdict::inconclusive);
    RateEstimate invalid;
    invalid.slope = -3.0;
    const std::vector<RateEstimate> only_invalid{invalid};
    EXPECT_THROW(weak_pseudo_physical_verdict(only_invalid, 0.005), InsufficientData);
    EXPECT_EQ(to_string(Verdict::negative_rate), "negative_rate");
}

TEST(Trend, Classification) {
    const std::vector<RateEstimate> down{slope(-0.2, 0), slope(-0.6, 0), slope(-0.9, 0)};
    EXPECT_EQ(slope_trend(down), SlopeTrend::decreasing);
    const std::vector<RateEstimate> up{slope(-0.9, 0), slope(-0.2, 0)};
    EXPECT_EQ(slope_trend(up), SlopeTrend::increasing);
    const std::vector<RateEstimate> one{slope(-0.9, 0)};
    EXPECT_EQ(slope_trend(one), SlopeTrend::undetermined);
}

TEST(Residual, Examples) {
    EXPECT_NEAR(pesin_rate_residual(0.0, kLogLambda, kLogLambda), 0.0, 1e-15);
    EXPECT_NEAR(pesin_rate_residual(-kLogLambda, 0.0, kLogLambda), 0.0, 1e-15);
    EXPECT_NEAR(pesin_rate_residual(-0.6363, 0.0, kLogLambda), kLogLambda - 0.6363, 1e-12);
    EXPECT_NEAR(pesin_defect(kLogLambda, kLogLambda), 0.0, 1e-15);
    EXPECT_NEAR(pesin_defect(0.0, kLogLambda), -kLogLambda, 1e-15);
}
