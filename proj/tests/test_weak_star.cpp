#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "toruslab/weak_star.hpp"

using namespace toruslab;

namespace {

// Independent enumeration: (k1, k2, sine) by shell, then lexicographic, cosine first.
std::vector<std::tuple<int, int, bool>> oracle_modes(int count) {
    std::vector<std::tuple<int, int, bool>> out;
    for (int shell = 1; static_cast<int>(out.size()) < count - 1; ++shell) {
        std::vector<std::pair<int, int>> ks;
        for (int a = -shell; a <= shell; ++a) {
            for (int b = -shell; b <= shell; ++b) {
                if (std::max(std::abs(a), std::abs(b)) == shell) ks.emplace_back(a, b);
            }
        }
        std::sort(ks.begin(), ks.end());
        for (auto [a, b] : ks) {
            out.emplace_back(a, b, false);
            out.emplace_back(a, b, true);
        }
    }
    out.resize(static_cast<std::size_t>(count - 1));
    return out;
}

double oracle_phi(const std::tuple<int, int, bool>& m, double x1, double x2) {
    const auto [a, b, sine] = m;
    const double arg = 2.0 * M_PI * (a * x1 + b * x2);
    return 0.5 * (1.0 + (sine ? std::sin(arg) : std::cos(arg)));
}

std::vector<double> oracle_moments(const std::vector<TorusPoint>& atoms, const std::vector<double>& weights, int k) {
    const auto modes = oracle_modes(k);
    std::vector<double> m(static_cast<std::size_t>(k), 0.0);
    m[0] = 1.0;
    for (std::size_t i = 1; i < m.size(); ++i) {
        for (std::size_t a = 0; a < atoms.size(); ++a) {
            m[i] += weights[a] * oracle_phi(modes[i - 1], atoms[a].x1(), atoms[a].x2());
        }
    }
    return m;
}

double oracle_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::ldexp(std::abs(a[i] - b[i]), -static_cast<int>(i));
    return d;
}

DiscreteMeasure random_measure(std::mt19937_64& rng, int max_atoms = 5) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_atoms));
    std::vector<TorusPoint> atoms;
    for (int i = 0; i < n; ++i) {
        const double x = u(rng);
        atoms.emplace_back(x, u(rng));
    }
    return DiscreteMeasure::uniform(atoms);
}

}  // namespace

TEST(Family, EnumerationMatchesOracle) {
    const TestFunctionFamily fam(60);
    const auto modes = oracle_modes(60);
    EXPECT_TRUE(fam.mode(0).constant);
    for (int i = 1; i < fam.size(); ++i) {
        const auto [a, b, sine] = modes[static_cast<std::size_t>(i - 1)];
        EXPECT_EQ(fam.mode(i).k1, a) << i;
        EXPECT_EQ(fam.mode(i).k2, b) << i;
        EXPECT_EQ(fam.mode(i).sine, sine) << i;
        EXPECT_EQ(fam.weight(i), std::ldexp(1.0, -i));
    }
    EXPECT_EQ(TestFunctionFamily().size(), 33);
    EXPECT_EQ(TestFunctionFamily().tail_bound(), std::ldexp(1.0, -32));
}

TEST(Family, ValuesMatchOracleAndStayInUnitInterval) {
    const TestFunctionFamily fam(100);
    const auto modes = oracle_modes(100);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        const double x1 = u(rng), x2 = u(rng);
        const auto v = fam.evaluate(TorusPoint(x1, x2));
        EXPECT_EQ(v[0], 1.0);
        for (int i = 1; i < fam.size(); ++i) {
            EXPECT_NEAR(v[static_cast<std::size_t>(i)], oracle_phi(modes[static_cast<std::size_t>(i - 1)], x1, x2),
                        1e-13);
            EXPECT_GE(v[static_cast<std::size_t>(i)], 0.0);
            EXPECT_LE(v[static_cast<std::size_t>(i)], 1.0);
        }
    }
}

TEST(DiscreteMeasure, ValidatesWeights) {
    EXPECT_THROW(DiscreteMeasure({TorusPoint(0, 0)}, {0.9}), Error);
    EXPECT_THROW(DiscreteMeasure({}, {}), Error);
    EXPECT_THROW(DiscreteMeasure({TorusPoint(0, 0), TorusPoint(0.5, 0)}, {1.2, -0.2}), Error);
    EXPECT_NO_THROW(DiscreteMeasure({TorusPoint(0, 0), TorusPoint(0.5, 0)}, {0.25, 0.75}));
}

TEST(EmpiricalMeasure, Examples) {
    const auto cat = HyperbolicToralMap::cat_map();
    const auto one = empirical_measure(cat, TorusPoint(0.3, 0.6), 1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one.atoms()[0], TorusPoint(0.3, 0.6));
    const auto fixed = empirical_measure(cat, TorusPoint(0, 0), 7);
    ASSERT_EQ(fixed.size(), 1u);
    EXPECT_DOUBLE_EQ(fixed.weights()[0], 1.0);
    const auto three = empirical_measure(cat, TorusPoint(0.5, 0.5), 3);
    ASSERT_EQ(three.size(), 3u);
    const TorusPoint expected[] = {TorusPoint(0.5, 0.5), TorusPoint(0.5, 0.0), TorusPoint(0.0, 0.5)};
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(three.atoms()[static_cast<std::size_t>(i)], expected[i]);
        EXPECT_NEAR(three.weights()[static_cast<std::size_t>(i)], 1.0 / 3.0, 1e-15);
    }
}

TEST(DiscreteMeasure, CoalescesAcrossTheSeam) {
    const DiscreteMeasure m({TorusPoint(0.0, 0.3), TorusPoint(1.0 - 1e-14, 0.3), TorusPoint(0.5, 0.5)},
                            {0.25, 0.25, 0.5});
    const auto c = m.coalesced();
    ASSERT_EQ(c.size(), 2u);
    EXPECT_DOUBLE_EQ(c.weights()[0], 0.5);
}

TEST(Moments, Examples) {
    const TestFunctionFamily fam;
    const auto leb = lebesgue_moments(fam);
    EXPECT_EQ(leb[0], 1.0);
    for (int i = 1; i < fam.size(); ++i) EXPECT_EQ(leb[i], 0.5);
    EXPECT_EQ(moments(MeasureRep::lebesgue(), fam), leb);

    const auto d0 = moments(DiscreteMeasure::dirac(TorusPoint(0, 0)), fam);
    for (int i = 1; i < fam.size(); ++i) {
        EXPECT_NEAR(d0[i], fam.mode(i).sine ? 0.5 : 1.0, 1e-15);
    }

    // cos(2 pi x1) at x1 = 0 and 0.5 gives 1 and -1, so the averaged phi is 0.5.
    const auto two = moments(DiscreteMeasure::uniform({TorusPoint(0, 0), TorusPoint(0.5, 0)}), fam);
    for (int i = 1; i < fam.size(); ++i) {
        if (fam.mode(i).k1 == 1 && fam.mode(i).k2 == 0 && !fam.mode(i).sine) EXPECT_NEAR(two[i], 0.5, 1e-15);
    }
}

TEST(Moments, MatchOracleOnRandomMeasures) {
    const TestFunctionFamily fam(33);
    std::mt19937_64 rng(17);
    for (int t = 0; t < 50; ++t) {
        const auto mu = random_measure(rng);
        const auto got = moments(mu, fam);
        const auto want = oracle_moments(mu.atoms(), mu.weights(), 33);
        for (int i = 0; i < 33; ++i) EXPECT_NEAR(got[i], want[static_cast<std::size_t>(i)], 1e-14);
    }
}

TEST(Distance, DiracVersusLebesgueMatchesOracle) {
    const TestFunctionFamily fam;
    const auto a = oracle_moments({TorusPoint(0, 0)}, {1.0}, 33);
    const std::vector<double> leb(33, 0.5);
    std::vector<double> l = leb;
    l[0] = 1.0;
    const double want = oracle_distance(a, l);
    const double got =
        weak_star_distance(MeasureRep::discrete(DiscreteMeasure::dirac(TorusPoint(0, 0))), MeasureRep::lebesgue(), fam);
    EXPECT_NEAR(got, want, 1e-14);
    // Each cosine mode contributes 2^-i / 2; the sine modes contribute nothing.
    double cos_only = 0.0;
    for (int i = 1; i < fam.size(); ++i) {
        if (!fam.mode(i).sine) cos_only += std::ldexp(0.5, -i);
    }
    EXPECT_NEAR(got, cos_only, 1e-15);
}

TEST(Distance, MetricAxioms) {
    const TestFunctionFamily fam;
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        const auto a = moments(random_measure(rng), fam);
        const auto b = moments(random_measure(rng), fam);
        const auto c = moments(random_measure(rng), fam);
        EXPECT_EQ(weak_star_distance(a, b), weak_star_distance(b, a));
        EXPECT_EQ(weak_star_distance(a, a), 0.0);
        EXPECT_LE(weak_star_distance(a, c), weak_star_distance(a, b) + weak_star_distance(b, c) + 1e-12);
        EXPECT_LE(weak_star_distance(a, b), 2.0);
        const double x = u(rng);
        const TorusPoint p(x, u(rng)), q(u(rng), u(rng));
        if (torus_distance(p, q) > 1e-9) {
            EXPECT_GT(weak_star_distance(moments(DiscreteMeasure::dirac(p), fam), moments(DiscreteMeasure::dirac(q), fam)),
                      0.0);
        }
    }
}

TEST(Distance, BallsAreConvex) {
    const TestFunctionFamily fam;
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const auto rho = moments(random_measure(rng), fam);
        const auto m1 = random_measure(rng), m2 = random_measure(rng);
        const double eps =
            std::max(weak_star_distance(rho, moments(m1, fam)), weak_star_distance(rho, moments(m2, fam))) + 1e-9;
        for (double s : {0.0, 0.25, u(rng), 0.75, 1.0}) {
            EXPECT_LT(weak_star_distance(rho, moments(m1.mix(s, m2), fam)), eps);
        }
    }
}

TEST(Distance, TruncationConsistency) {
    std::mt19937_64 rng(31);
    for (int k : {5, 12, 33}) {
        const TestFunctionFamily small(k), large(k + 40);
        for (int t = 0; t < 30; ++t) {
            const auto a = random_measure(rng), b = random_measure(rng);
            const double ds = weak_star_distance(moments(a, small), moments(b, small));
            const double dl = weak_star_distance(moments(a, large), moments(b, large));
            EXPECT_LE(std::abs(dl - ds), small.tail_bound() + 1e-15);
        }
    }
}

TEST(Distance, FamilyMismatchThrows) {
    const auto a = moments(DiscreteMeasure::dirac(TorusPoint(0, 0)), TestFunctionFamily(10));
    const auto b = moments(DiscreteMeasure::dirac(TorusPoint(0, 0)), TestFunctionFamily(11));
    EXPECT_THROW(weak_star_distance(a, b), FamilyMismatch);
}

TEST(Pushforward, Examples) {
    const auto cat = HyperbolicToralMap::cat_map();
    const auto d = pushforward(cat, DiscreteMeasure::dirac(TorusPoint(0.5, 0.5)));
    EXPECT_EQ(d.atoms()[0], cat.step(TorusPoint(0.5, 0.5)));
    const auto f = pushforward(cat, DiscreteMeasure::dirac(TorusPoint(0, 0)));
    EXPECT_EQ(f.atoms()[0], TorusPoint(0, 0));

    // f_* sigma_n differs from sigma_n by moving mass 1/n from x to f^n(x).
    const TestFunctionFamily fam;
    const TorusPoint x(0.3, 0.7);
    const int n = 20;
    const auto sigma = empirical_measure(cat, x, n);
    const auto pushed = moments(pushforward(cat, sigma), fam);
    const auto base = moments(sigma, fam);
    TorusPoint fn = x;
    for (int j = 0; j < n; ++j) fn = cat.step(fn);
    const auto px = fam.evaluate(x), pfn = fam.evaluate(fn);
    for (int i = 0; i < fam.size(); ++i) {
        const auto s = static_cast<std::size_t>(i);
        EXPECT_NEAR(pushed[i] - base[i], (pfn[s] - px[s]) / n, 1e-14);
    }
}

TEST(InvarianceDefect, BoundedByTwoOverN) {
    const auto cat = HyperbolicToralMap::cat_map();
    const TestFunctionFamily fam;
    EXPECT_EQ(invariance_defect(cat, TorusPoint(0, 0), 10, fam), 0.0);
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 30; ++t) {
        const double a = u(rng);
        const TorusPoint p(a, u(rng));
        EXPECT_LE(invariance_defect(cat, p, 10, fam), 0.2 + 1e-12);
        EXPECT_LE(invariance_defect(cat, p, 1000, fam), 0.002 + 1e-12);
    }
}

TEST(Accumulator, MatchesMaterializedEmpiricalMeasure) {
    const auto cat = HyperbolicToralMap::cat_map();
    const TestFunctionFamily fam;
    OrbitMomentAccumulator acc(fam);
    TorusPoint x(0.123, 0.456);
    const auto target = lebesgue_moments(fam);
    for (int n = 1; n <= 50; ++n) {
        acc.add(x);
        x = cat.step(x);
        const double direct = weak_star_distance(moments(empirical_measure(cat, TorusPoint(0.123, 0.456), n), fam), target);
        EXPECT_NEAR(acc.distance_to(target), direct, 1e-12);
    }
    EXPECT_EQ(acc.count(), 50u);
    acc.reset();
    EXPECT_EQ(acc.count(), 0u);
}

TEST(MeasureRep, MixtureMomentsAreAffine) {
    const TestFunctionFamily fam;
    const auto d = DiscreteMeasure::dirac(TorusPoint(0.2, 0.9));
    const auto mix = moments(MeasureRep::mixture(0.3, d), fam);
    const auto md = moments(d, fam);
    const auto ml = lebesgue_moments(fam);
    for (int i = 0; i < fam.size(); ++i) EXPECT_NEAR(mix[i], 0.3 * ml[i] + 0.7 * md[i], 1e-15);
}
