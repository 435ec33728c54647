#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toruslab/torus.hpp"

namespace toruslab {

/// Test functions phi_0 == 1 and phi_i = (1 + trig(2 pi k.x)) / 2, weights 2^-i.
///
/// Frequencies k != 0 are enumerated shell by shell (increasing max(|k1|,|k2|)),
/// lexicographically by (k1, k2) inside a shell, cosine before sine.
class TestFunctionFamily {
public:
    struct Mode {
        int k1 = 0;
        int k2 = 0;
        bool sine = false;
        bool constant = false;
    };

    static constexpr int kDefaultSize = 33;
    static constexpr const char* kVersion = "fourier-shell-v1";

    explicit TestFunctionFamily(int size = kDefaultSize);

    int size() const { return static_cast<int>(modes_.size()); }
    const Mode& mode(int i) const { return modes_[static_cast<std::size_t>(i)]; }
    double weight(int i) const { return weights_[static_cast<std::size_t>(i)]; }
    std::span<const double> weights() const { return weights_; }
    int max_shell() const { return max_shell_; }
    std::string version() const { return kVersion; }

    /// 2^(1-K): bound on the contribution of every omitted term.
    double tail_bound() const;

    /// Writes phi_0(p) ... phi_{K-1}(p) into out (size K).
    void evaluate(const TorusPoint& p, std::span<double> out) const;
    std::vector<double> evaluate(const TorusPoint& p) const;

private:
    std::vector<Mode> modes_;
    std::vector<double> weights_;
    int max_shell_ = 0;
};

/// Integrals m_i = int phi_i dmu of one measure against a family.
struct MomentVector {
    std::vector<double> values;

    int size() const { return static_cast<int>(values.size()); }
    double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
    friend bool operator==(const MomentVector&, const MomentVector&) = default;
};

/// Finitely supported probability measure. Weights are validated to sum to 1.
class DiscreteMeasure {
public:
    DiscreteMeasure(std::vector<TorusPoint> atoms, std::vector<double> weights);

    static DiscreteMeasure dirac(const TorusPoint& p) { return DiscreteMeasure({p}, {1.0}); }
    static DiscreteMeasure uniform(std::vector<TorusPoint> atoms);

    const std::vector<TorusPoint>& atoms() const { return atoms_; }
    const std::vector<double>& weights() const { return weights_; }
    std::size_t size() const { return atoms_.size(); }

    /// Merges atoms closer than `tolerance` in torus distance (first occurrence keeps its position).
    DiscreteMeasure coalesced(double tolerance = kCoalesceTolerance) const;

    /// t * this + (1 - t) * other.
    DiscreteMeasure mix(double t, const DiscreteMeasure& other) const;

    static constexpr double kCoalesceTolerance = 1e-12;

private:
    std::vector<TorusPoint> atoms_;
    std::vector<double> weights_;
};

/// lebesgue_weight * Leb + (1 - lebesgue_weight) * discrete.
///
/// Pure Lebesgue has weight 1 and no discrete part; a pure discrete measure
/// has weight 0. Mixtures of both are what the convex-combination checks use.
class MeasureRep {
public:
    static MeasureRep lebesgue() { return MeasureRep(1.0, std::nullopt); }
    static MeasureRep discrete(DiscreteMeasure m) { return MeasureRep(0.0, std::move(m)); }
    /// t * Leb + (1 - t) * m.
    static MeasureRep mixture(double lebesgue_weight, DiscreteMeasure m);

    double lebesgue_weight() const { return lebesgue_weight_; }
    const std::optional<DiscreteMeasure>& discrete_part() const { return discrete_; }
    bool is_lebesgue() const { return lebesgue_weight_ == 1.0; }
    bool is_discrete() const { return lebesgue_weight_ == 0.0; }

private:
    MeasureRep(double w, std::optional<DiscreteMeasure> d) : lebesgue_weight_(w), discrete_(std::move(d)) {}

    double lebesgue_weight_;
    std::optional<DiscreteMeasure> discrete_;
};

/// sigma_n(p): uniform weights on the first n orbit points, coalesced.
DiscreteMeasure empirical_measure(const HyperbolicToralMap& map, const TorusPoint& p, std::size_t n);

MomentVector moments(const DiscreteMeasure& mu, const TestFunctionFamily& family);
MomentVector moments(const MeasureRep& mu, const TestFunctionFamily& family);
MomentVector lebesgue_moments(const TestFunctionFamily& family);

/// sum_i 2^-i |m_i - n_i|. Throws FamilyMismatch when sizes differ.
double weak_star_distance(const MomentVector& m, const MomentVector& n);
double weak_star_distance(const MeasureRep& mu, const MeasureRep& nu, const TestFunctionFamily& family);

DiscreteMeasure pushforward(const HyperbolicToralMap& map, const DiscreteMeasure& mu);

/// dist*(sigma_n(p), f_* sigma_n(p)); never exceeds 2/n.
double invariance_defect(const HyperbolicToralMap& map, const TorusPoint& p, std::size_t n,
                         const TestFunctionFamily& family);

/// Running moment sums along an orbit; lets basin tests evaluate dist*(sigma_n, target)
/// at every n without materializing sigma_n. Accumulation is sequential in orbit order.
class OrbitMomentAccumulator {
public:
    explicit OrbitMomentAccumulator(const TestFunctionFamily& family);

    void add(const TorusPoint& p);
    std::size_t count() const { return count_; }
    double distance_to(const MomentVector& target) const;
    MomentVector moments() const;
    void reset();

private:
    const TestFunctionFamily* family_;
    std::vector<double> sums_;
    std::vector<double> scratch_;
    std::size_t count_ = 0;
};

}  // namespace toruslab
