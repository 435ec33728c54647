#include "toruslab/weak_star.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace toruslab {

TestFunctionFamily::TestFunctionFamily(int size) {
    if (size < 1) throw Error("test function family needs K >= 1");
    modes_.reserve(static_cast<std::size_t>(size));
    modes_.push_back(Mode{0, 0, false, true});
    for (int shell = 1; static_cast<int>(modes_.size()) < size; ++shell) {
        max_shell_ = shell;
        // (k1, k2) in lexicographic order over the square ring max(|k1|,|k2|) == shell.
        for (int k1 = -shell; k1 <= shell && static_cast<int>(modes_.size()) < size; ++k1) {
            for (int k2 = -shell; k2 <= shell && static_cast<int>(modes_.size()) < size; ++k2) {
                if (std::max(std::abs(k1), std::abs(k2)) != shell) continue;
                modes_.push_back(Mode{k1, k2, false, false});
                if (static_cast<int>(modes_.size()) < size) modes_.push_back(Mode{k1, k2, true, false});
            }
        }
    }
    weights_.resize(modes_.size());
    double w = 1.0;
    for (auto& x : weights_) {
        x = w;
        w *= 0.5;
    }
}

double TestFunctionFamily::tail_bound() const { return std::ldexp(1.0, 1 - size()); }

void TestFunctionFamily::evaluate(const TorusPoint& p, std::span<double> out) const {
    // e^{2 pi i j x} for j in [-r, r] by repeated multiplication.
    constexpr int kMaxShellOnStack = 16;
    const int r = max_shell_;
    const int span = 2 * r + 1;
    double re1_buf[2 * kMaxShellOnStack + 1], im1_buf[2 * kMaxShellOnStack + 1];
    double re2_buf[2 * kMaxShellOnStack + 1], im2_buf[2 * kMaxShellOnStack + 1];
    std::vector<double> heap;
    double *re1 = re1_buf, *im1 = im1_buf, *re2 = re2_buf, *im2 = im2_buf;
    if (r > kMaxShellOnStack) {
        heap.resize(static_cast<std::size_t>(4 * span));
        re1 = heap.data();
        im1 = re1 + span;
        re2 = im1 + span;
        im2 = re2 + span;
    }
    auto fill = [r](double x, double* re, double* im) {
        const double c = std::cos(kTwoPi * x);
        const double s = std::sin(kTwoPi * x);
        re[r] = 1.0;
        im[r] = 0.0;
        for (int j = 1; j <= r; ++j) {
            const double pr = re[r + j - 1];
            const double pi = im[r + j - 1];
            re[r + j] = pr * c - pi * s;
            im[r + j] = pr * s + pi * c;
            re[r - j] = re[r + j];
            im[r - j] = -im[r + j];
        }
    };
    fill(p.x1(), re1, im1);
    fill(p.x2(), re2, im2);

    const std::size_t k = modes_.size();
    for (std::size_t i = 0; i < k; ++i) {
        const Mode& m = modes_[i];
        if (m.constant) {
            out[i] = 1.0;
            continue;
        }
        const double ar = re1[r + m.k1], ai = im1[r + m.k1];
        const double br = re2[r + m.k2], bi = im2[r + m.k2];
        const double trig = m.sine ? (ar * bi + ai * br) : (ar * br - ai * bi);
        out[i] = 0.5 * (1.0 + trig);
    }
}

std::vector<double> TestFunctionFamily::evaluate(const TorusPoint& p) const {
    std::vector<double> out(modes_.size());
    evaluate(p, out);
    return out;
}

DiscreteMeasure::DiscreteMeasure(std::vector<TorusPoint> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (atoms_.empty()) throw Error("discrete measure needs at least one atom");
    if (atoms_.size() != weights_.size()) throw Error("atom and weight counts differ");
    double total = 0.0;
    for (double w : weights_) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw Error("discrete measure weights must be >= 0");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream os;
        os << "discrete measure weights sum to " << total << ", expected 1";
        throw Error(os.str());
    }
}

DiscreteMeasure DiscreteMeasure::uniform(std::vector<TorusPoint> atoms) {
    const std::size_t n = atoms.size();
    if (n == 0) throw Error("discrete measure needs at least one atom");
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    // Fold the rounding remainder into the last atom so the sum is 1 to ~1 ulp.
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) partial += w[i];
    w.back() = 1.0 - partial;
    return DiscreteMeasure(std::move(atoms), std::move(w));
}

namespace {

struct CellKey {
    std::int64_t a;
    std::int64_t b;
    bool operator==(const CellKey&) const = default;
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept {
        std::uint64_t h = static_cast<std::uint64_t>(k.a) * 0x9E3779B97F4A7C15ULL;
        h ^= static_cast<std::uint64_t>(k.b) + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

DiscreteMeasure DiscreteMeasure::coalesced(double tolerance) const {
    const auto cells = static_cast<std::int64_t>(std::floor(1.0 / tolerance)) + 1;
    auto cell_of = [&](double v) {
        return std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(v / tolerance)), cells - 1);
    };
    auto wrap_cell = [&](std::int64_t c) { return ((c % cells) + cells) % cells; };

    std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> index;
    std::vector<TorusPoint> atoms;
    std::vector<double> weights;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        const TorusPoint& p = atoms_[i];
        const std::int64_t ca = cell_of(p.x1());
        const std::int64_t cb = cell_of(p.x2());
        // The last cell is narrower than the rest, so look two cells out near the seam.
        const int ra = (ca < 2 || ca > cells - 3) ? 2 : 1;
        const int rb = (cb < 2 || cb > cells - 3) ? 2 : 1;
        std::optional<std::size_t> hit;
        for (int da = -ra; da <= ra && !hit; ++da) {
            for (int db = -rb; db <= rb && !hit; ++db) {
                auto it = index.find(CellKey{wrap_cell(ca + da), wrap_cell(cb + db)});
                if (it == index.end()) continue;
                for (std::size_t j : it->second) {
                    if (torus_distance(atoms[j], p) < tolerance) {
                        hit = j;
                        break;
                    }
                }
            }
        }
        if (hit) {
            weights[*hit] += weights_[i];
        } else {
            index[CellKey{ca, cb}].push_back(atoms.size());
            atoms.push_back(p);
            weights.push_back(weights_[i]);
        }
    }
    return DiscreteMeasure(std::move(atoms), std::move(weights));
}

DiscreteMeasure DiscreteMeasure::mix(double t, const DiscreteMeasure& other) const {
    if (!(t >= 0.0 && t <= 1.0)) throw Error("mixture weight must lie in [0,1]");
    std::vector<TorusPoint> atoms = atoms_;
    std::vector<double> weights;
    weights.reserve(atoms_.size() + other.size());
    for (double w : weights_) weights.push_back(t * w);
    atoms.insert(atoms.end(), other.atoms_.begin(), other.atoms_.end());
    for (double w : other.weights_) weights.push_back((1.0 - t) * w);
    return DiscreteMeasure(std::move(atoms), std::move(weights));
}

MeasureRep MeasureRep::mixture(double lebesgue_weight, DiscreteMeasure m) {
    if (!(lebesgue_weight >= 0.0 && lebesgue_weight <= 1.0)) {
        throw Error("Lebesgue weight must lie in [0,1]");
    }
    if (lebesgue_weight == 1.0) return lebesgue();
    return MeasureRep(lebesgue_weight, std::move(m));
}

DiscreteMeasure empirical_measure(const HyperbolicToralMap& map, const TorusPoint& p, std::size_t n) {
    if (n < 1) throw Error("empirical measure needs n >= 1");
    return DiscreteMeasure::uniform(map.orbit(p, n)).coalesced();
}

MomentVector moments(const DiscreteMeasure& mu, const TestFunctionFamily& family) {
    const auto k = static_cast<std::size_t>(family.size());
    MomentVector out{std::vector<double>(k, 0.0)};
    std::vector<double> phi(k);
    for (std::size_t a = 0; a < mu.size(); ++a) {
        family.evaluate(mu.atoms()[a], phi);
        const double w = mu.weights()[a];
        for (std::size_t i = 0; i < k; ++i) out.values[i] += w * phi[i];
    }
    return out;
}

MomentVector lebesgue_moments(const TestFunctionFamily& family) {
    MomentVector out{std::vector<double>(static_cast<std::size_t>(family.size()), 0.5)};
    out.values[0] = 1.0;
    return out;
}

MomentVector moments(const MeasureRep& mu, const TestFunctionFamily& family) {
    if (mu.is_lebesgue()) return lebesgue_moments(family);
    MomentVector out = moments(*mu.discrete_part(), family);
    const double t = mu.lebesgue_weight();
    if (t > 0.0) {
        const MomentVector leb = lebesgue_moments(family);
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            out.values[i] = t * leb.values[i] + (1.0 - t) * out.values[i];
        }
    }
    return out;
}

double weak_star_distance(const MomentVector& m, const MomentVector& n) {
    if (m.size() != n.size()) {
        std::ostringstream os;
        os << "moment vectors from different families (K=" << m.size() << " vs K=" << n.size() << ")";
        throw FamilyMismatch(os.str());
    }
    double total = 0.0;
    double w = 1.0;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        total += w * std::abs(m.values[i] - n.values[i]);
        w *= 0.5;
    }
    return total;
}

double weak_star_distance(const MeasureRep& mu, const MeasureRep& nu, const TestFunctionFamily& family) {
    return weak_star_distance(moments(mu, family), moments(nu, family));
}

DiscreteMeasure pushforward(const HyperbolicToralMap& map, const DiscreteMeasure& mu) {
    std::vector<TorusPoint> atoms;
    atoms.reserve(mu.size());
    for (const auto& a : mu.atoms()) atoms.push_back(map.step(a));
    return DiscreteMeasure(std::move(atoms), mu.weights());
}

double invariance_defect(const HyperbolicToralMap& map, const TorusPoint& p, std::size_t n,
                         const TestFunctionFamily& family) {
    const DiscreteMeasure sigma = empirical_measure(map, p, n);
    return weak_star_distance(moments(sigma, family), moments(pushforward(map, sigma), family));
}

OrbitMomentAccumulator::OrbitMomentAccumulator(const TestFunctionFamily& family)
    : family_(&family),
      sums_(static_cast<std::size_t>(family.size()), 0.0),
      scratch_(static_cast<std::size_t>(family.size()), 0.0) {}

void OrbitMomentAccumulator::add(const TorusPoint& p) {
    family_->evaluate(p, scratch_);
    for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i] += scratch_[i];
    ++count_;
}

double OrbitMomentAccumulator::distance_to(const MomentVector& target) const {
    if (target.size() != family_->size()) throw FamilyMismatch("target moments use a different family");
    const double inv = 1.0 / static_cast<double>(count_);
    double total = 0.0;
    double w = 1.0;
    for (std::size_t i = 0; i < sums_.size(); ++i) {
        total += w * std::abs(sums_[i] * inv - target.values[i]);
        w *= 0.5;
    }
    return total;
}

MomentVector OrbitMomentAccumulator::moments() const {
    MomentVector out{sums_};
    const double inv = 1.0 / static_cast<double>(count_);
    for (auto& v : out.values) v *= inv;
    return out;
}

void OrbitMomentAccumulator::reset() {
    std::fill(sums_.begin(), sums_.end(), 0.0);
    count_ = 0;
}

}  // namespace toruslab
