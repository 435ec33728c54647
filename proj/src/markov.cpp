#include "toruslab/markov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "toruslab/parallel.hpp"

namespace toruslab {

namespace {

constexpr double kOverlapTolerance = 1e-9;
constexpr int kLatticeReach = 4;
constexpr double kFixedPointScale = 4503599627370496.0;  // 2^52

Vec2 lattice_in_frame(const HyperbolicSplitting& frame, int m1, int m2) {
    return frame.to_eigen(Vec2{static_cast<double>(m1), static_cast<double>(m2)});
}

EigenRect shifted(const EigenRect& r, Vec2 d) {
    return {r.u_lo + d.x, r.u_hi + d.x, r.s_lo + d.y, r.s_hi + d.y};
}

/// Image under the diagonal map (u, s) -> (su * u, ss * s).
EigenRect scaled(const EigenRect& r, double su, double ss) {
    const double u1 = su * r.u_lo, u2 = su * r.u_hi;
    const double s1 = ss * r.s_lo, s2 = ss * r.s_hi;
    return {std::min(u1, u2), std::max(u1, u2), std::min(s1, s2), std::max(s1, s2)};
}

bool overlaps(const EigenRect& a, const EigenRect& b, EigenRect* out = nullptr) {
    const EigenRect r{std::max(a.u_lo, b.u_lo), std::min(a.u_hi, b.u_hi), std::max(a.s_lo, b.s_lo),
                      std::min(a.s_hi, b.s_hi)};
    if (r.width() > kOverlapTolerance && r.height() > kOverlapTolerance) {
        if (out) *out = r;
        return true;
    }
    return false;
}

/// Number of lattice translates of f(R_i) meeting R_j in a set of positive area.
std::vector<std::vector<int>> multiplicities(const HyperbolicSplitting& frame, const std::vector<EigenRect>& rects,
                                             double lambda_u, double lambda_s) {
    const std::size_t k = rects.size();
    std::vector<std::vector<int>> out(k, std::vector<int>(k, 0));
    for (std::size_t i = 0; i < k; ++i) {
        const EigenRect image = scaled(rects[i], lambda_u, lambda_s);
        for (std::size_t j = 0; j < k; ++j) {
            for (int m1 = -kLatticeReach; m1 <= kLatticeReach; ++m1) {
                for (int m2 = -kLatticeReach; m2 <= kLatticeReach; ++m2) {
                    if (overlaps(shifted(image, lattice_in_frame(frame, m1, m2)), rects[j])) ++out[i][j];
                }
            }
        }
    }
    return out;
}

Polygon clip_to_unit_square(const std::vector<Vec2>& poly) {
    std::vector<Vec2> cur = poly;
    // Half-planes x >= 0, x <= 1, y >= 0, y <= 1 as (axis, bound, keep_greater).
    const struct {
        int axis;
        double bound;
        bool greater;
    } planes[] = {{0, 0.0, true}, {0, 1.0, false}, {1, 0.0, true}, {1, 1.0, false}};
    for (const auto& pl : planes) {
        std::vector<Vec2> next;
        auto coord = [&](Vec2 v) { return pl.axis == 0 ? v.x : v.y; };
        auto inside = [&](Vec2 v) { return pl.greater ? coord(v) >= pl.bound : coord(v) <= pl.bound; };
        for (std::size_t i = 0; i < cur.size(); ++i) {
            const Vec2 a = cur[i];
            const Vec2 b = cur[(i + 1) % cur.size()];
            const bool ia = inside(a), ib = inside(b);
            if (ia) next.push_back(a);
            if (ia != ib) {
                const double t = (pl.bound - coord(a)) / (coord(b) - coord(a));
                Vec2 p = a + t * (b - a);
                if (pl.axis == 0) p.x = pl.bound; else p.y = pl.bound;
                next.push_back(p);
            }
        }
        cur = std::move(next);
        if (cur.empty()) break;
    }
    return Polygon{std::move(cur)};
}

double distance_to_segment(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

struct Segment {
    Vec2 a, b;
    double length() const { return (b - a).norm(); }
};

double torus_distance_to_segments(const TorusPoint& q, const std::vector<Segment>& segments) {
    double best = std::numeric_limits<double>::infinity();
    for (int m1 = -2; m1 <= 2; ++m1) {
        for (int m2 = -2; m2 <= 2; ++m2) {
            const Vec2 p = q.lift() + Vec2{static_cast<double>(m1), static_cast<double>(m2)};
            for (const auto& s : segments) best = std::min(best, distance_to_segment(p, s.a, s.b));
        }
    }
    return best;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double uniform01(std::uint64_t& state) {
    state = splitmix64(state);
    return static_cast<double>(state >> 11) * 0x1.0p-53;
}

double diagonal(const HyperbolicSplitting& frame, double w, double h) {
    return std::max((w * frame.unstable + h * frame.stable).norm(), (w * frame.unstable - h * frame.stable).norm());
}

}  // namespace

double Polygon::area() const {
    double a = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const Vec2 p = vertices[i];
        const Vec2 q = vertices[(i + 1) % vertices.size()];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * std::abs(a);
}

MarkovPartition::MarkovPartition(HyperbolicSplitting frame, std::vector<EigenRect> rects,
                                 std::vector<std::vector<int>> transitions)
    : frame_(frame), transitions_(std::move(transitions)) {
    double max_w = 0.0, max_h = 0.0;
    for (const auto& r : rects) {
        PartitionPiece piece;
        piece.rect = r;
        piece.corners = {frame_.from_eigen({r.u_lo, r.s_lo}), frame_.from_eigen({r.u_hi, r.s_lo}),
                         frame_.from_eigen({r.u_hi, r.s_hi}), frame_.from_eigen({r.u_lo, r.s_hi})};
        piece.area = Polygon{piece.corners}.area();
        piece.diameter = diagonal(frame_, r.width(), r.height());
        piece.centroid = TorusPoint(frame_.from_eigen({0.5 * (r.u_lo + r.u_hi), 0.5 * (r.s_lo + r.s_hi)}));
        for (int m1 = -kLatticeReach; m1 <= kLatticeReach; ++m1) {
            for (int m2 = -kLatticeReach; m2 <= kLatticeReach; ++m2) {
                std::vector<Vec2> moved;
                for (const Vec2& c : piece.corners) moved.push_back(c - Vec2{double(m1), double(m2)});
                Polygon clipped = clip_to_unit_square(moved);
                if (clipped.vertices.size() >= 3 && clipped.area() > 1e-14) {
                    piece.polygons.push_back(std::move(clipped));
                    piece.translates.push_back({m1, m2});
                }
            }
        }
        max_diameter_ = std::max(max_diameter_, piece.diameter);
        max_w = std::max(max_w, r.width());
        max_h = std::max(max_h, r.height());
        pieces_.push_back(std::move(piece));
    }
    refined_diameter_ = diagonal(frame_, max_w / std::abs(frame_.lambda_unstable),
                                 max_h * std::abs(frame_.lambda_stable));
}

std::vector<int> MarkovPartition::containing(const TorusPoint& p, double slack) const {
    std::vector<int> out;
    const Vec2 e = frame_.to_eigen(p.lift());
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        const auto& piece = pieces_[i];
        for (const auto& m : piece.translates) {
            const Vec2 shift = lattice_in_frame(frame_, m[0], m[1]);
            const double u = e.x + shift.x, s = e.y + shift.y;
            if (u >= piece.rect.u_lo - slack && u <= piece.rect.u_hi + slack && s >= piece.rect.s_lo - slack &&
                s <= piece.rect.s_hi + slack) {
                out.push_back(static_cast<int>(i));
                break;
            }
        }
    }
    return out;
}

int MarkovPartition::locate(const TorusPoint& p) const {
    const Vec2 e = frame_.to_eigen(p.lift());
    const double slack = kBoundaryTolerance;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        const auto& piece = pieces_[i];
        for (const auto& m : piece.translates) {
            const Vec2 shift = lattice_in_frame(frame_, m[0], m[1]);
            const double u = e.x + shift.x, s = e.y + shift.y;
            if (u >= piece.rect.u_lo - slack && u <= piece.rect.u_hi + slack && s >= piece.rect.s_lo - slack &&
                s <= piece.rect.s_hi + slack) {
                return static_cast<int>(i);
            }
        }
    }
    std::ostringstream os;
    os << "no partition piece contains (" << p.x1() << ", " << p.x2() << ")";
    throw LocationFailure(os.str());
}

double spectral_radius(const std::vector<std::vector<int>>& matrix) {
    const std::size_t k = matrix.size();
    if (k == 0) return 0.0;
    std::vector<long double> v(k, 1.0L), w(k);
    long double rho = 0.0L;
    for (int iter = 0; iter < 2000; ++iter) {
        long double norm = 0.0L;
        for (std::size_t i = 0; i < k; ++i) {
            long double s = 0.0L;
            for (std::size_t j = 0; j < k; ++j) s += matrix[i][j] * v[j];
            w[i] = s;
            norm = std::max(norm, std::abs(s));
        }
        if (norm == 0.0L) return 0.0;
        long double prev = 0.0L;
        for (std::size_t i = 0; i < k; ++i) prev = std::max(prev, std::abs(v[i]));
        rho = norm / prev;
        for (std::size_t i = 0; i < k; ++i) v[i] = w[i] / norm;
    }
    return static_cast<double>(rho);
}

MarkovValidation validate_markov(const MarkovPartition& partition, const HyperbolicToralMap& map,
                                 std::size_t boundary_samples, std::uint64_t seed) {
    MarkovValidation v;
    const auto& pieces = partition.pieces();
    const HyperbolicSplitting& frame = partition.frame();
    for (const auto& p : pieces) v.area_sum += p.area;
    if (!(std::abs(v.area_sum - 1.0) <= 1e-9)) {
        v.failures.push_back("piece areas sum to " + std::to_string(v.area_sum));
    }

    std::uint64_t state = seed;
    v.tiling_samples = boundary_samples;
    for (std::size_t t = 0; t < v.tiling_samples; ++t) {
        const double a = uniform01(state);
        const TorusPoint p(a, uniform01(state));
        const auto closed = partition.containing(p, MarkovPartition::kBoundaryTolerance);
        const auto open = partition.containing(p, -MarkovPartition::kBoundaryTolerance);
        if (closed.empty() || open.size() > 1) ++v.tiling_failures;
    }
    if (v.tiling_failures > 0) {
        v.failures.push_back(std::to_string(v.tiling_failures) + " sample points not covered exactly once");
    }

    std::vector<Segment> stable_sides, unstable_sides;
    for (const auto& p : pieces) {
        const auto& c = p.corners;  // (ulo,slo) (uhi,slo) (uhi,shi) (ulo,shi)
        stable_sides.push_back({c[0], c[3]});
        stable_sides.push_back({c[1], c[2]});
        unstable_sides.push_back({c[0], c[1]});
        unstable_sides.push_back({c[3], c[2]});
    }
    auto sample_on = [&](const std::vector<Segment>& sides) {
        double total = 0.0;
        for (const auto& s : sides) total += s.length();
        double pick = uniform01(state) * total;
        for (const auto& s : sides) {
            if (pick <= s.length()) {
                const double t = uniform01(state);
                return TorusPoint(s.a + t * (s.b - s.a));
            }
            pick -= s.length();
        }
        return TorusPoint(sides.back().b);
    };
    v.boundary_samples = boundary_samples;
    for (std::size_t t = 0; t < boundary_samples; ++t) {
        const TorusPoint ps = sample_on(stable_sides);
        v.stable_boundary_error = std::max(v.stable_boundary_error,
                                           torus_distance_to_segments(map.step(ps), stable_sides));
        const TorusPoint pu = sample_on(unstable_sides);
        v.unstable_boundary_error = std::max(v.unstable_boundary_error,
                                             torus_distance_to_segments(map.step_inverse(pu), unstable_sides));
    }
    if (!(v.stable_boundary_error <= 1e-9)) {
        v.failures.push_back("stable boundary not forward invariant (error " +
                             std::to_string(v.stable_boundary_error) + ")");
    }
    if (!(v.unstable_boundary_error <= 1e-9)) {
        v.failures.push_back("unstable boundary not backward invariant (error " +
                             std::to_string(v.unstable_boundary_error) + ")");
    }

    std::vector<EigenRect> rects;
    for (const auto& p : pieces) rects.push_back(p.rect);
    const auto mult = multiplicities(frame, rects, frame.lambda_unstable, frame.lambda_stable);
    for (std::size_t i = 0; i < mult.size(); ++i) {
        for (std::size_t j = 0; j < mult.size(); ++j) {
            v.max_transition_multiplicity = std::max(v.max_transition_multiplicity, mult[i][j]);
            if ((mult[i][j] > 0 ? 1 : 0) != partition.transitions()[i][j]) {
                v.failures.push_back("stored transition matrix disagrees with geometry");
            }
        }
    }
    if (v.max_transition_multiplicity > 1) {
        v.failures.push_back("some f(R_i) meets R_j in more than one component");
    }
    v.spectral_radius = spectral_radius(partition.transitions());
    v.expected_spectral_radius = std::abs(splitting_of(map.matrix()).lambda_unstable);
    if (!(std::abs(v.spectral_radius - v.expected_spectral_radius) <= 1e-6)) {
        v.failures.push_back("transition spectral radius " + std::to_string(v.spectral_radius) +
                             " differs from the unstable eigenvalue");
    }
    v.refined_diameter = partition.refined_diameter();
    if (!(v.refined_diameter < 0.5)) {
        v.failures.push_back("two-sided refinement diameter " + std::to_string(v.refined_diameter) +
                             " is not below 0.5");
    }
    v.pass = v.failures.empty();
    return v;
}

MarkovPartition cat_map_partition() {
    const IntMatrix2 cat{2, 1, 1, 1};
    const HyperbolicSplitting frame = splitting_of(cat);
    const double golden = 0.5 * (1.0 + std::sqrt(5.0));
    const double scale = std::sqrt(golden * golden + 1.0);
    const double a = golden / scale;  // side of the large square
    const double b = 1.0 / scale;     // side of the small square; a^2 + b^2 = 1

    // Two-square partition of the square root [[1,1],[1,0]], with the origin at a
    // corner of the small square. Written for the stable axis (-1, golden); flip if
    // the frame's stable vector points the other way.
    const double flip = frame.stable.dot(Vec2{-1.0, golden}) > 0.0 ? 1.0 : -1.0;
    auto square = [&](double u_lo, double u_hi, double s_lo, double s_hi) {
        return flip > 0.0 ? EigenRect{u_lo, u_hi, s_lo, s_hi} : EigenRect{u_lo, u_hi, -s_hi, -s_lo};
    };
    const std::vector<EigenRect> base = {square(-a, 0.0, b - a, b), square(0.0, b, 0.0, b)};

    // Refine by the root: components of R_i ∩ g^-1(R_j), g = [[1,1],[1,0]],
    // which scales the unstable axis by golden and the stable axis by -1/golden.
    std::vector<EigenRect> rects;
    for (const auto& ri : base) {
        for (const auto& rj : base) {
            const EigenRect pre = scaled(rj, 1.0 / golden, -golden);
            for (int m1 = -kLatticeReach; m1 <= kLatticeReach; ++m1) {
                for (int m2 = -kLatticeReach; m2 <= kLatticeReach; ++m2) {
                    EigenRect piece;
                    if (overlaps(shifted(pre, lattice_in_frame(frame, m1, m2)), ri, &piece)) rects.push_back(piece);
                }
            }
        }
    }
    if (rects.size() != 3) {
        throw ConstructionInvalid("expected 3 refined rectangles, found " + std::to_string(rects.size()));
    }
    auto mult = multiplicities(frame, rects, frame.lambda_unstable, frame.lambda_stable);
    for (auto& row : mult) {
        for (auto& m : row) m = m > 0 ? 1 : 0;
    }
    MarkovPartition partition(frame, std::move(rects), std::move(mult));
    const MarkovValidation check = validate_markov(partition, HyperbolicToralMap::cat_map());
    if (!check.pass) {
        std::string msg = "Markov partition self-check failed:";
        for (const auto& f : check.failures) msg += " " + f + ";";
        throw ConstructionInvalid(msg);
    }
    return partition;
}

long double admissible_word_count(const MarkovPartition& partition, int n) {
    if (n < 1) throw Error("word length must be >= 1");
    const auto& t = partition.transitions();
    const std::size_t k = t.size();
    std::vector<long double> v(k, 1.0L), w(k);
    for (int step = 1; step < n; ++step) {
        for (std::size_t i = 0; i < k; ++i) {
            long double s = 0.0L;
            for (std::size_t j = 0; j < k; ++j) s += t[i][j] * v[j];
            w[i] = s;
        }
        v.swap(w);
    }
    return std::accumulate(v.begin(), v.end(), 0.0L);
}

std::string Itinerary::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i) out += '.';
        out += std::to_string(symbols[i]);
    }
    return out;
}

Itinerary itinerary(const HyperbolicToralMap& map, const MarkovPartition& partition, const TorusPoint& p, int n) {
    if (n < 1) throw Error("itinerary length must be >= 1");
    Itinerary it;
    it.symbols.reserve(static_cast<std::size_t>(n));
    TorusPoint x = p;
    for (int j = 0; j < n; ++j) {
        it.symbols.push_back(partition.locate(x));
        if (j + 1 < n) x = map.step(x);
    }
    return it;
}

int max_itinerary_depth(int alphabet) {
    if (alphabet < 2) return 64;
    int n = 0;
    unsigned __int128 p = 1;
    while (p * static_cast<unsigned>(alphabet) <= std::numeric_limits<std::uint64_t>::max()) {
        p *= static_cast<unsigned>(alphabet);
        ++n;
    }
    return n;
}

CylinderTable::CylinderTable(int n, int alphabet, std::vector<std::pair<std::uint64_t, std::uint64_t>> entries,
                             std::uint64_t samples, bool exact)
    : n_(n), alphabet_(alphabet), entries_(std::move(entries)), samples_(samples), exact_(exact) {
    for (const auto& [key, count] : entries_) total_ += count;
}

Itinerary CylinderTable::decode(std::uint64_t key) const {
    Itinerary it;
    it.symbols.assign(static_cast<std::size_t>(n_), 0);
    for (int j = n_ - 1; j >= 0; --j) {
        it.symbols[static_cast<std::size_t>(j)] = static_cast<int>(key % static_cast<std::uint64_t>(alphabet_));
        key /= static_cast<std::uint64_t>(alphabet_);
    }
    return it;
}

std::uint64_t CylinderTable::encode(const Itinerary& it) const {
    std::uint64_t key = 0;
    for (int s : it.symbols) key = key * static_cast<std::uint64_t>(alphabet_) + static_cast<std::uint64_t>(s);
    return key;
}

std::uint64_t CylinderTable::count(const Itinerary& it) const {
    if (static_cast<int>(it.symbols.size()) != n_) return 0;
    const std::uint64_t key = encode(it);
    auto pos = std::lower_bound(entries_.begin(), entries_.end(), key,
                                [](const auto& e, std::uint64_t k) { return e.first < k; });
    return (pos != entries_.end() && pos->first == key) ? pos->second : 0;
}

CylinderTable CylinderTable::marginalized(int m) const {
    if (m < 1 || m > n_) throw Error("marginal depth must lie in [1, n]");
    std::uint64_t divisor = 1;
    for (int j = m; j < n_; ++j) divisor *= static_cast<std::uint64_t>(alphabet_);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    for (const auto& [key, count] : entries_) {
        const std::uint64_t k = key / divisor;
        if (!out.empty() && out.back().first == k) {
            out.back().second += count;
        } else {
            out.emplace_back(k, count);
        }
    }
    return CylinderTable(m, alphabet_, std::move(out), samples_, exact_);
}

namespace {

using Entries = std::vector<std::pair<std::uint64_t, std::uint64_t>>;

struct RawTable {
    Entries entries;
    std::uint64_t samples = 0;
    bool exact = false;
};

Entries count_keys(std::vector<std::uint64_t>& keys) {
    std::sort(keys.begin(), keys.end());
    Entries out;
    for (std::uint64_t k : keys) {
        if (!out.empty() && out.back().first == k) {
            ++out.back().second;
        } else {
            out.emplace_back(k, 1);
        }
    }
    return out;
}

Entries aggregate(Entries pairs) {
    std::sort(pairs.begin(), pairs.end());
    Entries out;
    for (const auto& [k, c] : pairs) {
        if (!out.empty() && out.back().first == k) {
            out.back().second += c;
        } else {
            out.emplace_back(k, c);
        }
    }
    return out;
}

std::uint64_t itinerary_key(const HyperbolicToralMap& map, const MarkovPartition& partition, TorusPoint x, int n) {
    const auto k = static_cast<std::uint64_t>(partition.alphabet_size());
    std::uint64_t key = 0;
    for (int j = 0; j < n; ++j) {
        key = key * k + static_cast<std::uint64_t>(partition.locate(x));
        if (j + 1 < n) x = map.step(x);
    }
    return key;
}

RawTable table_from(const HyperbolicToralMap& map, const MarkovPartition& partition, const OrbitSource& src, int n,
                    int) {
    if (src.length < 1) throw Error("orbit source needs length >= 1");
    const auto k = static_cast<std::uint64_t>(partition.alphabet_size());
    std::uint64_t top = 1;
    for (int j = 1; j < n; ++j) top *= k;
    std::vector<std::uint64_t> keys;
    keys.reserve(src.length);
    TorusPoint x = src.start;
    std::uint64_t key = 0;
    for (int j = 0; j < n; ++j) {
        key = key * k + static_cast<std::uint64_t>(partition.locate(x));
        x = map.step(x);
    }
    keys.push_back(key);
    for (std::size_t j = 1; j < src.length; ++j) {
        key = (key % top) * k + static_cast<std::uint64_t>(partition.locate(x));
        x = map.step(x);
        keys.push_back(key);
    }
    return {count_keys(keys), src.length, false};
}

RawTable table_from(const HyperbolicToralMap& map, const MarkovPartition& partition, const SampleGrid& grid, int n,
                    int threads) {
    std::vector<std::uint64_t> keys(grid.size());
    parallel_chunks(keys.size(), std::min<std::size_t>(keys.size(), 1024), threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i) keys[i] = itinerary_key(map, partition, grid.point(i), n);
                    });
    return {count_keys(keys), grid.size(), false};
}

RawTable table_from(const HyperbolicToralMap& map, const MarkovPartition& partition, const DiscreteMeasure& mu, int n,
                    int) {
    Entries pairs;
    pairs.reserve(mu.size());
    for (std::size_t a = 0; a < mu.size(); ++a) {
        const auto mass = static_cast<std::uint64_t>(std::llround(mu.weights()[a] * kFixedPointScale));
        if (mass == 0) continue;
        pairs.emplace_back(itinerary_key(map, partition, mu.atoms()[a], n), mass);
    }
    return {aggregate(std::move(pairs)), 0, true};
}

RawTable table_from(const HyperbolicToralMap& map, const MarkovPartition& partition, const MixtureSource& mix, int n,
                    int threads) {
    if (mix.components.empty()) throw Error("mixture source needs components");
    double wsum = 0.0;
    for (const auto& [w, src] : mix.components) {
        if (!(w >= 0.0)) throw Error("mixture weights must be >= 0");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-12) throw Error("mixture weights must sum to 1");
    Entries pairs;
    RawTable out;
    out.exact = true;
    for (const auto& [w, src] : mix.components) {
        const RawTable part = std::visit([&](const auto& s) { return table_from(map, partition, s, n, threads); }, src);
        std::uint64_t total = 0;
        for (const auto& e : part.entries) total += e.second;
        for (const auto& [key, count] : part.entries) {
            const long double mass = static_cast<long double>(w) * kFixedPointScale * count / total;
            const auto fixed = static_cast<std::uint64_t>(std::llround(mass));
            if (fixed > 0) pairs.emplace_back(key, fixed);
        }
        out.samples += part.samples;
        out.exact = out.exact && part.exact;
    }
    out.entries = aggregate(std::move(pairs));
    return out;
}

}  // namespace

CylinderTable cylinder_frequencies(const HyperbolicToralMap& map, const MarkovPartition& partition,
                                   const CylinderSource& source, int n, int threads) {
    if (n < 1) throw Error("cylinder depth must be >= 1");
    if (n > max_itinerary_depth(partition.alphabet_size())) throw Error("cylinder depth exceeds 64-bit key range");
    RawTable raw = std::visit([&](const auto& s) { return table_from(map, partition, s, n, threads); }, source);
    return CylinderTable(n, partition.alphabet_size(), std::move(raw.entries), raw.samples, raw.exact);
}

double partition_entropy(const CylinderTable& table) {
    if (table.total() == 0) throw Error("entropy of an empty cylinder table");
    const long double total = static_cast<long double>(table.total());
    long double acc = 0.0L;
    for (const auto& [key, count] : table.entries()) {
        if (count == 0) continue;
        const long double c = static_cast<long double>(count);
        acc += c * std::log(c);
    }
    return static_cast<double>(std::log(total) - acc / total);
}

EntropyEstimate entropy_rate_estimate(const HyperbolicToralMap& map, const MarkovPartition& partition,
                                      const CylinderSource& source, std::span<const int> n_values, int threads) {
    if (n_values.empty()) throw Error("entropy estimate needs depths");
    for (std::size_t i = 1; i < n_values.size(); ++i) {
        if (n_values[i] <= n_values[i - 1]) throw Error("entropy depths must be increasing");
    }
    EntropyEstimate est;
    est.non_exact_partition = !(map.is_linear() && map.matrix() == IntMatrix2{2, 1, 1, 1});
    if (est.non_exact_partition) {
        est.warnings.push_back("partition built for the linear cat map; not Markov for this map");
    }
    const CylinderTable full = cylinder_frequencies(map, partition, source, n_values.back(), threads);
    for (int n : n_values) {
        const CylinderTable table = n == full.depth() ? full : full.marginalized(n);
        EntropyLevel level;
        level.n = n;
        level.entropy = partition_entropy(table);
        level.rate = level.entropy / n;
        level.observed = table.observed();
        level.admissible = admissible_word_count(partition, n);
        level.adequate = table.exact() ||
                         static_cast<long double>(table.samples()) >= kSamplesPerCylinder * level.admissible;
        if (!level.adequate) {
            std::ostringstream os;
            os << "depth " << n << ": " << table.samples() << " samples for " << static_cast<double>(level.admissible)
               << " admissible cylinders";
            est.warnings.push_back(os.str());
        }
        est.levels.push_back(level);
    }
    bool found = false;
    for (const auto& level : est.levels) {
        if (level.adequate) {
            est.rate = level.rate;
            est.depth = level.n;
            found = true;
        }
    }
    if (!found) throw InsufficientSamples("no depth has enough samples for a plug-in entropy estimate");
    return est;
}

CountRate cylinder_count_rate(const MarkovPartition& partition, std::span<const int> n_values) {
    if (n_values.empty()) throw Error("count rate needs depths");
    CountRate out;
    out.k0 = -std::numeric_limits<double>::infinity();
    for (int n : n_values) {
        const double rate = static_cast<double>(std::log(admissible_word_count(partition, n))) / n;
        out.rates.emplace_back(n, rate);
        out.k0 = std::max(out.k0, rate);
    }
    return out;
}

CountBound count_bound(const CylinderTable& table, std::size_t covered, double covered_mass, double epsilon,
                       double k0) {
    CountBound b;
    b.n = table.depth();
    b.epsilon = epsilon;
    b.k0 = k0;
    b.covered = covered;
    b.observed = table.observed();
    b.covered_mass = covered_mass;
    b.entropy = partition_entropy(table);
    b.lhs = std::log(static_cast<double>(covered));
    const double e = epsilon;
    const double mix = (e > 0.0 ? e * std::log(e) : 0.0) + (e < 1.0 ? (1.0 - e) * std::log(1.0 - e) : 0.0);
    b.rhs = b.entropy - b.n * k0 * e + mix;
    b.margin = b.lhs - b.rhs;
    return b;
}

CountBound entropy_count_bound_check(const HyperbolicToralMap& map, const MarkovPartition& partition,
                                     const CylinderSource& source, double epsilon, int n, int threads) {
    if (!(epsilon > 0.0 && epsilon < 0.25)) throw Error("count bound requires 0 < epsilon < 1/4");
    const CylinderTable table = cylinder_frequencies(map, partition, source, n, threads);
    std::vector<std::uint64_t> counts;
    counts.reserve(table.observed());
    for (const auto& e : table.entries()) counts.push_back(e.second);
    std::sort(counts.begin(), counts.end(), std::greater<>());
    const long double need = (1.0L - epsilon) * static_cast<long double>(table.total());
    long double acc = 0.0L;
    std::size_t covered = 0;
    while (covered < counts.size() && !(acc > need)) acc += counts[covered++];

    std::vector<int> depths(static_cast<std::size_t>(n));
    std::iota(depths.begin(), depths.end(), 1);
    const double k0 = cylinder_count_rate(partition, depths).k0;
    return count_bound(table, covered, static_cast<double>(acc / table.total()), epsilon, k0);
}

}  // namespace toruslab
