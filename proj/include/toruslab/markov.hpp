#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "toruslab/basin.hpp"
#include "toruslab/torus.hpp"
#include "toruslab/weak_star.hpp"

namespace toruslab {

/// Axis-aligned rectangle in eigen-coordinates (u along the unstable
/// eigenvector, s along the stable one). This is one lift of a partition
/// piece; the piece itself is its image in the torus.
struct EigenRect {
    double u_lo = 0.0, u_hi = 0.0;
    double s_lo = 0.0, s_hi = 0.0;

    double width() const { return u_hi - u_lo; }
    double height() const { return s_hi - s_lo; }
};

struct Polygon {
    std::vector<Vec2> vertices;
    double area() const;
};

struct PartitionPiece {
    EigenRect rect;
    /// Corners of the lift in plane coordinates, counter-clockwise.
    std::vector<Vec2> corners;
    /// The piece cut along the unit-square boundary, each part inside [0,1]^2.
    std::vector<Polygon> polygons;
    /// Lattice shifts m such that rect - m meets the unit square (in plane coordinates).
    std::vector<std::array<int, 2>> translates;
    double area = 0.0;
    double diameter = 0.0;
    TorusPoint centroid;
};

class MarkovPartition {
public:
    MarkovPartition(HyperbolicSplitting frame, std::vector<EigenRect> rects, std::vector<std::vector<int>> transitions);

    int alphabet_size() const { return static_cast<int>(pieces_.size()); }
    const std::vector<PartitionPiece>& pieces() const { return pieces_; }
    const HyperbolicSplitting& frame() const { return frame_; }
    /// 0/1 matrix of admissible symbol pairs (i -> j iff f(R_i) meets the interior of R_j).
    const std::vector<std::vector<int>>& transitions() const { return transitions_; }
    double max_diameter() const { return max_diameter_; }
    /// Diameter bound for the two-sided refinement R_{-1} v R v f^-1 R.
    double refined_diameter() const { return refined_diameter_; }

    /// Lowest-index piece whose closed lift contains p (1e-12 slack). Throws LocationFailure.
    int locate(const TorusPoint& p) const;
    /// Indices of all pieces whose closed lift contains p.
    std::vector<int> containing(const TorusPoint& p, double slack = kBoundaryTolerance) const;

    static constexpr double kBoundaryTolerance = 1e-12;

private:
    friend MarkovPartition cat_map_partition();

    HyperbolicSplitting frame_;
    std::vector<PartitionPiece> pieces_;
    std::vector<std::vector<int>> transitions_;
    double max_diameter_ = 0.0;
    double refined_diameter_ = 0.0;
};

struct MarkovValidation {
    double area_sum = 0.0;
    std::size_t tiling_samples = 0;
    std::size_t tiling_failures = 0;
    std::size_t boundary_samples = 0;
    double stable_boundary_error = 0.0;
    double unstable_boundary_error = 0.0;
    int max_transition_multiplicity = 0;
    double spectral_radius = 0.0;
    double expected_spectral_radius = 0.0;
    double refined_diameter = 0.0;
    bool pass = false;
    std::vector<std::string> failures;
};

/// Numerical self-check: tiling, forward invariance of the stable boundary
/// and backward invariance of the unstable boundary, 0/1 transitions whose
/// spectral radius matches the unstable eigenvalue, and a generating refinement.
MarkovValidation validate_markov(const MarkovPartition& partition, const HyperbolicToralMap& map,
                                 std::size_t boundary_samples = 10000, std::uint64_t seed = 1);

/// Three-rectangle partition for [[2,1],[1,1]]: the two-square partition of its
/// square root [[1,1],[1,0]] refined once by that root. Validated before return;
/// throws ConstructionInvalid if any check fails.
MarkovPartition cat_map_partition();

double spectral_radius(const std::vector<std::vector<int>>& matrix);

/// Number of admissible words of length n (= #R_n) from powers of the transition matrix.
long double admissible_word_count(const MarkovPartition& partition, int n);

struct Itinerary {
    std::vector<int> symbols;
    std::string to_string() const;
    friend bool operator==(const Itinerary&, const Itinerary&) = default;
};

Itinerary itinerary(const HyperbolicToralMap& map, const MarkovPartition& partition, const TorusPoint& p, int n);

/// Samples f^j(start), j < length, of one orbit.
struct OrbitSource {
    TorusPoint start;
    std::size_t length = 0;
};

using SimpleSource = std::variant<OrbitSource, SampleGrid, DiscreteMeasure>;

struct MixtureSource {
    std::vector<std::pair<double, SimpleSource>> components;
};

using CylinderSource = std::variant<OrbitSource, SampleGrid, DiscreteMeasure, MixtureSource>;

/// Depth-n cylinder masses as integer counts. Sampled sources count one per
/// start point; exact (discrete) and mixed sources use fixed-point masses with
/// total close to 2^52.
class CylinderTable {
public:
    CylinderTable(int n, int alphabet, std::vector<std::pair<std::uint64_t, std::uint64_t>> entries,
                  std::uint64_t samples, bool exact);

    int depth() const { return n_; }
    int alphabet() const { return alphabet_; }
    /// (itinerary key, count) sorted by key; the first symbol is the most significant digit.
    const std::vector<std::pair<std::uint64_t, std::uint64_t>>& entries() const { return entries_; }
    std::uint64_t total() const { return total_; }
    /// Number of sampled start points (0 for exact sources).
    std::uint64_t samples() const { return samples_; }
    bool exact() const { return exact_; }
    std::size_t observed() const { return entries_.size(); }

    Itinerary decode(std::uint64_t key) const;
    std::uint64_t encode(const Itinerary& it) const;
    std::uint64_t count(const Itinerary& it) const;
    /// Table of the first m symbols of every itinerary.
    CylinderTable marginalized(int m) const;

private:
    int n_;
    int alphabet_;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> entries_;
    std::uint64_t total_ = 0;
    std::uint64_t samples_;
    bool exact_;
};

/// Largest depth representable in a 64-bit itinerary key for an alphabet.
int max_itinerary_depth(int alphabet);

CylinderTable cylinder_frequencies(const HyperbolicToralMap& map, const MarkovPartition& partition,
                                   const CylinderSource& source, int n, int threads = 1);

/// -sum p log p over the table, natural log, 0 log 0 = 0.
double partition_entropy(const CylinderTable& table);

/// A depth is adequate when the source is exact or has >= 10x as many samples
/// as there are admissible cylinders at that depth.
inline constexpr double kSamplesPerCylinder = 10.0;

struct EntropyLevel {
    int n = 0;
    double entropy = 0.0;
    double rate = 0.0;
    std::size_t observed = 0;
    long double admissible = 0.0L;
    bool adequate = false;
};

struct EntropyEstimate {
    double rate = 0.0;
    int depth = 0;
    std::vector<EntropyLevel> levels;
    bool non_exact_partition = false;
    std::vector<std::string> warnings;
};

/// H(R_n, mu)/n at the largest adequate n in n_values. Throws InsufficientSamples
/// if no depth is adequate.
EntropyEstimate entropy_rate_estimate(const HyperbolicToralMap& map, const MarkovPartition& partition,
                                      const CylinderSource& source, std::span<const int> n_values,
                                      int threads = 1);

struct CountRate {
    std::vector<std::pair<int, double>> rates;  // (n, log #R_n / n)
    double k0 = 0.0;                            // sup over the range
};

CountRate cylinder_count_rate(const MarkovPartition& partition, std::span<const int> n_values);

struct CountBound {
    double lhs = 0.0;  // log #{Y : Y meets A}
    double rhs = 0.0;
    double margin = 0.0;
    double entropy = 0.0;
    double k0 = 0.0;
    double epsilon = 0.0;
    int n = 0;
    std::size_t covered = 0;
    std::size_t observed = 0;
    double covered_mass = 0.0;
};

/// Bound evaluated for a given covering set size (number of cylinders meeting A).
CountBound count_bound(const CylinderTable& table, std::size_t covered, double covered_mass, double epsilon,
                       double k0);

/// A = the fewest depth-n cylinders whose mass exceeds 1 - epsilon; K0 from
/// admissible-word counts over depths 1..n. Requires 0 < epsilon < 1/4.
CountBound entropy_count_bound_check(const HyperbolicToralMap& map, const MarkovPartition& partition,
                                     const CylinderSource& source, double epsilon, int n, int threads = 1);

}  // namespace toruslab
