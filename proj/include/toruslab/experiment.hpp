#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "toruslab/basin.hpp"
#include "toruslab/lyapunov.hpp"
#include "toruslab/markov.hpp"
#include "toruslab/torus.hpp"
#include "toruslab/weak_star.hpp"

namespace toruslab {

struct MapSpec {
    IntMatrix2 matrix{2, 1, 1, 1};
    double amplitude = 0.0;
    std::vector<PerturbationTerm> perturbation;
    double cone_half_angle = kDefaultConeHalfAngle;
    int cone_grid = 64;

    HyperbolicToralMap build() const { return HyperbolicToralMap(matrix, amplitude, perturbation); }
};

struct FamilySpec {
    int size = TestFunctionFamily::kDefaultSize;
    std::string version = TestFunctionFamily::kVersion;
};

enum class TargetKind { lebesgue, dirac, periodic, mixture, empirical };

struct TargetSpec {
    TargetKind kind = TargetKind::lebesgue;
    TorusPoint point;          // dirac atom, periodic seed, empirical start
    int max_period = 20;       // periodic
    std::size_t length = 0;    // empirical orbit length
    std::vector<std::pair<double, TargetSpec>> components;  // mixture
};

std::string to_string(TargetKind k);

struct LyapunovSpec {
    int warmup = kDefaultWarmup;
    int grid_resolution = kDefaultQuadratureResolution;
    std::size_t qr_steps = 0;  // 0 skips the QR spectrum
    TorusPoint qr_point{0.1234567, 0.7654321};
};

struct EntropySpec {
    std::vector<int> n_values;
    TorusPoint orbit_start{0.1234567, 0.7654321};
    std::size_t orbit_length = 1000000;
    std::optional<double> bound_epsilon;
    int bound_n = 10;
    double bound_tolerance = 0.05;
};

struct ExperimentConfig {
    std::string name = "experiment";
    MapSpec map;
    FamilySpec family;
    SampleGrid grid{64, false, 0};
    TargetSpec target;
    std::vector<double> epsilons;
    std::vector<int> n_values;
    RegressionWindow window;
    std::uint64_t min_hits = kDefaultMinHits;
    double verdict_tol = 0.01;
    std::optional<Verdict> expect_verdict;
    std::optional<LyapunovSpec> lyapunov;
    std::optional<EntropySpec> entropy;
    std::filesystem::path output_dir;

    /// The document the config was parsed from; echoed and hashed in records.
    nlohmann::json source;
};

/// Parses and validates a config document. Throws ConfigInvalid naming the field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Git blob hash ("blob <len>\0" + bytes, SHA-1, hex) of the canonical JSON dump.
std::string config_hash(const nlohmann::json& doc);
std::string git_blob_hash(const std::string& bytes);

/// Builds the map and runs the cone check. Throws ConfigInvalid (field "map")
/// with the hyperbolicity failure in the message.
HyperbolicToralMap admitted_map(const MapSpec& spec, ConeReport* report = nullptr);

/// Target measure (Lebesgue part and atoms). Throws ConfigInvalid for a
/// periodic seed without a period up to max_period.
MeasureRep resolve_target(const HyperbolicToralMap& map, const TargetSpec& spec);

/// Cylinder source that samples the given target: Lebesgue parts by a long
/// orbit from the entropy orbit start, empirical targets by their own orbit.
CylinderSource entropy_source(const TargetSpec& spec, const HyperbolicToralMap& map, const EntropySpec& entropy);

struct StageError {
    std::string stage;
    std::string message;
};

struct ExperimentRecord {
    ExperimentConfig config;
    std::string config_hash;
    std::string started_at;
    std::string finished_at;
    nlohmann::json environment;

    std::optional<ConeReport> cone;
    std::optional<EpsilonSweep> sweep;
    std::optional<Verdict> verdict;
    std::optional<double> unstable_integral;
    std::optional<LyapunovSpectrum> spectrum;
    std::optional<EntropyEstimate> entropy;
    std::optional<CountRate> count_rate;
    std::optional<CountBound> bound;
    std::optional<double> pesin_defect;
    /// (epsilon, slope - (h - integral)) per valid rate estimate.
    std::vector<std::pair<double, double>> rate_residuals;

    std::vector<std::string> warnings;
    std::vector<StageError> errors;
    /// Verdict or tolerance expectations that did not hold.
    std::vector<std::string> failures;

    nlohmann::json to_json() const;
};

nlohmann::json environment_stamp(int threads);

/// Executes the configured stages. Stage errors are recorded, not thrown;
/// only an invalid config or map throws.
ExperimentRecord run(const ExperimentConfig& config, int threads = 1);

/// Writes <name>.json plus <name>-curves.csv and <name>-sweep.csv into dir.
std::vector<std::filesystem::path> persist(const ExperimentRecord& record, const std::filesystem::path& dir);

enum class ReportFormat { csv, json, plotdata };

ReportFormat parse_report_format(const std::string& s);

struct ReportOutput {
    std::vector<std::filesystem::path> files;
    std::vector<std::string> warnings;
};

/// Reads persisted records and writes merged tables into out_dir. Records whose
/// test-function family differs are never merged into one distance-dependent
/// table; each family group is written separately with a warning.
/// Throws MissingRecord if a path does not exist or is not a record.
ReportOutput report(const std::vector<std::filesystem::path>& records, ReportFormat format,
                    const std::filesystem::path& out_dir);

/// Partition pieces as a JSON list of polygons (one list of [x, y] per part).
nlohmann::json partition_geometry_json(const MarkovPartition& partition);

/// "itinerary,count" rows, itineraries written as dot-separated symbols.
std::string cylinder_table_csv(const CylinderTable& table);

/// Locale-independent shortest round-trip formatting used for every CSV cell.
std::string format_number(double v);

}  // namespace toruslab
