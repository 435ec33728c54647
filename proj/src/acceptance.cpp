#include "toruslab/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace toruslab {

using nlohmann::json;

namespace {

// Pinned tolerances.
constexpr double kLyapunovTol = 1e-9;
constexpr double kLyapunovSeconds = 1.0;
constexpr double kMetricSlack = 1e-12;
constexpr double kMetricSeconds = 5.0;
constexpr double kDefectSlack = 1e-12;
constexpr double kDefectSeconds = 5.0;
constexpr double kLebSlopeTol = 0.005;
constexpr double kLebVerdictTol = 0.01;
constexpr double kDiracRelTol = 0.25;
constexpr double kDiracResidualTol = 0.25;
constexpr double kDiracVerdictTol = 0.01;
constexpr double kEntropyTol = 0.1;
constexpr double kCountRateRelTol = 0.10;
constexpr double kBoundTolerance = 0.05;
constexpr double kBoundSeconds = 60.0;
constexpr double kRuelleSlack = 0.05;
constexpr double kRuelleSeconds = 60.0;
constexpr double kMixtureRelTol = 0.20;
constexpr double kLebDefectTol = 0.05;
constexpr double kPerturbedVerdictTol = 0.02;
constexpr double kPerturbedEntropyTol = 0.1;

constexpr std::size_t kEntropyOrbit = 10000000;
constexpr std::size_t kProxyLength = 1000000;
const TorusPoint kTypicalStart{0.1234567, 0.7654321};

double log_lambda() { return std::log((3.0 + std::sqrt(5.0)) / 2.0); }

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json point(const TorusPoint& p) { return json::array({p.x1(), p.x2()}); }

DiscreteMeasure random_measure(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> count(1, 5);
    const int n = count(rng);
    std::vector<TorusPoint> atoms;
    std::vector<double> weights;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = u(rng);
        atoms.emplace_back(a, u(rng));
        weights.push_back(0.05 + u(rng));
        sum += weights.back();
    }
    for (double& w : weights) w /= sum;
    double s = 0.0;
    for (int i = 0; i + 1 < n; ++i) s += weights[static_cast<std::size_t>(i)];
    weights.back() = 1.0 - s;
    return DiscreteMeasure(std::move(atoms), std::move(weights));
}

ExperimentRecord run_registered(int id, const AcceptanceOptions& options) {
    const ExperimentRecord rec = run(acceptance_config(id, options), options.threads);
    if (!options.record_dir.empty()) persist(rec, options.record_dir);
    return rec;
}

void append_stage_errors(const ExperimentRecord& rec, CriterionResult& r) {
    for (const auto& e : rec.errors) r.details.push_back("stage " + e.stage + " failed: " + e.message);
}

void append_sweep(const EpsilonSweep& sweep, CriterionResult& r) {
    for (const auto& e : sweep.estimates) {
        if (e.valid) {
            r.details.push_back("eps " + fmt(e.epsilon) + ": slope " + fmt(e.slope) + " +- " + fmt(e.stderr_slope, 3) +
                                " over n in [" + std::to_string(e.window.n_min) + ", " +
                                std::to_string(e.window.n_max) + "]");
        } else {
            r.details.push_back("eps " + fmt(e.epsilon) + ": no estimate (" + e.note + ")");
        }
    }
}

CriterionResult lyapunov_exactness() {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const auto spec = lyapunov_spectrum_qr(HyperbolicToralMap::cat_map(), kTypicalStart, 10000);
    r.seconds = seconds_since(t0);
    const double e1 = std::abs(spec.chi_plus - log_lambda());
    const double e2 = std::abs(spec.chi_plus + spec.chi_minus);
    r.pass = e1 < kLyapunovTol && e2 < kLyapunovTol && r.seconds < kLyapunovSeconds;
    r.summary = "|chi1 - log lambda| = " + fmt(e1, 3) + ", |chi1 + chi2| = " + fmt(e2, 3) + " (tol " +
                fmt(kLyapunovTol) + "), " + fmt(r.seconds, 3) + " s";
    return r;
}

CriterionResult metric_suite() {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const TestFunctionFamily family;
    std::mt19937_64 rng(20240501);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_sym = 0.0, worst_id = 0.0, worst_tri = -1.0;
    for (int t = 0; t < 200; ++t) {
        const auto a = moments(random_measure(rng), family);
        const auto b = moments(random_measure(rng), family);
        const auto c = moments(random_measure(rng), family);
        worst_sym = std::max(worst_sym, std::abs(weak_star_distance(a, b) - weak_star_distance(b, a)));
        worst_id = std::max({worst_id, weak_star_distance(a, a), weak_star_distance(b, b), weak_star_distance(c, c)});
        worst_tri = std::max(worst_tri, weak_star_distance(a, c) - weak_star_distance(a, b) - weak_star_distance(b, c));
    }
    double worst_ball = -1.0;
    for (int t = 0; t < 100; ++t) {
        const DiscreteMeasure centre = random_measure(rng);
        const DiscreteMeasure n1 = random_measure(rng);
        const DiscreteMeasure n2 = random_measure(rng);
        const auto mc = moments(centre, family);
        const double radius = std::max(weak_star_distance(mc, moments(n1, family)),
                                       weak_star_distance(mc, moments(n2, family)));
        const double s = u(rng);
        const double d = weak_star_distance(mc, moments(n1.mix(s, n2), family));
        worst_ball = std::max(worst_ball, d - radius);
    }
    r.seconds = seconds_since(t0);
    r.pass = worst_sym <= kMetricSlack && worst_id <= kMetricSlack && worst_tri <= kMetricSlack &&
             worst_ball <= kMetricSlack && r.seconds < kMetricSeconds;
    r.summary = "symmetry " + fmt(worst_sym, 3) + ", identity " + fmt(worst_id, 3) + ", triangle excess " +
                fmt(worst_tri, 3) + ", ball excess " + fmt(worst_ball, 3) + " (slack " + fmt(kMetricSlack) + "), " +
                fmt(r.seconds, 3) + " s";
    return r;
}

CriterionResult invariance_defect_bound() {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const auto map = HyperbolicToralMap::cat_map();
    const TestFunctionFamily family;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = -1.0;  // max of defect * n / 2
    for (int t = 0; t < 100; ++t) {
        const double a = u(rng);
        const TorusPoint x(a, u(rng));
        for (std::size_t n : {10u, 100u, 1000u}) {
            const double d = invariance_defect(map, x, n, family);
            worst = std::max(worst, d - 2.0 / static_cast<double>(n));
        }
    }
    r.seconds = seconds_since(t0);
    r.pass = worst <= kDefectSlack && r.seconds < kDefectSeconds;
    r.summary = "max(defect - 2/n) = " + fmt(worst, 3) + " over 300 cases, " + fmt(r.seconds, 3) + " s";
    return r;
}

CriterionResult lebesgue_rate(const AcceptanceOptions& options) {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentRecord rec = run_registered(4, options);
    r.seconds = seconds_since(t0);
    append_stage_errors(rec, r);
    if (!rec.sweep || !rec.verdict) {
        r.summary = "pipeline did not produce a verdict";
        return r;
    }
    double worst = 0.0;
    bool all_valid = true;
    for (const auto& e : rec.sweep->estimates) {
        all_valid = all_valid && e.valid;
        if (e.valid) worst = std::max(worst, std::abs(e.slope));
    }
    append_sweep(*rec.sweep, r);
    r.pass = all_valid && worst <= kLebSlopeTol && *rec.verdict == Verdict::consistent_with_zero;
    r.summary = "max |slope| = " + fmt(worst, 3) + " (tol " + fmt(kLebSlopeTol) + "), verdict " +
                to_string(*rec.verdict) + ", " + fmt(r.seconds, 3) + " s";
    return r;
}

CriterionResult dirac_rate(const AcceptanceOptions& options) {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentRecord rec = run_registered(5, options);
    r.seconds = seconds_since(t0);
    append_stage_errors(rec, r);
    if (!rec.sweep || !rec.verdict || !rec.sweep->last_valid) {
        r.summary = "pipeline did not produce a verdict";
        return r;
    }
    const double target = -log_lambda();
    const auto& est = rec.sweep->estimates;
    const RateEstimate& last = *rec.sweep->last_valid;
    const bool magnitude = std::abs(last.slope - target) <= kDiracRelTol * std::abs(target);
    bool toward = est.size() >= 2;
    for (std::size_t i = 1; i < est.size(); ++i) {
        toward = toward && est[i].valid && est[i - 1].valid &&
                 std::abs(est[i].slope - target) < std::abs(est[i - 1].slope - target);
    }
    const double residual = pesin_rate_residual(last.slope, 0.0, log_lambda());
    const bool residual_ok = std::abs(residual) <= kDiracResidualTol;
    const bool verdict_ok = *rec.verdict == Verdict::negative_rate;
    append_sweep(*rec.sweep, r);
    r.details.push_back(std::string("slope within 25% of -log lambda: ") + (magnitude ? "yes" : "no") +
                        "; moving toward it: " + (toward ? "yes" : "no") + "; verdict " + to_string(*rec.verdict) +
                        "; residual " + fmt(residual, 4) + (residual_ok ? " (ok)" : " (outside +-0.25)"));

    // Smaller epsilons are reported for the trend only; they are not part of the criterion.
    ExperimentConfig extra = acceptance_config(5, options);
    extra.name = "dirac-rate-small-eps";
    extra.epsilons = {0.05, 0.02};
    extra.source["name"] = extra.name;
    extra.source["epsilons"] = extra.epsilons;
    const ExperimentRecord more = run(extra, options.threads);
    if (more.sweep) {
        for (const auto& e : more.sweep->estimates) {
            r.details.push_back("info eps " + fmt(e.epsilon) + ": " +
                                (e.valid ? "slope " + fmt(e.slope) + " +- " + fmt(e.stderr_slope, 3) : e.note));
        }
    }
    if (!options.record_dir.empty()) persist(more, options.record_dir);

    r.pass = magnitude && toward && verdict_ok && residual_ok;
    r.summary = "slope at eps " + fmt(last.epsilon) + " = " + fmt(last.slope, 4) + " vs " + fmt(target, 4) +
                " (+-25%), residual " + fmt(residual, 3) + ", verdict " + to_string(*rec.verdict) + ", G = " +
                std::to_string(options.dirac_grid) + ", " + fmt(r.seconds, 3) + " s";
    return r;
}

CriterionResult entropy_pipeline(const AcceptanceOptions& options) {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const auto map = HyperbolicToralMap::cat_map();
    const MarkovPartition partition = cat_map_partition();
    const int depths[] = {12};
    const auto est = entropy_rate_estimate(map, partition, OrbitSource{kTypicalStart, kEntropyOrbit}, depths,
                                           options.threads);
    const int count_depths[] = {14};
    const auto count = cylinder_count_rate(partition, count_depths);
    r.seconds = seconds_since(t0);
    const double h = est.levels.back().rate;
    const double c14 = count.rates.front().second;
    const bool h_ok = est.levels.back().adequate && std::abs(h - log_lambda()) <= kEntropyTol;
    const bool c_ok = std::abs(c14 - log_lambda()) <= kCountRateRelTol * log_lambda();
    r.pass = h_ok && c_ok;
    r.summary = "H(R_12)/12 = " + fmt(h, 5) + " (|diff| " + fmt(std::abs(h - log_lambda()), 3) +
                ", tol 0.1), log #R_14 / 14 = " + fmt(c14, 5) + " (tol 10%), " + fmt(r.seconds, 3) + " s";
    r.details.push_back("partition: " + std::to_string(partition.alphabet_size()) + " pieces, " +
                        std::to_string(est.levels.back().observed) + " observed cylinders at depth 12");
    return r;
}

CriterionResult count_bound_lemma(const AcceptanceOptions& options) {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const auto map = HyperbolicToralMap::cat_map();
    const MarkovPartition partition = cat_map_partition();
    const CylinderSource leb = OrbitSource{kTypicalStart, kProxyLength};
    const CountBound b = entropy_count_bound_check(map, partition, leb, 0.1, 10, options.threads);
    const CountBound dirac =
        entropy_count_bound_check(map, partition, DiscreteMeasure::dirac(TorusPoint(0.0, 0.0)), 0.1, 10);
    const CylinderTable table = cylinder_frequencies(map, partition, leb, 10, options.threads);
    const CountBound all = count_bound(table, table.observed(), 1.0, 0.1, b.k0);
    r.seconds = seconds_since(t0);
    r.pass = b.margin >= -kBoundTolerance && dirac.margin >= 0.0 && all.margin >= 0.0 && all.lhs >= all.entropy &&
             r.seconds < kBoundSeconds;
    r.summary = "Leb margin " + fmt(b.margin, 4) + " (tolerance " + fmt(kBoundTolerance) + "), delta margin " +
                fmt(dirac.margin, 4) + ", A = all margin " + fmt(all.margin, 4) + ", " + fmt(r.seconds, 3) + " s";
    r.details.push_back("Leb: log #covering = " + fmt(b.lhs, 5) + ", rhs = " + fmt(b.rhs, 5) + ", H = " +
                        fmt(b.entropy, 5) + ", K0 = " + fmt(b.k0, 5) + ", covered " + std::to_string(b.covered) +
                        " of " + std::to_string(b.observed));
    return r;
}

CriterionResult ruelle_guard(const AcceptanceOptions& options) {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const auto map = HyperbolicToralMap::cat_map();
    const MarkovPartition partition = cat_map_partition();
    const int depths[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    struct Case {
        std::string name;
        MeasureRep measure;
        CylinderSource source;
    };
    const DiscreteMeasure p2 = DiscreteMeasure::uniform({TorusPoint(0.2, 0.4), TorusPoint(0.8, 0.6)});
    const DiscreteMeasure p3 =
        DiscreteMeasure::uniform({TorusPoint(0.75, 0.5), TorusPoint(0.0, 0.25), TorusPoint(0.25, 0.25)});
    const DiscreteMeasure d0 = DiscreteMeasure::dirac(TorusPoint(0.0, 0.0));
    const std::vector<Case> cases = {
        {"Leb", MeasureRep::lebesgue(), OrbitSource{kTypicalStart, kEntropyOrbit}},
        {"delta_0", MeasureRep::discrete(d0), d0},
        {"period-2", MeasureRep::discrete(p2), p2},
        {"period-3", MeasureRep::discrete(p3), p3},
    };
    bool ok = true;
    double worst = -1e300;
    for (const auto& c : cases) {
        const double h = entropy_rate_estimate(map, partition, c.source, depths, options.threads).rate;
        const double integral = unstable_integral(map, c.measure, kDefaultWarmup, kDefaultQuadratureResolution,
                                                  options.threads);
        const double excess = h - integral;
        worst = std::max(worst, excess);
        ok = ok && excess <= kRuelleSlack;
        r.details.push_back(c.name + ": h = " + fmt(h, 5) + ", integral = " + fmt(integral, 8));
    }
    r.seconds = seconds_since(t0);
    r.pass = ok && r.seconds < kRuelleSeconds;
    r.summary = "max(h - integral) = " + fmt(worst, 4) + " (allowed " + fmt(kRuelleSlack) + "), " +
                fmt(r.seconds, 3) + " s";
    return r;
}

CriterionResult affinity_check(const AcceptanceOptions& options) {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentRecord mix = run_registered(9, options);
    ExperimentConfig leb_config = acceptance_config(9, options);
    leb_config.name = "affinity-lebesgue";
    leb_config.target = TargetSpec{};
    leb_config.source["name"] = leb_config.name;
    leb_config.source["target"] = {{"type", "lebesgue"}};
    const ExperimentRecord leb = run(leb_config, options.threads);
    if (!options.record_dir.empty()) persist(leb, options.record_dir);
    r.seconds = seconds_since(t0);
    append_stage_errors(mix, r);
    append_stage_errors(leb, r);
    if (!mix.pesin_defect || !leb.pesin_defect) {
        r.summary = "pipeline did not produce both defects";
        return r;
    }
    const double expected = -0.5 * log_lambda();
    const bool mix_ok = std::abs(*mix.pesin_defect - expected) <= kMixtureRelTol * std::abs(expected);
    const bool leb_ok = std::abs(*leb.pesin_defect) <= kLebDefectTol;
    r.pass = mix_ok && leb_ok;
    r.summary = "mixture defect " + fmt(*mix.pesin_defect, 4) + " vs " + fmt(expected, 4) + " (+-20%), Leb defect " +
                fmt(*leb.pesin_defect, 4) + " (+-0.05), " + fmt(r.seconds, 3) + " s";
    r.details.push_back("mixture: h = " + fmt(mix.entropy->rate, 5) + ", integral = " + fmt(*mix.unstable_integral, 6));
    return r;
}

CriterionResult perturbed_robustness(const AcceptanceOptions& options) {
    CriterionResult r;
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentRecord rec = run_registered(10, options);
    r.seconds = seconds_since(t0);
    append_stage_errors(rec, r);
    if (!rec.sweep || !rec.verdict || !rec.entropy || !rec.unstable_integral) {
        r.summary = "pipeline incomplete";
        return r;
    }
    append_sweep(*rec.sweep, r);
    const double gap = std::abs(rec.entropy->rate - *rec.unstable_integral);
    const bool verdict_ok = *rec.verdict == Verdict::consistent_with_zero;
    const bool flag = rec.entropy->non_exact_partition;
    r.pass = rec.cone && rec.cone->pass && verdict_ok && gap <= kPerturbedEntropyTol && flag;
    r.summary = "cone pass (expand " + fmt(rec.cone->lambda_expand, 5) + "), verdict " + to_string(*rec.verdict) +
                ", |h - integral| = " + fmt(gap, 3) + " (h at depth " + std::to_string(rec.entropy->depth) +
                "), non-exact flag " + (flag ? "set" : "unset") + ", " + fmt(r.seconds, 3) + " s";
    return r;
}

}  // namespace

std::string criterion_title(int id) {
    switch (id) {
        case 1: return "lyapunov exactness";
        case 2: return "metric suite";
        case 3: return "invariance defect";
        case 4: return "lebesgue rate";
        case 5: return "dirac rate";
        case 6: return "entropy pipeline";
        case 7: return "cylinder count bound";
        case 8: return "entropy vs unstable integral";
        case 9: return "entropy affinity";
        case 10: return "perturbed map";
    }
    throw Error("unknown criterion " + std::to_string(id));
}

ExperimentConfig acceptance_config(int id, const AcceptanceOptions& options) {
    json doc;
    switch (id) {
        case 4:
            doc = {{"name", "lebesgue-rate"},
                   {"map", {{"matrix", {{2, 1}, {1, 1}}}}},
                   {"family", {{"K", 33}}},
                   {"grid", {{"resolution", 512}}},
                   {"target", {{"type", "lebesgue"}}},
                   {"epsilons", {0.2, 0.1}},
                   {"n_range", {{"min", 100}, {"max", 500}, {"step", 20}}},
                   {"window", {{"n_min", 100}, {"n_max", 500}}},
                   {"min_hits", 30},
                   {"verdict_tol", kLebVerdictTol},
                   {"expect_verdict", "consistent_with_zero"}};
            break;
        case 5:
            doc = {{"name", "dirac-rate"},
                   {"map", {{"matrix", {{2, 1}, {1, 1}}}}},
                   {"family", {{"K", 33}}},
                   {"grid", {{"resolution", options.dirac_grid}}},
                   {"target", {{"type", "dirac"}, {"point", {0.0, 0.0}}}},
                   {"epsilons", {0.2, 0.1}},
                   {"n_range", {{"min", 1}, {"max", 12}}},
                   {"window", {{"n_min", 4}, {"n_max", 12}}},
                   {"min_hits", 30},
                   {"verdict_tol", kDiracVerdictTol},
                   {"expect_verdict", "negative_rate"}};
            break;
        case 9:
            doc = {{"name", "affinity-mixture"},
                   {"map", {{"matrix", {{2, 1}, {1, 1}}}}},
                   {"target",
                    {{"type", "mixture"},
                     {"components",
                      {{{"weight", 0.5}, {"target", {{"type", "lebesgue"}}}},
                       {{"weight", 0.5}, {"target", {{"type", "dirac"}, {"point", {0.0, 0.0}}}}}}}}},
                   {"lyapunov", {{"warmup", kDefaultWarmup}, {"grid_resolution", kDefaultQuadratureResolution}}},
                   {"entropy",
                    {{"n_values", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}},
                     {"orbit_start", point(kTypicalStart)},
                     {"orbit_length", kEntropyOrbit}}}};
            break;
        case 10:
            doc = {{"name", "perturbed-srb-proxy"},
                   {"map",
                    {{"matrix", {{2, 1}, {1, 1}}},
                     {"amplitude", 0.005},
                     {"perturbation", {{{"coefficient", {1.0, 0.0}}, {"frequency", {0, 1}}}}},
                     {"cone_half_angle", kDefaultConeHalfAngle},
                     {"cone_grid", 128}}},
                   {"family", {{"K", 33}}},
                   {"grid", {{"resolution", 256}}},
                   {"target", {{"type", "empirical"}, {"start", point(kTypicalStart)}, {"length", kProxyLength}}},
                   {"epsilons", {0.2, 0.1}},
                   {"n_range", {{"min", 100}, {"max", 500}, {"step", 20}}},
                   {"window", {{"n_min", 100}, {"n_max", 500}}},
                   {"min_hits", 30},
                   {"verdict_tol", kPerturbedVerdictTol},
                   {"expect_verdict", "consistent_with_zero"},
                   {"lyapunov", {{"warmup", kDefaultWarmup}, {"grid_resolution", kDefaultQuadratureResolution}}},
                   {"entropy",
                    {{"n_values", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}},
                     {"orbit_start", point(kTypicalStart)},
                     {"orbit_length", kProxyLength}}}};
            break;
        default: throw Error("criterion " + std::to_string(id) + " has no runner config");
    }
    return parse_config(doc);
}

CriterionResult run_criterion(int id, const AcceptanceOptions& options) {
    CriterionResult r;
    try {
        switch (id) {
            case 1: r = lyapunov_exactness(); break;
            case 2: r = metric_suite(); break;
            case 3: r = invariance_defect_bound(); break;
            case 4: r = lebesgue_rate(options); break;
            case 5: r = dirac_rate(options); break;
            case 6: r = entropy_pipeline(options); break;
            case 7: r = count_bound_lemma(options); break;
            case 8: r = ruelle_guard(options); break;
            case 9: r = affinity_check(options); break;
            case 10: r = perturbed_robustness(options); break;
            default: throw Error("unknown criterion " + std::to_string(id));
        }
    } catch (const std::exception& e) {
        r.pass = false;
        r.summary = std::string("error: ") + e.what();
    }
    r.id = id;
    r.title = criterion_title(id);
    return r;
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out) {
    std::vector<int> ids = options.only;
    if (ids.empty()) {
        for (int i = 1; i <= kCriterionCount; ++i) ids.push_back(i);
    }
    std::vector<CriterionResult> results;
    for (int id : ids) {
        CriterionResult r = run_criterion(id, options);
        out << (r.pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << r.id << "  " << r.title << ": "
            << r.summary << "\n";
        for (const auto& d : r.details) out << "        " << d << "\n";
        out.flush();
        results.push_back(std::move(r));
    }
    const auto passed = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.pass; });
    out << "acceptance: " << passed << "/" << results.size() << " criteria passed\n";
    return results;
}

}  // namespace toruslab
