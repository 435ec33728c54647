#include "toruslab/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cfloat>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "toruslab/parallel.hpp"

namespace toruslab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void require_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }) ==
            allowed.end()) {
            throw ConfigInvalid(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
        }
    }
}

const json& object_at(const json& doc, const std::string& field) {
    if (!doc.is_object()) throw ConfigInvalid(field, "expected an object");
    return doc;
}

double number_at(const json& v, const std::string& field) {
    if (!v.is_number()) throw ConfigInvalid(field, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigInvalid(field, "expected a finite number");
    return x;
}

std::int64_t integer_at(const json& v, const std::string& field) {
    if (!v.is_number_integer()) throw ConfigInvalid(field, "expected an integer");
    return v.get<std::int64_t>();
}

std::uint64_t unsigned_at(const json& v, const std::string& field) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigInvalid(field, "expected a non-negative integer");
}

bool bool_at(const json& v, const std::string& field) {
    if (!v.is_boolean()) throw ConfigInvalid(field, "expected true or false");
    return v.get<bool>();
}

std::string string_at(const json& v, const std::string& field) {
    if (!v.is_string()) throw ConfigInvalid(field, "expected a string");
    return v.get<std::string>();
}

Vec2 pair_at(const json& v, const std::string& field) {
    if (!v.is_array() || v.size() != 2) throw ConfigInvalid(field, "expected [x, y]");
    return {number_at(v[0], field + "[0]"), number_at(v[1], field + "[1]")};
}

TorusPoint point_at(const json& v, const std::string& field) { return TorusPoint(pair_at(v, field)); }

std::vector<int> increasing_ints(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) throw ConfigInvalid(field, "expected a non-empty array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto x = integer_at(v[i], field + "[" + std::to_string(i) + "]");
        if (x < 1 || x > 100000000) throw ConfigInvalid(field, "values must lie in [1, 1e8]");
        if (!out.empty() && x <= out.back()) throw ConfigInvalid(field, "values must be strictly increasing");
        out.push_back(static_cast<int>(x));
    }
    return out;
}

std::vector<int> n_range_at(const json& v, const std::string& field) {
    object_at(v, field);
    require_keys(v, field, {"min", "max", "step"});
    if (!v.contains("min") || !v.contains("max")) throw ConfigInvalid(field, "needs min and max");
    const auto lo = integer_at(v["min"], field + ".min");
    const auto hi = integer_at(v["max"], field + ".max");
    const auto step = v.contains("step") ? integer_at(v["step"], field + ".step") : 1;
    if (lo < 1 || hi < lo || hi > 100000000) throw ConfigInvalid(field, "needs 1 <= min <= max <= 1e8");
    if (step < 1) throw ConfigInvalid(field + ".step", "must be >= 1");
    std::vector<int> out;
    for (auto n = lo; n <= hi; n += step) out.push_back(static_cast<int>(n));
    if (out.back() != hi) out.push_back(static_cast<int>(hi));
    return out;
}

MapSpec parse_map(const json& v) {
    object_at(v, "map");
    require_keys(v, "map", {"matrix", "amplitude", "perturbation", "cone_half_angle", "cone_grid"});
    MapSpec spec;
    if (v.contains("matrix")) {
        const json& m = v["matrix"];
        if (!m.is_array() || m.size() != 2 || !m[0].is_array() || !m[1].is_array() || m[0].size() != 2 ||
            m[1].size() != 2) {
            throw ConfigInvalid("map.matrix", "expected [[a, b], [c, d]] with integer entries");
        }
        spec.matrix = {integer_at(m[0][0], "map.matrix"), integer_at(m[0][1], "map.matrix"),
                       integer_at(m[1][0], "map.matrix"), integer_at(m[1][1], "map.matrix")};
    }
    if (v.contains("amplitude")) {
        spec.amplitude = number_at(v["amplitude"], "map.amplitude");
        if (spec.amplitude < 0.0) throw ConfigInvalid("map.amplitude", "must be >= 0");
    }
    if (v.contains("perturbation")) {
        const json& terms = v["perturbation"];
        if (!terms.is_array()) throw ConfigInvalid("map.perturbation", "expected an array");
        for (std::size_t i = 0; i < terms.size(); ++i) {
            const std::string f = "map.perturbation[" + std::to_string(i) + "]";
            object_at(terms[i], f);
            require_keys(terms[i], f, {"coefficient", "frequency"});
            if (!terms[i].contains("coefficient") || !terms[i].contains("frequency")) {
                throw ConfigInvalid(f, "needs coefficient and frequency");
            }
            PerturbationTerm t;
            t.coefficient = pair_at(terms[i]["coefficient"], f + ".coefficient");
            const json& k = terms[i]["frequency"];
            if (!k.is_array() || k.size() != 2) throw ConfigInvalid(f + ".frequency", "expected [k1, k2]");
            t.frequency = {static_cast<int>(integer_at(k[0], f + ".frequency")),
                           static_cast<int>(integer_at(k[1], f + ".frequency"))};
            if (t.frequency[0] == 0 && t.frequency[1] == 0) throw ConfigInvalid(f + ".frequency", "must be non-zero");
            spec.perturbation.push_back(t);
        }
    }
    if (v.contains("cone_half_angle")) {
        spec.cone_half_angle = number_at(v["cone_half_angle"], "map.cone_half_angle");
        if (!(spec.cone_half_angle > 0.0 && spec.cone_half_angle < std::numbers::pi / 4)) {
            throw ConfigInvalid("map.cone_half_angle", "must lie in (0, pi/4)");
        }
    }
    if (v.contains("cone_grid")) {
        const auto g = integer_at(v["cone_grid"], "map.cone_grid");
        if (g < 16 || g > 8192) throw ConfigInvalid("map.cone_grid", "must lie in [16, 8192]");
        spec.cone_grid = static_cast<int>(g);
    }
    return spec;
}

TargetSpec parse_target(const json& v, const std::string& field) {
    object_at(v, field);
    require_keys(v, field, {"type", "point", "seed", "max_period", "start", "length", "components"});
    if (!v.contains("type")) throw ConfigInvalid(field + ".type", "missing");
    const std::string type = string_at(v["type"], field + ".type");
    TargetSpec t;
    if (type == "lebesgue") {
        t.kind = TargetKind::lebesgue;
    } else if (type == "dirac") {
        t.kind = TargetKind::dirac;
        if (!v.contains("point")) throw ConfigInvalid(field + ".point", "missing");
        t.point = point_at(v["point"], field + ".point");
    } else if (type == "periodic") {
        t.kind = TargetKind::periodic;
        if (!v.contains("seed")) throw ConfigInvalid(field + ".seed", "missing");
        t.point = point_at(v["seed"], field + ".seed");
        if (v.contains("max_period")) {
            const auto p = integer_at(v["max_period"], field + ".max_period");
            if (p < 1 || p > 100000) throw ConfigInvalid(field + ".max_period", "must lie in [1, 1e5]");
            t.max_period = static_cast<int>(p);
        }
    } else if (type == "empirical") {
        t.kind = TargetKind::empirical;
        if (!v.contains("start") || !v.contains("length")) throw ConfigInvalid(field, "needs start and length");
        t.point = point_at(v["start"], field + ".start");
        const auto n = integer_at(v["length"], field + ".length");
        if (n < 1 || n > 100000000) throw ConfigInvalid(field + ".length", "must lie in [1, 1e8]");
        t.length = static_cast<std::size_t>(n);
    } else if (type == "mixture") {
        t.kind = TargetKind::mixture;
        const std::string cf = field + ".components";
        if (!v.contains("components") || !v["components"].is_array() || v["components"].empty()) {
            throw ConfigInvalid(cf, "expected a non-empty array");
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < v["components"].size(); ++i) {
            const std::string f = cf + "[" + std::to_string(i) + "]";
            const json& c = v["components"][i];
            object_at(c, f);
            require_keys(c, f, {"weight", "target"});
            if (!c.contains("weight") || !c.contains("target")) throw ConfigInvalid(f, "needs weight and target");
            const double w = number_at(c["weight"], f + ".weight");
            if (w < 0.0) throw ConfigInvalid(f + ".weight", "must be >= 0");
            sum += w;
            t.components.emplace_back(w, parse_target(c["target"], f + ".target"));
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigInvalid(cf, "weights must sum to 1");
    } else {
        throw ConfigInvalid(field + ".type", "unknown target type '" + type + "'");
    }
    return t;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json point_json(const TorusPoint& p) { return json::array({p.x1(), p.x2()}); }

json target_json(const TargetSpec& t) {
    json j{{"type", to_string(t.kind)}};
    switch (t.kind) {
        case TargetKind::lebesgue: break;
        case TargetKind::dirac: j["point"] = point_json(t.point); break;
        case TargetKind::periodic:
            j["seed"] = point_json(t.point);
            j["max_period"] = t.max_period;
            break;
        case TargetKind::empirical:
            j["start"] = point_json(t.point);
            j["length"] = t.length;
            break;
        case TargetKind::mixture:
            j["components"] = json::array();
            for (const auto& [w, c] : t.components) j["components"].push_back({{"weight", w}, {"target", target_json(c)}});
            break;
    }
    return j;
}

void flatten_mixture(const TargetSpec& spec, double weight, std::vector<std::pair<double, const TargetSpec*>>& out) {
    if (spec.kind == TargetKind::mixture) {
        for (const auto& [w, c] : spec.components) flatten_mixture(c, weight * w, out);
    } else {
        out.emplace_back(weight, &spec);
    }
}

DiscreteMeasure periodic_orbit_measure(const HyperbolicToralMap& map, const TorusPoint& seed, int max_period) {
    std::vector<TorusPoint> orbit{seed};
    TorusPoint x = seed;
    for (int p = 1; p <= max_period; ++p) {
        x = map.step(x);
        if (torus_distance(x, seed) < 1e-9) return DiscreteMeasure::uniform(orbit);
        orbit.push_back(x);
    }
    std::ostringstream os;
    os << "seed (" << seed.x1() << ", " << seed.x2() << ") has no period <= " << max_period;
    throw ConfigInvalid("target.seed", os.str());
}

SimpleSource simple_source(const TargetSpec& spec, const HyperbolicToralMap& map, const EntropySpec& entropy) {
    switch (spec.kind) {
        case TargetKind::lebesgue: return OrbitSource{entropy.orbit_start, entropy.orbit_length};
        case TargetKind::empirical: return OrbitSource{spec.point, spec.length};
        case TargetKind::dirac: return DiscreteMeasure::dirac(spec.point);
        case TargetKind::periodic: return periodic_orbit_measure(map, spec.point, spec.max_period);
        case TargetKind::mixture: break;
    }
    throw Error("nested mixture in simple source");
}

json cone_json(const ConeReport& r) {
    return {{"lambda_expand", r.lambda_expand},
            {"lambda_contract", r.lambda_contract},
            {"cone_half_angle", r.cone_half_angle},
            {"grid_resolution", r.grid_resolution},
            {"pass", r.pass},
            {"first_violation", point_json(r.first_violation)}};
}

json estimate_json(const RateEstimate& e) {
    json res = json::array();
    for (const auto& [n, r] : e.residuals) res.push_back({{"n", n}, {"residual", r}});
    return {{"epsilon", e.epsilon},     {"slope", e.slope},
            {"stderr", e.stderr_slope}, {"intercept", e.intercept},
            {"n_min", e.window.n_min},  {"n_max", e.window.n_max},
            {"censored", e.censored},   {"min_hits", e.min_hits},
            {"valid", e.valid},         {"note", e.note},
            {"residuals", res}};
}

json curve_json(const BasinCurve& c) {
    json rows = json::array();
    for (const auto& r : c.rows) {
        rows.push_back({{"n", r.n},
                        {"hits", r.hits},
                        {"samples", r.samples},
                        {"fraction", r.fraction()},
                        {"log_fraction", r.hits ? json(r.log_fraction()) : json(nullptr)}});
    }
    return {{"epsilon", c.epsilon}, {"rows", rows}};
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_file(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string curves_csv(const json& curves) {
    std::string out = "epsilon,n,hits,samples,log_fraction\n";
    for (const auto& c : curves) {
        for (const auto& r : c["rows"]) {
            out += format_number(c["epsilon"].get<double>()) + "," + std::to_string(r["n"].get<int>()) + "," +
                   std::to_string(r["hits"].get<std::uint64_t>()) + "," +
                   std::to_string(r["samples"].get<std::uint64_t>()) + "," +
                   (r["log_fraction"].is_null() ? std::string("-inf")
                                                : format_number(r["log_fraction"].get<double>())) +
                   "\n";
        }
    }
    return out;
}

std::string sweep_csv(const json& estimates) {
    std::string out = "epsilon,slope,stderr,intercept,n_min,n_max,valid,censored\n";
    for (const auto& e : estimates) {
        std::string censored;
        for (const auto& n : e["censored"]) censored += (censored.empty() ? "" : " ") + std::to_string(n.get<int>());
        out += format_number(e["epsilon"].get<double>()) + "," + format_number(e["slope"].get<double>()) + "," +
               format_number(e["stderr"].get<double>()) + "," + format_number(e["intercept"].get<double>()) + "," +
               std::to_string(e["n_min"].get<int>()) + "," + std::to_string(e["n_max"].get<int>()) + "," +
               (e["valid"].get<bool>() ? "true" : "false") + "," + csv_escape(censored) + "\n";
    }
    return out;
}

}  // namespace

std::string to_string(TargetKind k) {
    switch (k) {
        case TargetKind::lebesgue: return "lebesgue";
        case TargetKind::dirac: return "dirac";
        case TargetKind::periodic: return "periodic";
        case TargetKind::mixture: return "mixture";
        case TargetKind::empirical: return "empirical";
    }
    return "lebesgue";
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string git_blob_hash(const std::string& bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw Error("SHA-1 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string config_hash(const json& doc) { return git_blob_hash(doc.dump()); }

HyperbolicToralMap admitted_map(const MapSpec& spec, ConeReport* report) {
    std::optional<HyperbolicToralMap> map;
    try {
        map.emplace(spec.build());
    } catch (const InvalidMap& e) {
        const std::string what = e.what();
        throw ConfigInvalid(what.find("hyperbolicity") != std::string::npos ? "map.matrix" : "map.perturbation", what);
    }
    const ConeReport cone = inspect_hyperbolicity(*map, spec.cone_grid, spec.cone_half_angle);
    if (report) *report = cone;
    if (!cone.pass) {
        std::ostringstream os;
        os << "hyperbolicity check failed: cone condition violated near (" << cone.first_violation.x1() << ", "
           << cone.first_violation.x2() << ") with lambda_expand = " << cone.lambda_expand
           << ", lambda_contract = " << cone.lambda_contract;
        throw ConfigInvalid("map", os.str());
    }
    return *map;
}

ExperimentConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigInvalid("(root)", "expected a JSON object");
    require_keys(doc, "", {"name", "map", "family", "grid", "target", "epsilons", "n_values", "n_range", "window",
                           "min_hits", "verdict_tol", "expect_verdict", "lyapunov", "entropy", "output_dir"});
    ExperimentConfig c;
    c.source = doc;
    if (doc.contains("name")) {
        c.name = string_at(doc["name"], "name");
        if (c.name.empty() || c.name.find_first_not_of("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"
                                                       "0123456789_.-") != std::string::npos) {
            throw ConfigInvalid("name", "use letters, digits, '_', '.', '-' only");
        }
    }
    if (doc.contains("map")) c.map = parse_map(doc["map"]);
    if (doc.contains("family")) {
        const json& f = object_at(doc["family"], "family");
        require_keys(f, "family", {"K", "version"});
        if (f.contains("K")) {
            const auto k = integer_at(f["K"], "family.K");
            if (k < 1 || k > 1000) throw ConfigInvalid("family.K", "must lie in [1, 1000]");
            c.family.size = static_cast<int>(k);
        }
        if (f.contains("version")) {
            c.family.version = string_at(f["version"], "family.version");
            if (c.family.version != TestFunctionFamily::kVersion) {
                throw ConfigInvalid("family.version", "unsupported enumeration '" + c.family.version + "'");
            }
        }
    }
    if (doc.contains("grid")) {
        const json& g = object_at(doc["grid"], "grid");
        require_keys(g, "grid", {"resolution", "jitter", "seed"});
        if (g.contains("resolution")) {
            const auto r = integer_at(g["resolution"], "grid.resolution");
            if (r < 1 || r > 65536) throw ConfigInvalid("grid.resolution", "must lie in [1, 65536]");
            c.grid.resolution = static_cast<int>(r);
        }
        if (g.contains("jitter")) c.grid.jitter = bool_at(g["jitter"], "grid.jitter");
        if (g.contains("seed")) {
            c.grid.seed = unsigned_at(g["seed"], "grid.seed");
        }
    }
    if (doc.contains("target")) c.target = parse_target(doc["target"], "target");
    if (doc.contains("epsilons")) {
        const json& e = doc["epsilons"];
        if (!e.is_array()) throw ConfigInvalid("epsilons", "expected an array");
        for (std::size_t i = 0; i < e.size(); ++i) {
            const double x = number_at(e[i], "epsilons[" + std::to_string(i) + "]");
            if (!(x > 0.0)) throw ConfigInvalid("epsilons", "values must be > 0");
            if (!c.epsilons.empty() && !(x < c.epsilons.back())) {
                throw ConfigInvalid("epsilons", "values must be strictly decreasing");
            }
            c.epsilons.push_back(x);
        }
    }
    if (doc.contains("n_values") && doc.contains("n_range")) {
        throw ConfigInvalid("n_range", "give either n_values or n_range, not both");
    }
    if (doc.contains("n_values")) c.n_values = increasing_ints(doc["n_values"], "n_values");
    if (doc.contains("n_range")) c.n_values = n_range_at(doc["n_range"], "n_range");
    if (!c.epsilons.empty() && c.n_values.empty()) throw ConfigInvalid("n_values", "required when epsilons are given");
    if (!c.n_values.empty()) c.window = {c.n_values.front(), c.n_values.back()};
    if (doc.contains("window")) {
        const json& w = object_at(doc["window"], "window");
        require_keys(w, "window", {"n_min", "n_max"});
        if (w.contains("n_min")) c.window.n_min = static_cast<int>(integer_at(w["n_min"], "window.n_min"));
        if (w.contains("n_max")) c.window.n_max = static_cast<int>(integer_at(w["n_max"], "window.n_max"));
        if (c.window.n_min > c.window.n_max) throw ConfigInvalid("window", "n_min must not exceed n_max");
    }
    if (doc.contains("min_hits")) {
        c.min_hits = unsigned_at(doc["min_hits"], "min_hits");
    }
    if (doc.contains("verdict_tol")) {
        c.verdict_tol = number_at(doc["verdict_tol"], "verdict_tol");
        if (c.verdict_tol < 0.0) throw ConfigInvalid("verdict_tol", "must be >= 0");
    }
    if (doc.contains("expect_verdict")) {
        const std::string v = string_at(doc["expect_verdict"], "expect_verdict");
        if (v == "consistent_with_zero") {
            c.expect_verdict = Verdict::consistent_with_zero;
        } else if (v == "negative_rate") {
            c.expect_verdict = Verdict::negative_rate;
        } else if (v == "inconclusive") {
            c.expect_verdict = Verdict::inconclusive;
        } else {
            throw ConfigInvalid("expect_verdict", "unknown verdict '" + v + "'");
        }
    }
    if (doc.contains("lyapunov")) {
        const json& l = object_at(doc["lyapunov"], "lyapunov");
        require_keys(l, "lyapunov", {"warmup", "grid_resolution", "qr_steps", "qr_point"});
        LyapunovSpec spec;
        if (l.contains("warmup")) {
            const auto w = integer_at(l["warmup"], "lyapunov.warmup");
            if (w < 1 || w > 10000) throw ConfigInvalid("lyapunov.warmup", "must lie in [1, 10000]");
            spec.warmup = static_cast<int>(w);
        }
        if (l.contains("grid_resolution")) {
            const auto g = integer_at(l["grid_resolution"], "lyapunov.grid_resolution");
            if (g < 1 || g > 16384) throw ConfigInvalid("lyapunov.grid_resolution", "must lie in [1, 16384]");
            spec.grid_resolution = static_cast<int>(g);
        }
        if (l.contains("qr_steps")) {
            const auto n = integer_at(l["qr_steps"], "lyapunov.qr_steps");
            if (n != 0 && (n < 100 || n > 1000000000)) throw ConfigInvalid("lyapunov.qr_steps", "0 or >= 100");
            spec.qr_steps = static_cast<std::size_t>(n);
        }
        if (l.contains("qr_point")) spec.qr_point = point_at(l["qr_point"], "lyapunov.qr_point");
        c.lyapunov = spec;
    }
    if (doc.contains("entropy")) {
        const json& e = object_at(doc["entropy"], "entropy");
        require_keys(e, "entropy",
                     {"n_values", "orbit_start", "orbit_length", "bound_epsilon", "bound_n", "bound_tolerance"});
        EntropySpec spec;
        spec.n_values = e.contains("n_values") ? increasing_ints(e["n_values"], "entropy.n_values")
                                               : std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
        if (spec.n_values.back() > max_itinerary_depth(3)) {
            throw ConfigInvalid("entropy.n_values", "depth exceeds " + std::to_string(max_itinerary_depth(3)));
        }
        if (e.contains("orbit_start")) spec.orbit_start = point_at(e["orbit_start"], "entropy.orbit_start");
        if (e.contains("orbit_length")) {
            const auto n = integer_at(e["orbit_length"], "entropy.orbit_length");
            if (n < 1 || n > 1000000000) throw ConfigInvalid("entropy.orbit_length", "must lie in [1, 1e9]");
            spec.orbit_length = static_cast<std::size_t>(n);
        }
        if (e.contains("bound_epsilon")) {
            const double b = number_at(e["bound_epsilon"], "entropy.bound_epsilon");
            if (!(b > 0.0 && b < 0.25)) throw ConfigInvalid("entropy.bound_epsilon", "must lie in (0, 1/4)");
            spec.bound_epsilon = b;
        }
        if (e.contains("bound_n")) {
            const auto n = integer_at(e["bound_n"], "entropy.bound_n");
            if (n < 1 || n > max_itinerary_depth(3)) throw ConfigInvalid("entropy.bound_n", "out of range");
            spec.bound_n = static_cast<int>(n);
        }
        if (e.contains("bound_tolerance")) {
            spec.bound_tolerance = number_at(e["bound_tolerance"], "entropy.bound_tolerance");
            if (spec.bound_tolerance < 0.0) throw ConfigInvalid("entropy.bound_tolerance", "must be >= 0");
        }
        c.entropy = spec;
    }
    if (doc.contains("output_dir")) c.output_dir = string_at(doc["output_dir"], "output_dir");

    admitted_map(c.map);
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigInvalid("(file)", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigInvalid("(file)", std::string("not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

MeasureRep resolve_target(const HyperbolicToralMap& map, const TargetSpec& spec) {
    switch (spec.kind) {
        case TargetKind::lebesgue: return MeasureRep::lebesgue();
        case TargetKind::dirac: return MeasureRep::discrete(DiscreteMeasure::dirac(spec.point));
        case TargetKind::periodic: return MeasureRep::discrete(periodic_orbit_measure(map, spec.point, spec.max_period));
        case TargetKind::empirical: return MeasureRep::discrete(empirical_measure(map, spec.point, spec.length));
        case TargetKind::mixture: break;
    }
    std::vector<std::pair<double, const TargetSpec*>> parts;
    flatten_mixture(spec, 1.0, parts);
    double leb = 0.0;
    std::vector<std::pair<double, DiscreteMeasure>> discrete;
    for (const auto& [w, s] : parts) {
        if (s->kind == TargetKind::lebesgue) {
            leb += w;
        } else if (w > 0.0) {
            discrete.emplace_back(w, *resolve_target(map, *s).discrete_part());
        }
    }
    if (discrete.empty()) return MeasureRep::lebesgue();
    std::vector<TorusPoint> atoms;
    std::vector<double> weights;
    double total = 0.0;
    for (const auto& [w, d] : discrete) total += w;
    for (const auto& [w, d] : discrete) {
        for (std::size_t i = 0; i < d.size(); ++i) {
            atoms.push_back(d.atoms()[i]);
            weights.push_back(w / total * d.weights()[i]);
        }
    }
    double sum = 0.0;
    for (double w : weights) sum += w;
    for (double& w : weights) w /= sum;
    DiscreteMeasure merged = DiscreteMeasure(std::move(atoms), std::move(weights)).coalesced();
    if (leb <= 0.0) return MeasureRep::discrete(std::move(merged));
    return MeasureRep::mixture(std::min(leb, 1.0), std::move(merged));
}

CylinderSource entropy_source(const TargetSpec& spec, const HyperbolicToralMap& map, const EntropySpec& entropy) {
    if (spec.kind != TargetKind::mixture) {
        return std::visit([](auto&& s) -> CylinderSource { return s; }, simple_source(spec, map, entropy));
    }
    std::vector<std::pair<double, const TargetSpec*>> parts;
    flatten_mixture(spec, 1.0, parts);
    MixtureSource mix;
    for (const auto& [w, s] : parts) mix.components.emplace_back(w, simple_source(*s, map, entropy));
    return mix;
}

json environment_stamp(int threads) {
    json env;
#if defined(__clang__)
    env["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    env["compiler"] = std::string("gcc ") + __VERSION__;
#else
    env["compiler"] = "unknown";
#endif
#if defined(__x86_64__)
    env["arch"] = "x86_64";
#elif defined(__aarch64__)
    env["arch"] = "aarch64";
#else
    env["arch"] = "other";
#endif
#if defined(__FAST_MATH__)
    env["fast_math"] = true;
#else
    env["fast_math"] = false;
#endif
#if defined(__FMA__)
    env["fma"] = true;
#else
    env["fma"] = false;
#endif
    env["flt_eval_method"] = FLT_EVAL_METHOD;
    env["long_double_digits"] = std::numeric_limits<long double>::digits;
    env["threads"] = threads;
    env["library"] = "toruslab";
    return env;
}

json ExperimentRecord::to_json() const {
    json j;
    j["name"] = config.name;
    j["config"] = config.source;
    j["config_hash"] = config_hash;
    j["family"] = {{"K", config.family.size}, {"version", config.family.version}};
    j["grid"] = {{"resolution", config.grid.resolution}, {"jitter", config.grid.jitter}, {"seed", config.grid.seed}};
    j["target"] = target_json(config.target);
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["environment"] = environment;
    if (cone) j["cone"] = cone_json(*cone);
    if (sweep) {
        json curves = json::array(), estimates = json::array();
        for (const auto& c : sweep->curves) curves.push_back(curve_json(c));
        for (const auto& e : sweep->estimates) estimates.push_back(estimate_json(e));
        j["basin"] = {{"window", {{"n_min", config.window.n_min}, {"n_max", config.window.n_max}}},
                      {"min_hits", config.min_hits},
                      {"verdict_tol", config.verdict_tol},
                      {"curves", curves},
                      {"estimates", estimates},
                      {"trend", to_string(sweep->trend)},
                      {"last_valid", sweep->last_valid ? estimate_json(*sweep->last_valid) : json(nullptr)},
                      {"verdict", verdict ? json(to_string(*verdict)) : json(nullptr)}};
    }
    if (unstable_integral || spectrum) {
        json l;
        if (config.lyapunov) {
            l["warmup"] = config.lyapunov->warmup;
            l["grid_resolution"] = config.lyapunov->grid_resolution;
        }
        l["unstable_integral"] = unstable_integral ? json(*unstable_integral) : json(nullptr);
        if (spectrum) {
            l["spectrum"] = {{"chi_plus", spectrum->chi_plus},
                             {"chi_minus", spectrum->chi_minus},
                             {"n_steps", spectrum->n_steps}};
        }
        j["lyapunov"] = l;
    }
    if (entropy || count_rate || bound) {
        json e;
        if (entropy) {
            json levels = json::array();
            for (const auto& l : entropy->levels) {
                levels.push_back({{"n", l.n},
                                  {"entropy", l.entropy},
                                  {"rate", l.rate},
                                  {"observed", l.observed},
                                  {"admissible", static_cast<double>(l.admissible)},
                                  {"adequate", l.adequate}});
            }
            e["rate"] = entropy->rate;
            e["depth"] = entropy->depth;
            e["levels"] = levels;
            e["non_exact_partition"] = entropy->non_exact_partition;
        }
        if (count_rate) {
            json rates = json::array();
            for (const auto& [n, r] : count_rate->rates) rates.push_back({{"n", n}, {"rate", r}});
            e["count_rate"] = {{"rates", rates}, {"k0", count_rate->k0}};
        }
        if (bound) {
            e["bound"] = {{"lhs", bound->lhs},         {"rhs", bound->rhs},
                          {"margin", bound->margin},   {"entropy", bound->entropy},
                          {"k0", bound->k0},           {"epsilon", bound->epsilon},
                          {"n", bound->n},             {"covered", bound->covered},
                          {"observed", bound->observed}, {"covered_mass", bound->covered_mass}};
        }
        j["entropy"] = e;
    }
    if (pesin_defect || !rate_residuals.empty()) {
        json rr = json::array();
        for (const auto& [eps, r] : rate_residuals) rr.push_back({{"epsilon", eps}, {"residual", r}});
        j["residuals"] = {{"pesin_defect", pesin_defect ? json(*pesin_defect) : json(nullptr)}, {"rate", rr}};
    }
    j["warnings"] = warnings;
    json errs = json::array();
    for (const auto& e : errors) errs.push_back({{"stage", e.stage}, {"message", e.message}});
    j["errors"] = errs;
    j["failures"] = failures;
    return j;
}

ExperimentRecord run(const ExperimentConfig& config, int threads) {
    ExperimentRecord rec;
    rec.config = config;
    rec.config_hash = config_hash(config.source);
    rec.started_at = utc_now();
    rec.environment = environment_stamp(threads);

    ConeReport cone;
    const HyperbolicToralMap map = admitted_map(config.map, &cone);
    rec.cone = cone;
    const TestFunctionFamily family(config.family.size);
    const MeasureRep target = resolve_target(map, config.target);

    auto stage = [&](const char* name, auto&& body) {
        try {
            body();
        } catch (const std::exception& e) {
            rec.errors.push_back({name, e.what()});
        }
    };

    if (!config.epsilons.empty()) {
        stage("basin", [&] {
            const MomentVector m = moments(target, family);
            rec.sweep = epsilon_sweep(map, m, config.epsilons, config.n_values, config.grid, family, config.window,
                                      config.min_hits, threads);
            for (const auto& e : rec.sweep->estimates) {
                if (!e.valid) rec.warnings.push_back("epsilon " + format_number(e.epsilon) + ": " + e.note);
            }
        });
        if (rec.sweep) {
            stage("verdict", [&] {
                rec.verdict = weak_pseudo_physical_verdict(rec.sweep->estimates, config.verdict_tol);
                if (config.expect_verdict && *rec.verdict != *config.expect_verdict) {
                    rec.failures.push_back("verdict " + to_string(*rec.verdict) + ", expected " +
                                           to_string(*config.expect_verdict));
                }
            });
        }
    }
    if (config.lyapunov) {
        const LyapunovSpec& l = *config.lyapunov;
        stage("lyapunov", [&] {
            rec.unstable_integral = unstable_integral(map, target, l.warmup, l.grid_resolution, threads);
        });
        if (l.qr_steps > 0) {
            stage("lyapunov_qr", [&] { rec.spectrum = lyapunov_spectrum_qr(map, l.qr_point, l.qr_steps, l.warmup); });
        }
    }
    if (config.entropy) {
        const EntropySpec& e = *config.entropy;
        stage("entropy", [&] {
            const MarkovPartition partition = cat_map_partition();
            const CylinderSource source = entropy_source(config.target, map, e);
            rec.entropy = entropy_rate_estimate(map, partition, source, e.n_values, threads);
            for (const auto& w : rec.entropy->warnings) rec.warnings.push_back(w);
            rec.count_rate = cylinder_count_rate(partition, e.n_values);
            if (e.bound_epsilon) {
                rec.bound = entropy_count_bound_check(map, partition, source, *e.bound_epsilon, e.bound_n, threads);
                if (rec.bound->margin < -e.bound_tolerance) {
                    rec.failures.push_back("count bound margin " + format_number(rec.bound->margin) +
                                           " below -" + format_number(e.bound_tolerance));
                }
            }
        });
    }
    if (rec.entropy && rec.unstable_integral) {
        rec.pesin_defect = pesin_defect(rec.entropy->rate, *rec.unstable_integral);
        if (rec.sweep) {
            for (const auto& est : rec.sweep->estimates) {
                if (est.valid) {
                    rec.rate_residuals.emplace_back(
                        est.epsilon, pesin_rate_residual(est.slope, rec.entropy->rate, *rec.unstable_integral));
                }
            }
        }
    }
    rec.finished_at = utc_now();
    return rec;
}

std::vector<fs::path> persist(const ExperimentRecord& record, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<fs::path> out;
    const json j = record.to_json();
    const fs::path main = dir / (record.config.name + ".json");
    write_file(main, j.dump(2) + "\n");
    out.push_back(main);
    if (j.contains("basin")) {
        const fs::path curves = dir / (record.config.name + "-curves.csv");
        write_file(curves, curves_csv(j["basin"]["curves"]));
        out.push_back(curves);
        const fs::path sweep = dir / (record.config.name + "-sweep.csv");
        write_file(sweep, sweep_csv(j["basin"]["estimates"]));
        out.push_back(sweep);
    }
    return out;
}

ReportFormat parse_report_format(const std::string& s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    if (s == "plotdata") return ReportFormat::plotdata;
    throw Error("unknown report format '" + s + "' (csv, json, plotdata)");
}

ReportOutput report(const std::vector<fs::path>& records, ReportFormat format, const fs::path& out_dir) {
    if (records.empty()) throw MissingRecord("no record paths given");
    struct Loaded {
        fs::path path;
        json doc;
        std::string stem;
    };
    std::vector<Loaded> loaded;
    for (const auto& p : records) {
        if (!fs::is_regular_file(p)) throw MissingRecord("record not found: " + p.string());
        std::ifstream in(p, std::ios::binary);
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::parse_error&) {
            throw MissingRecord("not a JSON record: " + p.string());
        }
        if (!doc.is_object() || !doc.contains("config_hash") || !doc.contains("family") || !doc.contains("name")) {
            throw MissingRecord("not an experiment record: " + p.string());
        }
        const std::string stem =
            doc["name"].get<std::string>() + "-" + doc["config_hash"].get<std::string>().substr(0, 8);
        loaded.push_back({p, std::move(doc), stem});
    }

    std::map<std::pair<int, std::string>, std::vector<const Loaded*>> groups;
    for (const auto& l : loaded) {
        groups[{l.doc["family"]["K"].get<int>(), l.doc["family"]["version"].get<std::string>()}].push_back(&l);
    }
    ReportOutput out;
    if (groups.size() > 1) {
        std::string which;
        for (const auto& [key, members] : groups) {
            which += (which.empty() ? "" : ", ") + std::string("K=") + std::to_string(key.first) + " (" +
                     std::to_string(members.size()) + " record" + (members.size() == 1 ? "" : "s") + ")";
        }
        out.warnings.push_back("records use different test-function families (" + which +
                               "); distance-dependent tables are written per family, not merged");
    }
    auto group_suffix = [&](const std::pair<int, std::string>& key) {
        return groups.size() > 1 ? "-K" + std::to_string(key.first) : std::string();
    };
    fs::create_directories(out_dir);
    auto emit = [&](const fs::path& p, const std::string& content) {
        write_file(p, content);
        out.files.push_back(p);
    };

    switch (format) {
        case ReportFormat::csv: {
            for (const auto& l : loaded) {
                if (!l.doc.contains("basin")) {
                    out.warnings.push_back(l.path.string() + " has no basin curves");
                    continue;
                }
                const json& curves = l.doc["basin"]["curves"];
                for (std::size_t i = 0; i < curves.size(); ++i) {
                    emit(out_dir / (l.stem + "-curve" + std::to_string(i) + ".csv"),
                         curves_csv(json::array({curves[i]})));
                }
            }
            if (loaded.size() > 1) {
                for (const auto& [key, members] : groups) {
                    std::string table = "record,config_hash,K,epsilon,n,hits,samples,log_fraction\n";
                    for (const Loaded* l : members) {
                        if (!l->doc.contains("basin")) continue;
                        std::istringstream rows(curves_csv(l->doc["basin"]["curves"]));
                        std::string line;
                        std::getline(rows, line);
                        while (std::getline(rows, line)) {
                            table += csv_escape(l->doc["name"].get<std::string>()) + "," +
                                     l->doc["config_hash"].get<std::string>() + "," + std::to_string(key.first) +
                                     "," + line + "\n";
                        }
                    }
                    emit(out_dir / ("merged-curves" + group_suffix(key) + ".csv"), table);
                }
            }
            break;
        }
        case ReportFormat::json: {
            for (const auto& [key, members] : groups) {
                json doc;
                doc["family"] = {{"K", key.first}, {"version", key.second}};
                doc["records"] = json::array();
                for (const Loaded* l : members) {
                    json summary{{"path", l->path.string()},
                                 {"name", l->doc["name"]},
                                 {"config_hash", l->doc["config_hash"]},
                                 {"started_at", l->doc.value("started_at", "")},
                                 {"environment", l->doc.value("environment", json::object())}};
                    for (const char* k : {"cone", "basin", "lyapunov", "entropy", "residuals", "warnings", "errors",
                                          "failures"}) {
                        if (l->doc.contains(k)) summary[k] = l->doc[k];
                    }
                    doc["records"].push_back(summary);
                }
                doc["warnings"] = out.warnings;
                emit(out_dir / ("report" + group_suffix(key) + ".json"), doc.dump(2) + "\n");
            }
            break;
        }
        case ReportFormat::plotdata: {
            for (const auto& l : loaded) {
                if (!l.doc.contains("basin")) {
                    out.warnings.push_back(l.path.string() + " has no basin curves");
                    continue;
                }
                const json& basin = l.doc["basin"];
                for (std::size_t i = 0; i < basin["curves"].size(); ++i) {
                    std::string csv = "n,log_fraction\n";
                    for (const auto& r : basin["curves"][i]["rows"]) {
                        if (r["log_fraction"].is_null()) continue;
                        csv += std::to_string(r["n"].get<int>()) + "," +
                               format_number(r["log_fraction"].get<double>()) + "\n";
                    }
                    emit(out_dir / (l.stem + "-curve" + std::to_string(i) + "-plot.csv"), csv);
                }
                std::string sweep = "epsilon,slope,stderr\n";
                for (const auto& e : basin["estimates"]) {
                    if (!e["valid"].get<bool>()) continue;
                    sweep += format_number(e["epsilon"].get<double>()) + "," +
                             format_number(e["slope"].get<double>()) + "," + format_number(e["stderr"].get<double>()) +
                             "\n";
                }
                emit(out_dir / (l.stem + "-sweep-plot.csv"), sweep);
            }
            break;
        }
    }
    return out;
}

json partition_geometry_json(const MarkovPartition& partition) {
    json pieces = json::array();
    for (std::size_t i = 0; i < partition.pieces().size(); ++i) {
        const auto& p = partition.pieces()[i];
        json polys = json::array();
        for (const auto& poly : p.polygons) {
            json verts = json::array();
            for (const auto& v : poly.vertices) verts.push_back({v.x, v.y});
            polys.push_back(verts);
        }
        pieces.push_back({{"index", i}, {"area", p.area}, {"diameter", p.diameter}, {"polygons", polys}});
    }
    return pieces;
}

std::string cylinder_table_csv(const CylinderTable& table) {
    std::string out = "itinerary,count\n";
    for (const auto& [key, count] : table.entries()) {
        out += table.decode(key).to_string() + "," + std::to_string(count) + "\n";
    }
    return out;
}

}  // namespace toruslab
