#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "toruslab/experiment.hpp"

using namespace toruslab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal_doc(const std::string& name = "minimal") {
    return json{{"name", name},
                {"map", {{"matrix", json::parse("[[2, 1], [1, 1]]")}}},
                {"grid", {{"resolution", 64}}},
                {"target", {{"type", "lebesgue"}}},
                {"epsilons", {0.2}},
                {"n_range", {{"min", 30}, {"max", 50}}},
                {"verdict_tol", 0.02},
                {"expect_verdict", "consistent_with_zero"}};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("toruslab-test-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string field_of(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigInvalid& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST(Config, MinimalRunReachesLebesgue) {
    const auto cfg = parse_config(minimal_doc());
    EXPECT_EQ(cfg.n_values.front(), 30);
    EXPECT_EQ(cfg.n_values.back(), 50);
    EXPECT_EQ(cfg.window.n_min, 30);
    const auto rec = run(cfg);
    EXPECT_TRUE(rec.errors.empty());
    EXPECT_TRUE(rec.failures.empty());
    ASSERT_TRUE(rec.sweep.has_value());
    const auto& last = rec.sweep->curves.front().rows.back();
    EXPECT_EQ(last.n, 50);
    EXPECT_GE(last.fraction(), 0.9);
    ASSERT_TRUE(rec.verdict.has_value());
    EXPECT_EQ(*rec.verdict, Verdict::consistent_with_zero);
    EXPECT_EQ(rec.config_hash.size(), 40u);
}

TEST(Config, HashIsStableAndContentSensitive) {
    EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
    const json a = minimal_doc();
    json b = json::parse(a.dump());
    EXPECT_EQ(config_hash(a), config_hash(b));
    b["grid"]["resolution"] = 65;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, RejectsNonHyperbolicMatrix) {
    json doc = minimal_doc();
    doc["map"]["matrix"] = json::parse("[[1, 0], [0, 1]]");
    try {
        parse_config(doc);
        FAIL() << "identity accepted";
    } catch (const ConfigInvalid& e) {
        EXPECT_EQ(e.field(), "map.matrix");
        EXPECT_NE(std::string(e.what()).find("hyperbolicity"), std::string::npos);
    }
}

TEST(Config, NamesTheOffendingField) {
    json doc = minimal_doc();
    doc["colour"] = "blue";
    EXPECT_EQ(field_of(doc), "colour");

    doc = minimal_doc();
    doc["epsilons"] = {0.1, 0.2};
    EXPECT_EQ(field_of(doc), "epsilons");

    doc = minimal_doc();
    doc["grid"]["resolution"] = "big";
    EXPECT_EQ(field_of(doc), "grid.resolution");

    doc = minimal_doc();
    doc["target"] = {{"type", "dirac"}};
    EXPECT_EQ(field_of(doc), "target.point");

    doc = minimal_doc();
    doc["target"] = {{"type", "mixture"},
                     {"components", {{{"weight", 0.5}, {"target", {{"type", "lebesgue"}}}}}}};
    EXPECT_EQ(field_of(doc), "target.components");

    doc = minimal_doc();
    doc["expect_verdict"] = "maybe";
    EXPECT_EQ(field_of(doc), "expect_verdict");

    doc = minimal_doc();
    doc["n_values"] = {1, 2, 3};
    EXPECT_EQ(field_of(doc), "n_range");
}

TEST(Config, TargetsResolve) {
    const auto map = HyperbolicToralMap::cat_map();
    TargetSpec periodic;
    periodic.kind = TargetKind::periodic;
    periodic.point = TorusPoint(0.5, 0.5);
    const auto mu = resolve_target(map, periodic);
    ASSERT_TRUE(mu.discrete_part().has_value());
    EXPECT_EQ(mu.discrete_part()->size(), 3u);
    EXPECT_TRUE(mu.is_discrete());

    periodic.point = TorusPoint(0.1234567, 0.7654321);
    EXPECT_THROW(resolve_target(map, periodic), ConfigInvalid);

    TargetSpec mix;
    mix.kind = TargetKind::mixture;
    TargetSpec leb;
    TargetSpec dirac;
    dirac.kind = TargetKind::dirac;
    mix.components = {{0.25, leb}, {0.75, dirac}};
    const auto m = resolve_target(map, mix);
    EXPECT_DOUBLE_EQ(m.lebesgue_weight(), 0.25);
    ASSERT_TRUE(m.discrete_part().has_value());
    EXPECT_EQ(m.discrete_part()->size(), 1u);
}

TEST(Record, PersistAndDeterminism) {
    const auto cfg = parse_config(minimal_doc("det"));
    const auto a = run(cfg, 1);
    const auto b = run(cfg, 2);
    json ja = a.to_json(), jb = b.to_json();
    EXPECT_EQ(ja["basin"], jb["basin"]);
    EXPECT_EQ(ja["config_hash"], jb["config_hash"]);

    const fs::path dir = scratch("persist");
    const auto files = persist(a, dir);
    ASSERT_EQ(files.size(), 3u);
    for (const auto& f : files) EXPECT_TRUE(fs::exists(f));
    const std::string curves = slurp(dir / "det-curves.csv");
    EXPECT_EQ(curves.substr(0, curves.find('\n')), "epsilon,n,hits,samples,log_fraction");
    const json back = json::parse(slurp(dir / "det.json"));
    EXPECT_EQ(back["config_hash"], ja["config_hash"]);
    EXPECT_EQ(back["basin"], ja["basin"]);
}

TEST(Report, CsvOneFilePerCurve) {
    json doc = minimal_doc("two");
    doc["epsilons"] = {0.3, 0.2};
    const fs::path dir = scratch("report-csv");
    persist(run(parse_config(doc)), dir);
    const fs::path out = dir / "out";
    const auto r = report({dir / "two.json"}, ReportFormat::csv, out);
    EXPECT_EQ(r.files.size(), 2u);
    for (const auto& f : r.files) {
        EXPECT_TRUE(fs::exists(f));
        EXPECT_NE(f.filename().string().find("-curve"), std::string::npos);
    }
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Report, FamilyMismatchSplitsOutputs) {
    const fs::path dir = scratch("report-k");
    json a = minimal_doc("k33");
    json b = minimal_doc("k9");
    b["family"] = {{"K", 9}};
    persist(run(parse_config(a)), dir);
    persist(run(parse_config(b)), dir);
    const fs::path out = dir / "out";
    const auto r = report({dir / "k33.json", dir / "k9.json"}, ReportFormat::json, out);
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_TRUE(fs::exists(out / "report-K33.json"));
    EXPECT_TRUE(fs::exists(out / "report-K9.json"));
    EXPECT_FALSE(fs::exists(out / "report.json"));

    const auto csv = report({dir / "k33.json", dir / "k9.json"}, ReportFormat::csv, dir / "csv");
    EXPECT_TRUE(fs::exists(dir / "csv" / "merged-curves-K33.csv"));
    EXPECT_TRUE(fs::exists(dir / "csv" / "merged-curves-K9.csv"));
}

TEST(Report, PlotdataColumns) {
    const fs::path dir = scratch("report-plot");
    persist(run(parse_config(minimal_doc("plot"))), dir);
    const auto r = report({dir / "plot.json"}, ReportFormat::plotdata, dir / "out");
    bool curve = false, sweep = false;
    for (const auto& f : r.files) {
        const std::string text = slurp(f);
        const std::string header = text.substr(0, text.find('\n'));
        if (f.filename().string().ends_with("-sweep-plot.csv")) {
            EXPECT_EQ(header, "epsilon,slope,stderr");
            sweep = true;
        } else {
            EXPECT_EQ(header, "n,log_fraction");
            curve = true;
        }
    }
    EXPECT_TRUE(curve);
    EXPECT_TRUE(sweep);
}

TEST(Report, MissingRecord) {
    const fs::path dir = scratch("report-missing");
    EXPECT_THROW(report({dir / "nope.json"}, ReportFormat::json, dir / "out"), MissingRecord);
    std::ofstream(dir / "junk.json") << "{\"a\": 1}";
    EXPECT_THROW(report({dir / "junk.json"}, ReportFormat::json, dir / "out"), MissingRecord);
    EXPECT_THROW(parse_report_format("xml"), Error);
}

TEST(Export, PartitionGeometryAndCylinderCsv) {
    const auto partition = cat_map_partition();
    const json geo = partition_geometry_json(partition);
    ASSERT_TRUE(geo.is_array());
    EXPECT_EQ(geo.size(), 3u);

    const CylinderTable t(2, 3, {{1, 4}, {5, 6}}, 10, false);
    EXPECT_EQ(cylinder_table_csv(t), "itinerary,count\n0.1,4\n1.2,6\n");
}

TEST(Export, NumberFormatting) {
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(-2.0), "-2");
    EXPECT_EQ(std::stod(format_number(0.96242365011920694)), 0.96242365011920694);
}
