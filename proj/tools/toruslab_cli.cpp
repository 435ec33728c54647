#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "toruslab/acceptance.hpp"
#include "toruslab/experiment.hpp"
#include "toruslab/parallel.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitFailed = 2;

void print_cone(const toruslab::ConeReport& r) {
    std::cout << "lambda_expand   " << r.lambda_expand << "\n"
              << "lambda_contract " << r.lambda_contract << "\n"
              << "cone_half_angle " << r.cone_half_angle << "\n"
              << "grid_resolution " << r.grid_resolution << "\n"
              << "pass            " << (r.pass ? "true" : "false") << "\n";
    if (!r.pass) {
        std::cout << "first_violation (" << r.first_violation.x1() << ", " << r.first_violation.x2() << ")\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toruslab: weak pseudo-physical measure experiments on the 2-torus"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, std::string("worker threads (overrides ") + toruslab::kThreadsEnv + ")")
        ->check(CLI::PositiveNumber);

    std::string run_config;
    std::string run_out;
    auto* run_cmd = app.add_subcommand("run", "run an experiment config and write its record");
    run_cmd->add_option("config", run_config, "config JSON")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--out", run_out, "output directory (defaults to the config's output_dir, else .)");

    std::vector<std::string> report_paths;
    std::string report_format = "csv";
    std::string report_out = ".";
    auto* report_cmd = app.add_subcommand("report", "merge persisted records into tables");
    report_cmd->add_option("records", report_paths, "record JSON files")->required();
    report_cmd->add_option("--format", report_format, "csv, json or plotdata")
        ->check(CLI::IsMember({"csv", "json", "plotdata"}));
    report_cmd->add_option("--out", report_out, "output directory");

    std::string verify_config;
    auto* verify_cmd = app.add_subcommand("verify-map", "cone check of the config's map");
    verify_cmd->add_option("config", verify_config, "config JSON")->required()->check(CLI::ExistingFile);

    std::vector<int> only;
    int dirac_grid = 2048;
    std::string records_dir;
    auto* acc_cmd = app.add_subcommand("acceptance", "run the registered acceptance suite");
    acc_cmd->add_option("--only", only, "criteria to run (1-10)")->check(CLI::Range(1, toruslab::kCriterionCount));
    acc_cmd->add_option("--dirac-grid", dirac_grid, "grid for the Dirac-rate criterion")
        ->check(CLI::IsMember({2048, 4096}));
    acc_cmd->add_option("--records", records_dir, "persist runner records into this directory");

    CLI11_PARSE(app, argc, argv);
    if (threads <= 0) threads = toruslab::default_thread_count();

    try {
        if (*run_cmd) {
            const auto config = toruslab::load_config(run_config);
            const auto record = toruslab::run(config, threads);
            const std::filesystem::path dir =
                !run_out.empty() ? std::filesystem::path(run_out)
                                 : (config.output_dir.empty() ? std::filesystem::path(".") : config.output_dir);
            for (const auto& p : toruslab::persist(record, dir)) std::cout << p.string() << "\n";
            for (const auto& w : record.warnings) std::cerr << "warning: " << w << "\n";
            for (const auto& e : record.errors) std::cerr << "error in " << e.stage << ": " << e.message << "\n";
            for (const auto& f : record.failures) std::cerr << "failed: " << f << "\n";
            if (record.verdict) std::cout << "verdict " << toruslab::to_string(*record.verdict) << "\n";
            if (!record.errors.empty()) return kExitError;
            return record.failures.empty() ? kExitOk : kExitFailed;
        }
        if (*report_cmd) {
            std::vector<std::filesystem::path> paths(report_paths.begin(), report_paths.end());
            const auto out = toruslab::report(paths, toruslab::parse_report_format(report_format), report_out);
            for (const auto& p : out.files) std::cout << p.string() << "\n";
            for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
            return kExitOk;
        }
        if (*verify_cmd) {
            const auto config = toruslab::load_config(verify_config);
            const auto map = config.map.build();
            const auto cone = toruslab::inspect_hyperbolicity(map, config.map.cone_grid, config.map.cone_half_angle);
            print_cone(cone);
            return cone.pass ? kExitOk : kExitFailed;
        }
        if (*acc_cmd) {
            toruslab::AcceptanceOptions options;
            options.threads = threads;
            options.only = only;
            options.dirac_grid = dirac_grid;
            options.record_dir = records_dir;
            const auto results = toruslab::run_acceptance(options, std::cout);
            for (const auto& r : results) {
                if (!r.pass) return kExitFailed;
            }
            return kExitOk;
        }
    } catch (const toruslab::ConfigInvalid& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
