#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "toruslab/experiment.hpp"

namespace toruslab {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    std::string summary;
    std::vector<std::string> details;
    double seconds = 0.0;
};

struct AcceptanceOptions {
    int threads = 1;
    /// Criteria to run; empty runs all ten.
    std::vector<int> only;
    /// Grid for the Dirac-rate criterion (2048, optionally 4096).
    int dirac_grid = 2048;
    /// When set, every runner-backed criterion persists its record here.
    std::filesystem::path record_dir;
};

inline constexpr int kCriterionCount = 10;

std::string criterion_title(int id);

/// Registered runner configs (criteria 4, 5, 9 and 10); throws for other ids.
ExperimentConfig acceptance_config(int id, const AcceptanceOptions& options = {});

/// Runs one criterion and reports its measured values against pinned tolerances.
CriterionResult run_criterion(int id, const AcceptanceOptions& options);

/// Runs the selected criteria, printing one PASS/FAIL line each (details indented below).
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out);

}  // namespace toruslab
