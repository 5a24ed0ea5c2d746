#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gradepreview {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct AcceptanceOptions {
    std::uint64_t training_seed = 100;
    std::uint64_t first_held_out_seed = 1;
    std::size_t held_out_seeds = 10;
    /// Run only these criteria (1..10); empty runs all.
    std::vector<int> only;
    /// Where run artifacts go; a temporary directory when unset.
    std::optional<std::filesystem::path> work_dir;
    /// Called as each criterion finishes.
    std::function<void(const CriterionResult&)> on_result;
};

/// Runs the acceptance suite and returns one result per criterion.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options = {});

/// "PASS  3  title  detail" style line.
std::string format_result(const CriterionResult& result);

} // namespace gradepreview
