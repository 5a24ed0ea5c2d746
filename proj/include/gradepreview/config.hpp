#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gradepreview/kalman.hpp"
#include "gradepreview/sim.hpp"
#include "gradepreview/types.hpp"

namespace gradepreview {

enum class RunMode { Simulate, Replay };

/// Everything a CLI run needs. Estimator defaults are the reference vehicle values.
struct RunConfig {
    RunMode mode = RunMode::Simulate;
    std::optional<std::string> scenario; // built-in scenario name or scenario file (simulate)
    std::optional<std::filesystem::path> data_dir; // replay directory (replay)
    EstimatorConfig estimator;
    std::filesystem::path output_dir = "gradepreview_out";
    std::optional<std::uint64_t> seed; // overrides the scenario seed
    GradeFilterTrack::Mode filter_mode = GradeFilterTrack::Mode::Full;
    double range_bin_width = 5.0;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

/// Keys accepted in a config file and, with '-' for '_', as flags.
const std::vector<std::string>& config_keys();

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Reads a YAML key/value file (may be empty or absent) and applies the
/// overrides on top. Unknown keys raise ConfigError listing all of them.
RunConfig parse_config(const std::optional<std::filesystem::path>& file, const ConfigOverrides& overrides = {});
RunConfig parse_config_text(const std::string& text, const ConfigOverrides& overrides = {});

/// Text that parse_config_text turns back into an equal RunConfig.
std::string serialize_config(const RunConfig& config);

// -----------------------------------------------------------------------------
// Scenario files
// -----------------------------------------------------------------------------

/// Built-in scenario names accepted by resolve_scenario.
const std::vector<std::string>& builtin_scenarios();

/// Parses a YAML scenario description. Throws ConfigError with the key path on
/// unknown keys or bad values.
sim::ScenarioSpec parse_scenario_text(const std::string& text);
sim::ScenarioSpec load_scenario_file(const std::filesystem::path& file);

/// Lossless YAML form of a scenario.
std::string serialize_scenario(const sim::ScenarioSpec& spec);

/// A built-in name (seeded with `seed`, default 1) or a scenario file path.
sim::ScenarioSpec resolve_scenario(const std::string& name_or_file, std::optional<std::uint64_t> seed = std::nullopt);

} // namespace gradepreview
