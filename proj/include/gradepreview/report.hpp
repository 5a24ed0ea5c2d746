#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradepreview/kalman.hpp"
#include "gradepreview/pipeline.hpp"
#include "gradepreview/stats.hpp"

namespace gradepreview {

/// Error at one waypoint; sign convention is truth minus estimate.
struct WaypointError {
    std::size_t waypoint = 0;
    double truth_deg = 0.0;
    double estimate_deg = 0.0;
    double error_deg = 0.0;
    double emission_range = 0.0;
    std::int64_t frame_lag = 0;
};

struct ErrorSummary {
    std::vector<WaypointError> errors;
    double mean = 0.0;
    double std = 0.0; // n - 1
    std::size_t count = 0;
};

/// Filtered-grade error at every waypoint that has a truth value, a raw
/// estimate and a filter output. Throws AlignmentError when there is none.
ErrorSummary compute_errors(std::span<const double> truth_grade_deg, const GradeTrack& track);

/// Moment statistics of a plain error list.
ErrorSummary summarize_errors(std::vector<WaypointError> errors);

struct RangeBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    double mean_abs_error = 0.0;
    std::optional<double> abs_error_std; // unset when the bin is flagged
    bool flagged = true;                 // fewer than the minimum occupancy
};

struct RangeBinning {
    double bin_width = 5.0;
    std::size_t min_count = 5;
    std::vector<RangeBin> bins; // contiguous from 0 up to the farthest emission
    double mean_emission_range = 0.0;

    /// Largest over smallest std among unflagged bins; unset with fewer than two.
    std::optional<double> std_ratio() const;
};

/// |error| statistics per emission-range bin [k w, (k + 1) w). Throws
/// std::invalid_argument unless bin_width > 0.
RangeBinning bin_by_range(std::span<const WaypointError> errors, double bin_width = 5.0, std::size_t min_count = 5);

struct TimingStats {
    double min_ms = 0.0;
    double mean_ms = 0.0;
    double max_ms = 0.0;
    std::size_t count = 0;
    /// time = slope * filter_length + intercept; unset when filter length never varies.
    std::optional<stats::LinearFit> growth;
};

/// Throws InsufficientDataError on empty input. `filter_length` may be empty.
TimingStats timing_stats(std::span<const double> times_ms, std::span<const double> filter_length = {});
TimingStats timing_stats(std::span<const FrameTiming> timings);

struct ErrorReport {
    std::string name;
    ErrorSummary errors;
    RangeBinning ranges;
    std::optional<WhitenessStats> whiteness;
    std::optional<TimingStats> timing;
    std::size_t estimates = 0;
    std::size_t failed = 0;
};

ErrorReport build_report(std::string name, std::span<const double> truth_grade_deg, const GradeTrack& track,
                         std::span<const FrameTiming> timings = {}, double bin_width = 5.0);

// -----------------------------------------------------------------------------
// Artifacts
// -----------------------------------------------------------------------------

/// One row per waypoint:
/// index,truth_deg,raw_deg,filtered_deg,residual_deg,frame_lag,emission_range_m
/// Missing values are empty fields.
void write_waypoint_csv(const std::filesystem::path& file, std::span<const double> truth_grade_deg,
                        const GradeTrack& track);

/// Deterministic per-frame bookkeeping (no wall times):
/// frame,closest_waypoint,emitted,filter_length,filter_steps
void write_frame_csv(const std::filesystem::path& file, std::span<const FrameTiming> timings);

/// Range bin table: lower_m,upper_m,count,mean_abs_error_deg,abs_error_std_deg,flagged
void write_range_csv(const std::filesystem::path& file, const RangeBinning& ranges);

void write_summary(const std::filesystem::path& file, const ErrorReport& report);
std::string format_summary(const ErrorReport& report);

/// Python/matplotlib script that redraws the grade, error, range and residual
/// charts from the CSVs next to it.
void write_plot_script(const std::filesystem::path& file);

/// Rows of a waypoint CSV as written by write_waypoint_csv.
struct WaypointRow {
    std::size_t index = 0;
    std::optional<double> truth_deg;
    std::optional<double> raw_deg;
    std::optional<double> filtered_deg;
    std::optional<double> residual_deg;
    std::optional<std::int64_t> frame_lag;
    std::optional<double> emission_range;
};

/// Throws IoError with file and line on malformed input.
std::vector<WaypointRow> read_waypoint_csv(const std::filesystem::path& file);

/// Rebuilds the error, range and whiteness sections from waypoint rows.
ErrorReport report_from_rows(std::string name, std::span<const WaypointRow> rows, double bin_width = 5.0);

/// Writes waypoints.csv, frames.csv, ranges.csv, summary.txt and plot.py into `dir`.
ErrorReport write_run_artifacts(const std::filesystem::path& dir, const std::string& name,
                                std::span<const double> truth_grade_deg, const GradeTrack& track,
                                std::span<const FrameTiming> timings, double bin_width = 5.0);

} // namespace gradepreview
