#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "gradepreview/patch.hpp"
#include "gradepreview/types.hpp"

namespace gradepreview {

/// One bias-corrected grade measurement for a waypoint.
struct RawGradeEstimate {
    std::size_t waypoint = 0;
    double grade_deg = 0.0;         // asin((front - rear) / w) + b(frame_lag)
    std::int64_t frame_lag = 0;     // first front frame minus first rear frame
    double front_mean_z = 0.0;      // m
    double rear_mean_z = 0.0;       // m
    std::int64_t emission_frame = 0;
    double emission_range = 0.0;    // horizontal sensor-to-waypoint distance at emission, m

    bool operator==(const RawGradeEstimate&) const = default;
};

/// Sparse estimate set indexed by waypoint; unset entries are waypoints without an estimate.
using EstimateSet = std::vector<std::optional<RawGradeEstimate>>;

/// Farthest waypoint holding an estimate.
std::optional<std::size_t> estimate_extent(const EstimateSet& estimates);

/// Piecewise-linear odometry bias term in degrees.
///   m_f * lag + b_f      lag > 0
///   m_r * |lag| + b_r    lag < 0
///   0                    lag == 0
double bias_correction(std::int64_t frame_lag, const EstimatorConfig& cfg);

/// Grade from the mean patch heights. Throws DegenerateGeometryError when
/// |mean_front - mean_rear| > w, and std::invalid_argument on an empty buffer.
RawGradeEstimate estimate_grade(std::span<const Point> front, std::span<const Point> rear, std::int64_t frame_lag,
                                const EstimatorConfig& cfg);

// -----------------------------------------------------------------------------
// Bias model fitting
// -----------------------------------------------------------------------------

struct BiasSample {
    std::int64_t frame_lag = 0;
    double error_deg = 0.0; // truth minus uncorrected estimate
};

struct BiasModel {
    double front_slope = 0.0;
    double front_offset = 0.0;
    double rear_slope = 0.0;
    double rear_offset = 0.0;
    std::size_t front_samples = 0;
    std::size_t rear_samples = 0;

    void apply_to(EstimatorConfig& cfg) const {
        cfg.bias_front_slope = front_slope;
        cfg.bias_front_offset = front_offset;
        cfg.bias_rear_slope = rear_slope;
        cfg.bias_rear_offset = rear_offset;
    }
};

/// Separate least-squares lines for lag > 0 (on lag) and lag < 0 (on |lag|).
/// Samples with lag == 0 are ignored. Throws FitError naming the deficient side.
BiasModel fit_bias_model(std::span<const BiasSample> samples);

// -----------------------------------------------------------------------------
// Accumulation
// -----------------------------------------------------------------------------

struct PatchBuffer {
    std::vector<Point> points;
    std::optional<std::int64_t> first_frame;

    bool filled() const noexcept { return !points.empty(); }
};

enum class WaypointStatus { Pending, Emitted, Failed };

struct WaypointPatches {
    PatchBuffer front;
    PatchBuffer rear;
    WaypointStatus status = WaypointStatus::Pending;
};

/// Per-waypoint front/rear buffers. A buffer is frozen once it holds points.
class PatchAccumulator {
  public:
    explicit PatchAccumulator(std::size_t waypoints) : slots_(waypoints) {}

    std::size_t size() const noexcept { return slots_.size(); }
    const WaypointPatches& operator[](std::size_t i) const { return slots_[i]; }
    WaypointPatches& operator[](std::size_t i) { return slots_[i]; }

  private:
    std::vector<WaypointPatches> slots_;
};

/**
 * Runs the per-frame grade estimation loop over a fixed path.
 *
 * Single writer: one thread calls ingest_frame. Any thread may call
 * snapshot(), which returns an immutable copy of the estimate set as of the
 * end of the last completed ingest.
 */
class GradeEstimator {
  public:
    GradeEstimator(Path path, EstimatorConfig cfg);

    /// Transforms the lidar frame to the world frame, accumulates contact-patch
    /// points for waypoints closest_waypoint .. closest_waypoint + floor(d / ds)
    /// (clamped to the path) and returns the estimates emitted by this frame.
    /// Throws PathError for an out-of-range waypoint, StreamError for a
    /// non-increasing frame index and FrameTagError for a world-frame input.
    std::vector<RawGradeEstimate> ingest_frame(const PointCloudFrame& frame, const RigidTransform& lidar_to_world,
                                               std::size_t closest_waypoint);

    const Path& path() const noexcept { return path_; }
    const EstimatorConfig& config() const noexcept { return cfg_; }
    const PatchAccumulator& accumulator() const noexcept { return accumulator_; }
    const EstimateSet& estimates() const noexcept { return estimates_; }
    std::optional<std::size_t> extent() const noexcept { return extent_; }
    std::span<const std::size_t> failed_waypoints() const noexcept { return failed_; }

    std::shared_ptr<const EstimateSet> snapshot() const;

  private:
    Path path_;
    EstimatorConfig cfg_;
    std::vector<PatchPair> patches_;
    PatchAccumulator accumulator_;
    EstimateSet estimates_;
    std::optional<std::size_t> extent_;
    std::vector<std::size_t> failed_;
    std::optional<std::int64_t> last_frame_;

    mutable std::mutex publish_mutex_;
    std::shared_ptr<const EstimateSet> published_;
};

} // namespace gradepreview
