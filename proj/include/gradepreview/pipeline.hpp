#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "gradepreview/estimator.hpp"
#include "gradepreview/kalman.hpp"
#include "gradepreview/sim.hpp"
#include "gradepreview/types.hpp"

namespace gradepreview {

/// Raw and filtered grade over a path.
struct GradeTrack {
    EstimateSet raw;                 // one slot per waypoint
    FilterOutput filtered;           // waypoints 0..extent
    std::vector<std::size_t> failed; // waypoints whose estimate was suppressed
};

struct FrameTiming {
    std::int64_t frame_index = 0;
    std::size_t closest_waypoint = 0;
    std::size_t emitted = 0;
    std::size_t filter_length = 0; // waypoints covered by the filter after this frame
    std::size_t filter_steps = 0;  // predict/update steps run for this frame
    double ingest_ms = 0.0;
    double filter_ms = 0.0;

    double total_ms() const { return ingest_ms + filter_ms; }
};

/// Estimator plus filter track, refiltered whenever a frame emits.
class GradePipeline {
  public:
    GradePipeline(Path path, EstimatorConfig cfg, GradeFilterTrack::Mode mode = GradeFilterTrack::Mode::Full);

    FrameTiming process(const PointCloudFrame& frame, const RigidTransform& lidar_to_world,
                        std::size_t closest_waypoint);

    GradeTrack track() const;
    const GradeEstimator& estimator() const noexcept { return estimator_; }
    const FilterOutput& filtered() const noexcept { return filter_.output(); }

  private:
    GradeEstimator estimator_;
    GradeFilterTrack filter_;
    std::size_t commit_floor_ = 0;
};

using FrameObserver = std::function<void(const PointCloudFrame&, const RigidTransform&, std::size_t)>;

struct EndToEndOptions {
    GradeFilterTrack::Mode filter_mode = GradeFilterTrack::Mode::Full;
    /// Sees every frame with the odometry transform and closest waypoint before ingestion.
    FrameObserver observer;
};

struct EndToEndResult {
    GradeTrack track;
    std::vector<double> truth_grade_deg;
    std::vector<FrameTiming> timings;
};

/// Number of frames needed to drive the whole path.
std::size_t frame_count(const sim::Scenario& scenario);

/// Drives the vehicle along the scenario path: render, corrupt odometry,
/// ingest and refilter per frame. Throws ConfigError when the scenario and
/// config waypoint spacings differ.
EndToEndResult run_end_to_end(const sim::Scenario& scenario, const EstimatorConfig& cfg,
                              const EndToEndOptions& options = {});

/// (frame lag, truth minus raw) for every estimate. Run with zero bias
/// coefficients to get the samples the bias model is fitted to.
std::vector<BiasSample> bias_samples(const EstimateSet& raw, std::span<const double> truth_grade_deg);

struct BiasCalibration {
    BiasModel model;
    std::size_t samples = 0;
    /// Variance of the raw error left after the fitted correction, deg^2. A
    /// starting point for measurement_variance.
    double residual_variance = 0.0;
};

/// Fits the frame-lag bias model to estimates produced with zero bias coefficients.
BiasCalibration calibrate_bias(const EstimateSet& uncorrected, std::span<const double> truth_grade_deg);

} // namespace gradepreview
