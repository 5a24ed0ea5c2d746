#include "gradepreview/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gradepreview/stats.hpp"

namespace gradepreview {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

} // namespace

GradePipeline::GradePipeline(Path path, EstimatorConfig cfg, GradeFilterTrack::Mode mode)
    : estimator_(std::move(path), cfg), filter_(std::move(cfg), mode) {}

FrameTiming GradePipeline::process(const PointCloudFrame& frame, const RigidTransform& lidar_to_world,
                                   std::size_t closest_waypoint) {
    FrameTiming t;
    t.frame_index = frame.frame_index;
    t.closest_waypoint = closest_waypoint;

    const auto start = Clock::now();
    t.emitted = estimator_.ingest_frame(frame, lidar_to_world, closest_waypoint).size();
    t.ingest_ms = elapsed_ms(start);

    if (closest_waypoint < commit_floor_ && filter_.mode() == GradeFilterTrack::Mode::Incremental) {
        // The vehicle moved backwards; committed waypoints may change again.
        spdlog::debug("closest waypoint regressed to {}; restarting the filter track", closest_waypoint);
        filter_ = GradeFilterTrack(estimator_.config(), filter_.mode());
    }
    commit_floor_ = closest_waypoint;

    if (t.emitted > 0) {
        const auto fstart = Clock::now();
        t.filter_steps = filter_.refresh(estimator_.estimates(), closest_waypoint);
        t.filter_ms = elapsed_ms(fstart);
    }
    t.filter_length = filter_.output().size();
    return t;
}

GradeTrack GradePipeline::track() const {
    GradeTrack track;
    track.raw = estimator_.estimates();
    track.filtered = filter_.output();
    track.failed.assign(estimator_.failed_waypoints().begin(), estimator_.failed_waypoints().end());
    return track;
}

std::size_t frame_count(const sim::Scenario& scenario) {
    const double distance = static_cast<double>(scenario.path.size() - 1) * scenario.path.spacing();
    const double frames = distance * scenario.spec.lidar.frame_rate / scenario.spec.speed;
    return static_cast<std::size_t>(std::floor(frames + 1e-9)) + 1;
}

EndToEndResult run_end_to_end(const sim::Scenario& scenario, const EstimatorConfig& cfg,
                              const EndToEndOptions& options) {
    if (std::abs(scenario.path.spacing() - cfg.waypoint_spacing) > 1e-9 * cfg.waypoint_spacing) {
        throw ConfigError("waypoint_spacing", fmt::format("scenario spacing {} differs from estimator spacing {}",
                                                          scenario.path.spacing(), cfg.waypoint_spacing));
    }
    const sim::ScenarioSpec& spec = scenario.spec;
    sim::LidarSimulator lidar(spec.lidar, scenario.terrain, spec.layout, spec.seed);
    sim::OdometryCorruptor odometry(spec.odometry, spec.seed);
    GradePipeline pipeline(scenario.path, cfg, options.filter_mode);

    const std::size_t frames = frame_count(scenario);
    EndToEndResult result;
    result.timings.reserve(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        const auto index = static_cast<std::int64_t>(f);
        const double s = spec.speed * static_cast<double>(f) / spec.lidar.frame_rate;
        const double timestamp = static_cast<double>(f) / spec.lidar.frame_rate;
        const Pose vehicle = sim::vehicle_pose(scenario, s, cfg.wheelbase);
        const PointCloudFrame cloud = lidar.render(vehicle, index, timestamp);
        const RigidTransform measured = odometry.corrupt(sim::lidar_to_world(vehicle, spec.lidar), index);
        const std::size_t closest = sim::closest_waypoint_at(scenario, s);
        if (options.observer) options.observer(cloud, measured, closest);
        result.timings.push_back(pipeline.process(cloud, measured, closest));
    }
    result.track = pipeline.track();
    result.truth_grade_deg = scenario.truth_grade_deg;
    spdlog::info("{}: {} frames, {} estimates, {} suppressed", spec.name, frames,
                 std::count_if(result.track.raw.begin(), result.track.raw.end(), [](const auto& e) { return e.has_value(); }),
                 result.track.failed.size());
    return result;
}

std::vector<BiasSample> bias_samples(const EstimateSet& raw, std::span<const double> truth_grade_deg) {
    std::vector<BiasSample> out;
    for (std::size_t i = 0; i < raw.size() && i < truth_grade_deg.size(); ++i) {
        if (!raw[i]) continue;
        out.push_back({raw[i]->frame_lag, truth_grade_deg[i] - raw[i]->grade_deg});
    }
    return out;
}

BiasCalibration calibrate_bias(const EstimateSet& uncorrected, std::span<const double> truth_grade_deg) {
    const std::vector<BiasSample> samples = bias_samples(uncorrected, truth_grade_deg);
    BiasCalibration out;
    out.model = fit_bias_model(samples);
    out.samples = samples.size();
    EstimatorConfig corrected;
    out.model.apply_to(corrected);
    std::vector<double> left;
    left.reserve(samples.size());
    for (const BiasSample& s : samples) left.push_back(s.error_deg - bias_correction(s.frame_lag, corrected));
    const double sd = stats::sample_std(left);
    out.residual_variance = sd * sd;
    return out;
}

} // namespace gradepreview
