#include "gradepreview/estimator.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gradepreview/stats.hpp"

namespace gradepreview {

namespace {

double mean_height(std::span<const Point> points) {
    double sum = 0.0;
    for (const Point& p : points) sum += p.z();
    return sum / static_cast<double>(points.size());
}

} // namespace

std::optional<std::size_t> estimate_extent(const EstimateSet& estimates) {
    for (std::size_t i = estimates.size(); i-- > 0;) {
        if (estimates[i]) return i;
    }
    return std::nullopt;
}

double bias_correction(std::int64_t frame_lag, const EstimatorConfig& cfg) {
    if (frame_lag > 0) return cfg.bias_front_slope * static_cast<double>(frame_lag) + cfg.bias_front_offset;
    if (frame_lag < 0) return cfg.bias_rear_slope * static_cast<double>(-frame_lag) + cfg.bias_rear_offset;
    return 0.0;
}

RawGradeEstimate estimate_grade(std::span<const Point> front, std::span<const Point> rear, std::int64_t frame_lag,
                                const EstimatorConfig& cfg) {
    if (front.empty() || rear.empty()) throw std::invalid_argument("estimate_grade: empty patch buffer");
    RawGradeEstimate est;
    est.frame_lag = frame_lag;
    est.front_mean_z = mean_height(front);
    est.rear_mean_z = mean_height(rear);
    const double rise = est.front_mean_z - est.rear_mean_z;
    if (!(std::abs(rise) <= cfg.wheelbase)) {
        throw DegenerateGeometryError(
            fmt::format("height difference {:.3f} m exceeds the wheelbase {:.3f} m", rise, cfg.wheelbase));
    }
    est.grade_deg = rad2deg(std::asin(rise / cfg.wheelbase)) + bias_correction(frame_lag, cfg);
    return est;
}

BiasModel fit_bias_model(std::span<const BiasSample> samples) {
    std::vector<double> fx, fy, rx, ry;
    for (const BiasSample& s : samples) {
        if (s.frame_lag > 0) {
            fx.push_back(static_cast<double>(s.frame_lag));
            fy.push_back(s.error_deg);
        } else if (s.frame_lag < 0) {
            rx.push_back(static_cast<double>(-s.frame_lag));
            ry.push_back(s.error_deg);
        }
    }
    auto fit_side = [](const std::vector<double>& x, const std::vector<double>& y, const char* side) {
        if (x.size() < 2) {
            throw FitError(fmt::format("{} side has {} samples, need at least 2", side, x.size()));
        }
        try {
            return stats::fit_line(x, y);
        } catch (const std::invalid_argument&) {
            throw FitError(fmt::format("{} side samples all share one frame lag", side));
        }
    };
    const stats::LinearFit front = fit_side(fx, fy, "front (lag > 0)");
    const stats::LinearFit rear = fit_side(rx, ry, "rear (lag < 0)");

    BiasModel model;
    model.front_slope = front.slope;
    model.front_offset = front.intercept;
    model.rear_slope = rear.slope;
    model.rear_offset = rear.intercept;
    model.front_samples = fx.size();
    model.rear_samples = rx.size();
    return model;
}

GradeEstimator::GradeEstimator(Path path, EstimatorConfig cfg)
    : path_(std::move(path)), cfg_(std::move(cfg)), accumulator_(path_.size()), estimates_(path_.size()),
      published_(std::make_shared<const EstimateSet>(path_.size())) {
    cfg_.validate();
    if (std::abs(path_.spacing() - cfg_.waypoint_spacing) > 1e-9 * cfg_.waypoint_spacing) {
        throw ConfigError("waypoint_spacing", fmt::format("config spacing {} differs from path spacing {}",
                                                          cfg_.waypoint_spacing, path_.spacing()));
    }
    patches_.reserve(path_.size());
    for (std::size_t i = 0; i < path_.size(); ++i) patches_.push_back(build_patches(path_[i], cfg_, i));
}

std::vector<RawGradeEstimate> GradeEstimator::ingest_frame(const PointCloudFrame& frame,
                                                           const RigidTransform& lidar_to_world,
                                                           std::size_t closest_waypoint) {
    if (closest_waypoint >= path_.size()) {
        throw PathError(fmt::format("closest waypoint {} out of range (path has {})", closest_waypoint, path_.size()));
    }
    if (last_frame_ && frame.frame_index <= *last_frame_) {
        throw StreamError(fmt::format("frame index {} does not follow {}", frame.frame_index, *last_frame_));
    }
    const PointCloudFrame world = transform_point_cloud(frame, lidar_to_world);
    last_frame_ = frame.frame_index;

    const std::size_t last = std::min(closest_waypoint + cfg_.preview_waypoints(), path_.size() - 1);
    const Eigen::Vector2d sensor_xy = lidar_to_world.translation().head<2>();

    std::vector<RawGradeEstimate> emitted;
    for (std::size_t j = closest_waypoint; j <= last; ++j) {
        WaypointPatches& slot = accumulator_[j];
        if (slot.status != WaypointStatus::Pending) continue;

        auto accumulate = [&](PatchBuffer& buffer, const ContactPatch& patch) {
            if (buffer.filled()) return;
            if (box_filter_into(world.points, patch, buffer.points) == 0) return;
            if (cfg_.min_height_band) min_height_refine_in_place(buffer.points, *cfg_.min_height_band);
            buffer.first_frame = frame.frame_index;
        };
        accumulate(slot.front, patches_[j].front);
        accumulate(slot.rear, patches_[j].rear);
        if (!slot.front.filled() || !slot.rear.filled()) continue;

        const std::int64_t lag = *slot.front.first_frame - *slot.rear.first_frame;
        try {
            RawGradeEstimate est = estimate_grade(slot.front.points, slot.rear.points, lag, cfg_);
            est.waypoint = j;
            est.emission_frame = frame.frame_index;
            est.emission_range = (path_[j].horizontal() - sensor_xy).norm();
            slot.status = WaypointStatus::Emitted;
            estimates_[j] = est;
            if (!extent_ || j > *extent_) extent_ = j;
            emitted.push_back(est);
        } catch (const DegenerateGeometryError& e) {
            slot.status = WaypointStatus::Failed;
            failed_.push_back(j);
            spdlog::warn("waypoint {}: estimate suppressed: {}", j, e.what());
        }
    }

    if (!emitted.empty()) {
        auto copy = std::make_shared<const EstimateSet>(estimates_);
        std::lock_guard lock(publish_mutex_);
        published_ = std::move(copy);
    }
    return emitted;
}

std::shared_ptr<const EstimateSet> GradeEstimator::snapshot() const {
    std::lock_guard lock(publish_mutex_);
    return published_;
}

} // namespace gradepreview
