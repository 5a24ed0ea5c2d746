#include "gradepreview/types.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace gradepreview {

double normalize_angle(double rad) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double a = std::remainder(rad, two_pi); // [-pi, pi]
    if (a <= -std::numbers::pi) a += two_pi;
    return a;
}

Pose Pose::make(double x, double y, double z, double roll, double pitch, double yaw) {
    for (double v : {x, y, z, roll, pitch, yaw}) {
        if (!std::isfinite(v)) throw PathError("pose fields must be finite");
    }
    return Pose{x, y, z, normalize_angle(roll), normalize_angle(pitch), normalize_angle(yaw)};
}

Eigen::Vector2d Pose::heading_vector() const { return {std::sin(yaw), std::cos(yaw)}; }

Path::Path(std::vector<Pose> waypoints, double spacing, double relative_tolerance)
    : waypoints_(std::move(waypoints)), spacing_(spacing) {
    if (waypoints_.size() < 2) throw PathError("path needs at least two waypoints");
    if (!(spacing_ > 0.0) || !std::isfinite(spacing_)) throw PathError("waypoint spacing must be positive");
    const double tol = relative_tolerance * spacing_;
    for (std::size_t i = 0; i < waypoints_.size(); ++i) {
        const Pose& p = waypoints_[i];
        for (double v : {p.x, p.y, p.z, p.roll, p.pitch, p.yaw}) {
            if (!std::isfinite(v)) throw PathError(fmt::format("waypoint {} has a non-finite field", i));
        }
        if (i == 0) continue;
        const double step = (p.horizontal() - waypoints_[i - 1].horizontal()).norm();
        if (std::abs(step - spacing_) > tol) {
            throw PathError(fmt::format("waypoints {} and {} are {:.6f} m apart, expected {:.6f} m", i - 1, i,
                                        step, spacing_));
        }
    }
}

const Pose& Path::at(std::size_t i) const {
    if (i >= waypoints_.size()) {
        throw PathError(fmt::format("waypoint index {} out of range (path has {})", i, waypoints_.size()));
    }
    return waypoints_[i];
}

std::size_t Path::closest_waypoint(const Eigen::Vector2d& xy) const {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < waypoints_.size(); ++i) {
        const double d2 = (waypoints_[i].horizontal() - xy).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return best;
}

char frame_tag(CoordinateFrame f) { return f == CoordinateFrame::Lidar ? 'L' : 'W'; }

CoordinateFrame parse_frame_tag(char tag) {
    switch (tag) {
    case 'L':
        return CoordinateFrame::Lidar;
    case 'W':
        return CoordinateFrame::World;
    default:
        throw FrameTagError(fmt::format("unknown coordinate frame tag '{}'", tag));
    }
}

void validate_points(const PointCloudFrame& frame) {
    for (const Point& p : frame.points) {
        if (!p.allFinite()) throw StreamError(fmt::format("frame {} contains a non-finite point", frame.frame_index));
    }
}

RigidTransform::RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
    if (!rotation_.allFinite() || !translation_.allFinite()) throw TransformError("transform must be finite");
    const double ortho = (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9) throw TransformError(fmt::format("rotation is not orthonormal (deviation {:.3e})", ortho));
    if (std::abs(rotation_.determinant() - 1.0) > 1e-9) throw TransformError("rotation determinant is not +1");
}

RigidTransform RigidTransform::from_translation(const Eigen::Vector3d& t) {
    return RigidTransform(Eigen::Matrix3d::Identity(), t);
}

RigidTransform RigidTransform::from_axis_angle(const Eigen::Vector3d& axis, double angle_rad,
                                               const Eigen::Vector3d& translation) {
    return RigidTransform(Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix(), translation);
}

Eigen::Matrix3d rotation_from_euler(double roll, double pitch, double yaw) {
    // Z-Y-X intrinsic. The math-convention angle of the driving direction is
    // pi/2 - yaw; nose-up pitch is a negative rotation about the left axis.
    const Eigen::Matrix3d rz = Eigen::AngleAxisd(std::numbers::pi / 2.0 - yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const Eigen::Matrix3d ry = Eigen::AngleAxisd(-pitch, Eigen::Vector3d::UnitY()).toRotationMatrix();
    const Eigen::Matrix3d rx = Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()).toRotationMatrix();
    return rz * ry * rx;
}

RigidTransform RigidTransform::from_pose(const Pose& pose) {
    return RigidTransform(rotation_from_euler(pose.roll, pose.pitch, pose.yaw), {pose.x, pose.y, pose.z});
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation_ = rotation_.transpose();
    inv.translation_ = -(inv.rotation_ * translation_);
    return inv;
}

RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    RigidTransform out;
    out.rotation_ = a.rotation_ * b.rotation_;
    out.translation_ = a.rotation_ * b.translation_ + a.translation_;
    return out;
}

PointCloudFrame transform_point_cloud(const PointCloudFrame& frame, const RigidTransform& lidar_to_world) {
    if (frame.frame != CoordinateFrame::Lidar) {
        throw FrameTagError(fmt::format("frame {} is already in the world frame", frame.frame_index));
    }
    PointCloudFrame out;
    out.frame_index = frame.frame_index;
    out.timestamp = frame.timestamp;
    out.frame = CoordinateFrame::World;
    out.points.reserve(frame.points.size());
    const Eigen::Matrix3d& r = lidar_to_world.rotation();
    const Eigen::Vector3d& t = lidar_to_world.translation();
    for (const Point& p : frame.points) out.points.emplace_back(r * p + t);
    return out;
}

void EstimatorConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* rule) {
        if (!ok) throw ConfigError(field, rule);
    };
    auto finite = [](double v) { return std::isfinite(v); };
    require(finite(preview_distance) && preview_distance > 0.0, "preview_distance", "must be > 0");
    require(finite(wheelbase) && wheelbase > 0.0, "wheelbase", "must be > 0");
    require(finite(patch_length) && patch_length > 0.0, "patch_length", "must be > 0");
    require(finite(track_width) && track_width > 0.0, "track_width", "must be > 0");
    require(finite(waypoint_spacing) && waypoint_spacing > 0.0, "waypoint_spacing", "must be > 0");
    require(finite(process_noise) && process_noise >= 0.0, "process_noise", "must be >= 0");
    require(finite(measurement_variance) && measurement_variance >= 0.0, "measurement_variance", "must be >= 0");
    require(finite(bias_front_slope), "bias_front_slope", "must be finite");
    require(finite(bias_front_offset), "bias_front_offset", "must be finite");
    require(finite(bias_rear_slope), "bias_rear_slope", "must be finite");
    require(finite(bias_rear_offset), "bias_rear_offset", "must be finite");
    if (min_height_band) {
        require(finite(*min_height_band) && *min_height_band >= 0.0, "min_height_band", "must be >= 0");
    }
    if (prior_grade_variance) {
        require(finite(*prior_grade_variance) && *prior_grade_variance >= 0.0, "prior_grade_variance",
                "must be >= 0");
    }
    require(finite(prior_rate_scale) && prior_rate_scale >= 0.0, "prior_rate_scale", "must be >= 0");
}

std::size_t EstimatorConfig::preview_waypoints() const {
    // Guard against 75/1 evaluating to 74.99999...
    return static_cast<std::size_t>(std::floor(preview_distance / waypoint_spacing + 1e-9));
}

} // namespace gradepreview
