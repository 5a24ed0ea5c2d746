#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gradepreview/errors.hpp"

namespace gradepreview {

using Point = Eigen::Vector3d;

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps an angle in radians into (-pi, pi].
double normalize_angle(double rad);

// =============================================================================
// Pose
// =============================================================================

/**
 * Vehicle pose in the world frame. Angles are radians.
 *
 * Heading convention: yaw is measured clockwise from the world +y axis, so a
 * vehicle with yaw psi drives along (sin psi, cos psi). Pitch is positive
 * nose-up, roll positive right-side-down. The body frame is x forward,
 * y left, z up.
 */
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;

    /// Validated constructor: all fields finite, angles wrapped to (-pi, pi].
    static Pose make(double x, double y, double z, double roll, double pitch, double yaw);

    Eigen::Vector2d horizontal() const { return {x, y}; }
    /// Unit vector of the driving direction in the world x-y plane.
    Eigen::Vector2d heading_vector() const;
};

// =============================================================================
// Path
// =============================================================================

/// Uniformly spaced waypoints. Immutable once built.
class Path {
  public:
    /// Throws PathError unless M >= 2, spacing > 0 and every horizontal step
    /// matches the spacing within `relative_tolerance * spacing`.
    Path(std::vector<Pose> waypoints, double spacing, double relative_tolerance = 0.01);

    std::size_t size() const noexcept { return waypoints_.size(); }
    double spacing() const noexcept { return spacing_; }
    const Pose& operator[](std::size_t i) const { return waypoints_[i]; }
    const Pose& at(std::size_t i) const;
    std::span<const Pose> waypoints() const noexcept { return waypoints_; }

    /// Nearest waypoint by horizontal distance; ties resolve to the lower index.
    std::size_t closest_waypoint(const Eigen::Vector2d& xy) const;

  private:
    std::vector<Pose> waypoints_;
    double spacing_;
};

// =============================================================================
// Point clouds
// =============================================================================

enum class CoordinateFrame { Lidar, World };

char frame_tag(CoordinateFrame f);
CoordinateFrame parse_frame_tag(char tag);

struct PointCloudFrame {
    std::int64_t frame_index = 0;
    double timestamp = 0.0;
    CoordinateFrame frame = CoordinateFrame::Lidar;
    std::vector<Point> points;
};

/// Throws StreamError if any point is non-finite.
void validate_points(const PointCloudFrame& frame);

// =============================================================================
// Rigid transforms
// =============================================================================

/// Proper rigid motion p' = R p + t.
class RigidTransform {
  public:
    RigidTransform() = default;
    /// Throws TransformError if `rotation` is not orthonormal with det +1 (to 1e-9).
    RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

    static RigidTransform identity() { return {}; }
    static RigidTransform from_translation(const Eigen::Vector3d& t);
    static RigidTransform from_axis_angle(const Eigen::Vector3d& axis, double angle_rad,
                                          const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());
    /// Body-to-world transform for a pose (see Pose for the angle conventions).
    static RigidTransform from_pose(const Pose& pose);

    const Eigen::Matrix3d& rotation() const noexcept { return rotation_; }
    const Eigen::Vector3d& translation() const noexcept { return translation_; }

    Point apply(const Point& p) const { return rotation_ * p + translation_; }
    Eigen::Vector3d rotate(const Eigen::Vector3d& v) const { return rotation_ * v; }

    RigidTransform inverse() const;
    /// (a * b).apply(p) == a.apply(b.apply(p))
    friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b);

  private:
    Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

/// Body rotation for (roll, pitch, yaw) in the Pose convention.
Eigen::Matrix3d rotation_from_euler(double roll, double pitch, double yaw);

/// Lidar-frame cloud to world-frame cloud. Throws FrameTagError if already in W.
PointCloudFrame transform_point_cloud(const PointCloudFrame& frame, const RigidTransform& lidar_to_world);

// =============================================================================
// Estimator configuration
// =============================================================================

/// Grade estimator and filter parameters. Defaults are the reference vehicle
/// values. Angles and variances are in degrees, lengths in meters.
struct EstimatorConfig {
    double preview_distance = 75.0;     // d
    double wheelbase = 3.09;            // w
    double patch_length = 0.5;          // w_c, along-track
    double track_width = 1.73;          // l, cross-track
    double waypoint_spacing = 1.0;      // delta s
    double process_noise = 8.2e-5;      // q, deg^2/m^3
    double measurement_variance = 49.0; // sigma_r^2, deg^2
    double bias_front_slope = -0.29;    // m_f, deg/frame
    double bias_front_offset = -1.87;   // b_f, deg
    double bias_rear_slope = 0.40;      // m_r, deg/frame
    double bias_rear_offset = -0.67;    // b_r, deg

    /// Optional second pass keeping points within this band above the patch minimum.
    std::optional<double> min_height_band;

    /// Filter prior: P0 = diag(prior_grade_variance or sigma_r^2, q * prior_rate_scale).
    std::optional<double> prior_grade_variance;
    double prior_rate_scale = 100.0;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;

    /// Number of waypoints ahead of the closest one covered by the preview.
    std::size_t preview_waypoints() const;

    void clear_bias() {
        bias_front_slope = bias_front_offset = bias_rear_slope = bias_rear_offset = 0.0;
    }

    bool operator==(const EstimatorConfig&) const = default;
};

} // namespace gradepreview
