#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "gradepreview/types.hpp"

namespace gradepreview {

enum class PatchSide { Front, Rear };

/// Oriented box under one axle at one waypoint. Height extent is unbounded;
/// `floor_z` only records the waypoint height.
class ContactPatch {
  public:
    ContactPatch(const Eigen::Vector2d& center, double floor_z, double yaw, double length, double width,
                 PatchSide side, std::size_t waypoint);

    const Eigen::Vector2d& center() const noexcept { return center_; }
    double floor_z() const noexcept { return floor_z_; }
    double yaw() const noexcept { return yaw_; }
    double length() const noexcept { return length_; } // along-track
    double width() const noexcept { return width_; }   // cross-track
    PatchSide side() const noexcept { return side_; }
    std::size_t waypoint() const noexcept { return waypoint_; }

    /// Along-track and cross-track offsets of `p` from the centre.
    Eigen::Vector2d local(const Point& p) const {
        const double dx = p.x() - center_.x();
        const double dy = p.y() - center_.y();
        return {dx * sin_yaw_ + dy * cos_yaw_, dx * cos_yaw_ - dy * sin_yaw_};
    }

    /// Closed-box membership test on the horizontal coordinates only.
    bool contains(const Point& p) const {
        const Eigen::Vector2d uv = local(p);
        return std::abs(uv.x()) <= half_length_ && std::abs(uv.y()) <= half_width_;
    }

  private:
    Eigen::Vector2d center_;
    double floor_z_;
    double yaw_;
    double length_;
    double width_;
    PatchSide side_;
    std::size_t waypoint_;
    double sin_yaw_;
    double cos_yaw_;
    double half_length_;
    double half_width_;
};

struct PatchPair {
    ContactPatch front;
    ContactPatch rear;
};

/// Front and rear contact patches for waypoint `index`, centred w/2 ahead of and
/// behind the waypoint along its heading.
PatchPair build_patches(const Pose& waypoint, const EstimatorConfig& cfg, std::size_t index);

/// Points of a world-frame cloud inside the patch.
PointCloudFrame box_filter(const PointCloudFrame& cloud, const ContactPatch& patch);

/// Appends the points of `cloud` inside `patch` to `out`; returns how many were added.
std::size_t box_filter_into(std::span<const Point> cloud, const ContactPatch& patch, std::vector<Point>& out);

/// Keeps points with z <= min(z) + band.
PointCloudFrame min_height_refine(const PointCloudFrame& selected, double band);
void min_height_refine_in_place(std::vector<Point>& points, double band);

} // namespace gradepreview
