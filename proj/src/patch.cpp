#include "gradepreview/patch.hpp"

#include <algorithm>
#include <cmath>

namespace gradepreview {

ContactPatch::ContactPatch(const Eigen::Vector2d& center, double floor_z, double yaw, double length, double width,
                           PatchSide side, std::size_t waypoint)
    : center_(center), floor_z_(floor_z), yaw_(yaw), length_(length), width_(width), side_(side),
      waypoint_(waypoint), sin_yaw_(std::sin(yaw)), cos_yaw_(std::cos(yaw)), half_length_(0.5 * length),
      half_width_(0.5 * width) {}

PatchPair build_patches(const Pose& waypoint, const EstimatorConfig& cfg, std::size_t index) {
    const double half_dx = 0.5 * cfg.wheelbase * std::sin(waypoint.yaw);
    const double half_dy = 0.5 * cfg.wheelbase * std::cos(waypoint.yaw);
    return PatchPair{
        ContactPatch({waypoint.x + half_dx, waypoint.y + half_dy}, waypoint.z, waypoint.yaw, cfg.patch_length,
                           cfg.track_width, PatchSide::Front, index),
        ContactPatch({waypoint.x - half_dx, waypoint.y - half_dy}, waypoint.z, waypoint.yaw, cfg.patch_length,
                           cfg.track_width, PatchSide::Rear, index),
    };
}

std::size_t box_filter_into(std::span<const Point> cloud, const ContactPatch& patch, std::vector<Point>& out) {
    const std::size_t before = out.size();
    for (const Point& p : cloud) {
        if (patch.contains(p)) out.push_back(p);
    }
    return out.size() - before;
}

PointCloudFrame box_filter(const PointCloudFrame& cloud, const ContactPatch& patch) {
    PointCloudFrame out;
    out.frame_index = cloud.frame_index;
    out.timestamp = cloud.timestamp;
    out.frame = cloud.frame;
    box_filter_into(cloud.points, patch, out.points);
    return out;
}

void min_height_refine_in_place(std::vector<Point>& points, double band) {
    if (points.empty()) return;
    const double floor = std::min_element(points.begin(), points.end(), [](const Point& a, const Point& b) {
                             return a.z() < b.z();
                         })->z();
    std::erase_if(points, [&](const Point& p) { return p.z() > floor + band; });
}

PointCloudFrame min_height_refine(const PointCloudFrame& selected, double band) {
    PointCloudFrame out = selected;
    min_height_refine_in_place(out.points, band);
    return out;
}

} // namespace gradepreview
