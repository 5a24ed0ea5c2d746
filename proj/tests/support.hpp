#pragma once

// Hand-rolled generators for the property tests. Every generator takes the
// engine explicitly so failures reproduce from the case seed.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "gradepreview/types.hpp"

namespace gp_test {

using Rng = std::mt19937_64;

inline Rng rng_for(std::uint64_t seed) { return Rng(seed * 0x9E3779B97F4A7C15ULL + 17); }

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double gaussian(Rng& rng, double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }

inline double any_angle(Rng& rng) { return uniform(rng, -std::numbers::pi, std::numbers::pi); }

inline gradepreview::Point point_in_box(Rng& rng, double half) {
    return {uniform(rng, -half, half), uniform(rng, -half, half), uniform(rng, -half, half)};
}

inline std::vector<gradepreview::Point> cloud(Rng& rng, std::size_t n, double half) {
    std::vector<gradepreview::Point> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(point_in_box(rng, half));
    return out;
}

inline gradepreview::RigidTransform any_transform(Rng& rng) {
    const Eigen::Vector3d axis = Eigen::Vector3d(gaussian(rng), gaussian(rng), gaussian(rng)).normalized();
    return gradepreview::RigidTransform::from_axis_angle(axis, any_angle(rng), point_in_box(rng, 50.0));
}

/// Straight level path along the heading `yaw` from `origin`.
inline gradepreview::Path straight_path(std::size_t n, double yaw = 0.0, double spacing = 1.0,
                                        Eigen::Vector2d origin = Eigen::Vector2d::Zero()) {
    std::vector<gradepreview::Pose> poses;
    const Eigen::Vector2d dir(std::sin(yaw), std::cos(yaw));
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d xy = origin + static_cast<double>(i) * spacing * dir;
        poses.push_back(gradepreview::Pose::make(xy.x(), xy.y(), 0.0, 0.0, 0.0, yaw));
    }
    return gradepreview::Path(poses, spacing);
}

} // namespace gp_test
