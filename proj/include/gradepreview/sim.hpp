#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gradepreview/types.hpp"

namespace gradepreview::sim {

// =============================================================================
// Terrain
// =============================================================================

enum class SegmentKind { Flat, Ramp, Sinusoid };

/// One piece of the longitudinal elevation profile. Heights are continuous
/// across segments; each segment starts at the height where the previous ended.
struct TerrainSegment {
    SegmentKind kind = SegmentKind::Flat;
    double length = 0.0;     // m of horizontal arclength
    double slope = 0.0;      // Ramp: rise over run
    double amplitude = 0.0;  // Sinusoid: m
    double wavelength = 0.0; // Sinusoid: m

    static TerrainSegment flat(double length) { return {SegmentKind::Flat, length}; }
    static TerrainSegment ramp(double length, double slope) { return {SegmentKind::Ramp, length, slope}; }
    static TerrainSegment sinusoid(double length, double amplitude, double wavelength) {
        return {SegmentKind::Sinusoid, length, 0.0, amplitude, wavelength};
    }
    /// Sinusoid whose steepest slope equals sin(peak_grade_deg).
    static TerrainSegment hills(double length, double peak_grade_deg, double wavelength);

    bool operator==(const TerrainSegment&) const = default;
};

struct TerrainProfile {
    std::vector<TerrainSegment> segments;
    double max_grade_deg = 10.0;

    bool operator==(const TerrainProfile&) const = default;
};

/// Straight road through `origin` with heading `heading` (Pose yaw convention).
/// Terrain height depends only on the along-road coordinate.
struct RoadLayout {
    Eigen::Vector2d origin = Eigen::Vector2d::Zero();
    double heading = 0.0; // rad

    Eigen::Vector2d direction() const;
    double along(const Eigen::Vector2d& xy) const { return (xy - origin).dot(direction()); }
    Eigen::Vector2d at(double s) const { return origin + s * direction(); }

    bool operator==(const RoadLayout&) const = default;
};

/// Evaluable elevation profile z(u), laterally level. Outside [0, length] the
/// first and last segments are extended.
class Terrain {
  public:
    /// Throws ScenarioError for empty/invalid segments or slopes steeper than max_grade_deg.
    explicit Terrain(TerrainProfile profile);

    double height(double u) const;
    double slope(double u) const;
    double length() const noexcept { return length_; }
    const TerrainProfile& profile() const noexcept { return profile_; }

    /// Geometric grade over a wheelbase centred at u: asin((z(u + w/2) - z(u - w/2)) / w), degrees.
    double grade_deg(double u, double wheelbase) const;

    /// Exact height range over [u0, u1].
    std::pair<double, double> height_bounds(double u0, double u1) const;

    /// Distance along the unit direction `dir` from `origin` to the first
    /// terrain crossing within max_range, or nullopt. The returned point lies
    /// on the surface to 1e-9 m vertically.
    std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double max_range,
                                    const RoadLayout& layout) const;

  private:
    struct Piece {
        SegmentKind kind;
        double u0, u1;
        double z0;
        double slope;
        double amplitude;
        double k; // 2 pi / wavelength
    };
    const Piece& piece_at(double u) const;
    static double piece_height(const Piece& p, double u);
    static double piece_slope(const Piece& p, double u);
    std::pair<double, double> cell_bounds(long cell) const;

    TerrainProfile profile_;
    std::vector<Piece> pieces_;
    double length_ = 0.0;

    static constexpr double kCell = 4.0;
    long grid_first_cell_ = 0;
    std::vector<std::pair<double, double>> grid_;
    double grid_max_ = -std::numeric_limits<double>::infinity();
};

// =============================================================================
// Sensor models
// =============================================================================

/// Spinning multi-ring lidar. Angles in degrees.
struct LidarModel {
    std::vector<double> ring_elevations_deg;
    double azimuth_step_deg = 0.2;
    double azimuth_fov_deg = 360.0; // centred on the vehicle's forward axis
    double max_range = 200.0;       // m
    double range_noise = 0.0;       // sigma_l, m, per return
    double frame_rate = 10.0;       // Hz
    double mount_height = 1.9;      // m above the vehicle reference point
    double mount_forward = 0.0;     // m ahead of the vehicle reference point

    /// 32 rings from -25 to +15 degrees, dense near the horizon.
    static LidarModel vlp32();
    void validate() const;
    /// Ray directions in the lidar frame (x forward, y left, z up).
    std::vector<Eigen::Vector3d> ray_directions() const;

    bool operator==(const LidarModel&) const = default;
};

/// Pose error model. Walks accumulate from frame 0; white noise is drawn fresh
/// each frame. Rotations are in radians.
struct OdometryModel {
    Eigen::Vector3d translation_walk = Eigen::Vector3d::Zero();  // m per frame, std per axis
    Eigen::Vector3d rotation_walk = Eigen::Vector3d::Zero();     // rad per frame (roll, pitch, yaw)
    Eigen::Vector3d translation_drift = Eigen::Vector3d::Zero(); // m per frame, deterministic
    Eigen::Vector3d rotation_drift = Eigen::Vector3d::Zero();    // rad per frame, deterministic
    Eigen::Vector3d translation_white = Eigen::Vector3d::Zero(); // m, std per axis
    Eigen::Vector3d rotation_white = Eigen::Vector3d::Zero();    // rad, std per axis

    void validate() const;
    bool is_perfect() const;

    bool operator==(const OdometryModel&) const = default;
};

/// Independent generator for one noise purpose derived from the master seed.
enum class NoiseStream : std::uint32_t { Lidar = 1, Odometry = 2, Test = 3 };
std::mt19937_64 make_stream(std::uint64_t master_seed, NoiseStream purpose);

/// Lidar-to-world transform of a sensor mounted on a vehicle at `vehicle`.
RigidTransform lidar_to_world(const Pose& vehicle, const LidarModel& lidar);

/// Casts every ray of the scan pattern against the terrain and returns the hits
/// in the lidar frame, with Gaussian range noise drawn from `rng`.
PointCloudFrame render_frame(const Pose& vehicle, const Terrain& terrain, const RoadLayout& layout,
                             const LidarModel& lidar, std::mt19937_64& rng, std::int64_t frame_index,
                             double timestamp);

/// Renders frames with a cached scan pattern.
class LidarSimulator {
  public:
    LidarSimulator(LidarModel lidar, const Terrain& terrain, RoadLayout layout, std::uint64_t master_seed);

    PointCloudFrame render(const Pose& vehicle, std::int64_t frame_index, double timestamp);

  private:
    LidarModel lidar_;
    const Terrain* terrain_;
    RoadLayout layout_;
    std::vector<Eigen::Vector3d> rays_;
    std::mt19937_64 rng_;
};

/// Stateful odometry corruption. Frames must be requested in non-decreasing
/// order; skipped frames still advance the walk.
class OdometryCorruptor {
  public:
    OdometryCorruptor(OdometryModel model, std::uint64_t master_seed);

    /// truth with its rotation right-multiplied by the body-frame error and
    /// the world-frame translation error added.
    RigidTransform corrupt(const RigidTransform& truth, std::int64_t frame_index);

    const Eigen::Vector3d& translation_walk() const noexcept { return walk_t_; }
    const Eigen::Vector3d& rotation_walk() const noexcept { return walk_r_; }

  private:
    void advance_to(std::int64_t frame_index);

    OdometryModel model_;
    std::mt19937_64 rng_;
    std::int64_t frame_ = 0;
    Eigen::Vector3d walk_t_ = Eigen::Vector3d::Zero();
    Eigen::Vector3d walk_r_ = Eigen::Vector3d::Zero();
};

// =============================================================================
// Scenarios
// =============================================================================

struct ScenarioSpec {
    std::string name = "scenario";
    TerrainProfile terrain;
    RoadLayout layout;
    double length = 500.0;           // m of path
    double waypoint_spacing = 1.0;   // m
    double speed = 15.0;             // m/s
    LidarModel lidar = LidarModel::vlp32();
    OdometryModel odometry;
    std::uint64_t seed = 1;

    bool operator==(const ScenarioSpec&) const = default;
};

struct Scenario {
    ScenarioSpec spec;
    Terrain terrain;
    Path path;
    std::vector<double> truth_grade_deg; // per waypoint
};

/// Ground-truth path (pitch = geometric grade over the wheelbase) and grade map.
Scenario build_scenario(const ScenarioSpec& spec, double wheelbase);

/// True vehicle pose at arclength s.
Pose vehicle_pose(const Scenario& scenario, double s, double wheelbase);

/// Waypoint nearest to arclength s; ties resolve to the lower index.
std::size_t closest_waypoint_at(const Scenario& scenario, double s);

// Default suite.
ScenarioSpec flat_scenario(double length = 500.0);
ScenarioSpec ramp_scenario(double grade_deg = 3.0, double length = 500.0);
ScenarioSpec rolling_hills_scenario(double length = 1000.0, double wavelength = 1000.0, double peak_grade_deg = 2.0);
/// Rolling hills with the calibrated odometry noise used for bias fitting and error statistics.
ScenarioSpec noisy_hills_scenario(std::uint64_t seed);
ScenarioSpec odometry_stress_scenario(std::uint64_t seed);

} // namespace gradepreview::sim
