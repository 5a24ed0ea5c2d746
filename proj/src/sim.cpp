#include "gradepreview/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace gradepreview::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Safeguarded Newton on a bracket with f(lo) > 0 >= f(hi).
template <typename F, typename DF>
double refine_root(const F& f, const DF& df, double lo, double hi) {
    double t = 0.5 * (lo + hi);
    double dx_old = hi - lo;
    double dx = dx_old;
    double ft = f(t);
    double dft = df(t);
    for (int iter = 0; iter < 200; ++iter) {
        const bool newton_leaves_bracket = ((t - hi) * dft - ft) * ((t - lo) * dft - ft) > 0.0;
        const bool newton_too_slow = std::abs(2.0 * ft) > std::abs(dx_old * dft);
        if (newton_leaves_bracket || newton_too_slow) {
            dx_old = dx;
            dx = 0.5 * (hi - lo);
            t = lo + dx;
        } else {
            dx_old = dx;
            dx = ft / dft;
            t -= dx;
        }
        ft = f(t);
        if (std::abs(ft) < 1e-12 || std::abs(dx) < 1e-13) break;
        dft = df(t);
        if (ft > 0.0) {
            lo = t;
        } else {
            hi = t;
        }
    }
    return t;
}

} // namespace

// -----------------------------------------------------------------------------
// Terrain
// -----------------------------------------------------------------------------

TerrainSegment TerrainSegment::hills(double length, double peak_grade_deg, double wavelength) {
    const double k = kTwoPi / wavelength;
    return sinusoid(length, std::sin(deg2rad(peak_grade_deg)) / k, wavelength);
}

Eigen::Vector2d RoadLayout::direction() const { return {std::sin(heading), std::cos(heading)}; }

Terrain::Terrain(TerrainProfile profile) : profile_(std::move(profile)) {
    if (profile_.segments.empty()) throw ScenarioError("terrain needs at least one segment");
    if (!(profile_.max_grade_deg > 0.0) || !(profile_.max_grade_deg <= 90.0)) {
        throw ScenarioError("max_grade_deg must lie in (0, 90]");
    }
    const double max_slope = std::sin(deg2rad(profile_.max_grade_deg));
    double u = 0.0;
    double z = 0.0;
    for (std::size_t i = 0; i < profile_.segments.size(); ++i) {
        const TerrainSegment& s = profile_.segments[i];
        if (!(s.length > 0.0) || !std::isfinite(s.length)) {
            throw ScenarioError(fmt::format("segment {}: length must be positive", i));
        }
        Piece p{s.kind, u, u + s.length, z, 0.0, 0.0, 0.0};
        double steepest = 0.0;
        switch (s.kind) {
        case SegmentKind::Flat:
            break;
        case SegmentKind::Ramp:
            if (!std::isfinite(s.slope)) throw ScenarioError(fmt::format("segment {}: slope must be finite", i));
            p.slope = s.slope;
            steepest = std::abs(s.slope);
            break;
        case SegmentKind::Sinusoid:
            if (!(s.wavelength > 0.0) || !std::isfinite(s.wavelength) || !(s.amplitude >= 0.0) ||
                !std::isfinite(s.amplitude)) {
                throw ScenarioError(fmt::format("segment {}: sinusoid needs amplitude >= 0 and wavelength > 0", i));
            }
            p.amplitude = s.amplitude;
            p.k = kTwoPi / s.wavelength;
            steepest = s.amplitude * p.k;
            break;
        }
        // Over a wheelbase the grade never exceeds asin(steepest slope).
        if (steepest > max_slope * (1.0 + 1e-12)) {
            throw ScenarioError(fmt::format("segment {}: grade {:.3f} deg exceeds the {:.3f} deg limit", i,
                                            steepest >= 1.0 ? 90.0 : rad2deg(std::asin(steepest)),
                                            profile_.max_grade_deg));
        }
        pieces_.push_back(p);
        z = piece_height(p, p.u1);
        u = p.u1;
    }
    length_ = u;

    grid_first_cell_ = static_cast<long>(std::floor(-1000.0 / kCell));
    const long last_cell = static_cast<long>(std::floor((length_ + 1000.0) / kCell));
    grid_.reserve(static_cast<std::size_t>(last_cell - grid_first_cell_ + 1));
    for (long c = grid_first_cell_; c <= last_cell; ++c) {
        grid_.push_back(height_bounds(static_cast<double>(c) * kCell, static_cast<double>(c + 1) * kCell));
        grid_max_ = std::max(grid_max_, grid_.back().second);
    }
}

const Terrain::Piece& Terrain::piece_at(double u) const {
    if (u < pieces_.front().u1) return pieces_.front();
    if (u >= pieces_.back().u0) return pieces_.back();
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), u, [](double v, const Piece& p) { return v < p.u0; });
    return *(it - 1);
}

double Terrain::piece_height(const Piece& p, double u) {
    switch (p.kind) {
    case SegmentKind::Flat:
        return p.z0;
    case SegmentKind::Ramp:
        return p.z0 + p.slope * (u - p.u0);
    case SegmentKind::Sinusoid:
        return p.z0 + p.amplitude * std::sin(p.k * (u - p.u0));
    }
    return p.z0;
}

double Terrain::piece_slope(const Piece& p, double u) {
    switch (p.kind) {
    case SegmentKind::Flat:
        return 0.0;
    case SegmentKind::Ramp:
        return p.slope;
    case SegmentKind::Sinusoid:
        return p.amplitude * p.k * std::cos(p.k * (u - p.u0));
    }
    return 0.0;
}

double Terrain::height(double u) const { return piece_height(piece_at(u), u); }
double Terrain::slope(double u) const { return piece_slope(piece_at(u), u); }

double Terrain::grade_deg(double u, double wheelbase) const {
    const double rise = height(u + 0.5 * wheelbase) - height(u - 0.5 * wheelbase);
    return rad2deg(std::asin(rise / wheelbase));
}

std::pair<double, double> Terrain::height_bounds(double u0, double u1) const {
    if (u1 < u0) std::swap(u0, u1);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    auto include = [&](double z) {
        lo = std::min(lo, z);
        hi = std::max(hi, z);
    };
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        const Piece& p = pieces_[i];
        const double a = std::max(u0, i == 0 ? -std::numeric_limits<double>::infinity() : p.u0);
        const double b = std::min(u1, i + 1 == pieces_.size() ? std::numeric_limits<double>::infinity() : p.u1);
        if (a > b) continue;
        include(piece_height(p, a));
        include(piece_height(p, b));
        if (p.kind == SegmentKind::Sinusoid && p.amplitude > 0.0) {
            // Extrema at phase pi/2 + n pi.
            const double n_first = std::ceil((p.k * (a - p.u0) - 0.5 * std::numbers::pi) / std::numbers::pi);
            const double n_last = std::floor((p.k * (b - p.u0) - 0.5 * std::numbers::pi) / std::numbers::pi);
            for (double n = n_first; n <= n_last && n <= n_first + 1.0; n += 1.0) {
                include(p.z0 + (std::fmod(std::abs(n), 2.0) == 0.0 ? p.amplitude : -p.amplitude));
            }
        }
    }
    return {lo, hi};
}

std::pair<double, double> Terrain::cell_bounds(long cell) const {
    const long idx = cell - grid_first_cell_;
    if (idx >= 0 && idx < static_cast<long>(grid_.size())) return grid_[static_cast<std::size_t>(idx)];
    return height_bounds(static_cast<double>(cell) * kCell, static_cast<double>(cell + 1) * kCell);
}

std::optional<double> Terrain::intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double max_range,
                                         const RoadLayout& layout) const {
    const Eigen::Vector2d fwd = layout.direction();
    const double u_o = layout.along(origin.head<2>());
    const double a = dir.head<2>().dot(fwd);
    const double dz = dir.z();
    auto f = [&](double t) { return origin.z() + t * dz - height(u_o + t * a); };
    auto df = [&](double t) { return dz - slope(u_o + t * a) * a; };

    const double f0 = f(0.0);
    if (!(f0 > 0.0)) return std::nullopt;

    if (std::abs(a) < 1e-12) {
        if (dz >= 0.0) return std::nullopt;
        const double t = f0 / -dz;
        return t <= max_range ? std::optional<double>(t) : std::nullopt;
    }

    const double grid_lo = static_cast<double>(grid_first_cell_) * kCell;
    const double grid_hi = grid_lo + static_cast<double>(grid_.size()) * kCell;
    const double u_end = u_o + max_range * a;
    const bool rising_inside_grid = dz >= 0.0 && std::min(u_o, u_end) >= grid_lo && std::max(u_o, u_end) <= grid_hi;

    constexpr int kSamples = 4;
    long cell = static_cast<long>(std::floor(u_o / kCell));
    const long step = a > 0.0 ? 1 : -1;
    double t = 0.0;
    double f_t = f0;
    while (t < max_range) {
        const double u_edge = static_cast<double>(a > 0.0 ? cell + 1 : cell) * kCell;
        const double t_next = std::clamp((u_edge - u_o) / a, t, max_range);
        if (rising_inside_grid && origin.z() + t * dz > grid_max_) break;
        const auto [zlo, zhi] = cell_bounds(cell);
        const double h_low = origin.z() + std::min(t * dz, t_next * dz);
        if (h_low <= zhi && t_next > t) {
            if (origin.z() + t_next * dz < zlo) {
                // Ends below the cell's lowest point: the crossing is bracketed already.
                return refine_root(f, df, t, t_next);
            }
            double prev_t = t;
            double prev_f = f_t;
            for (int k = 1; k <= kSamples; ++k) {
                const double tk = t + (t_next - t) * k / kSamples;
                const double fk = f(tk);
                if (fk <= 0.0) return fk == 0.0 ? tk : refine_root(f, df, prev_t, tk);
                prev_t = tk;
                prev_f = fk;
            }
            f_t = prev_f;
        } else {
            f_t = f(t_next);
        }
        t = t_next;
        cell += step;
        if (t >= max_range) break;
    }
    return std::nullopt;
}

// -----------------------------------------------------------------------------
// Sensors
// -----------------------------------------------------------------------------

LidarModel LidarModel::vlp32() {
    LidarModel m;
    m.ring_elevations_deg = {-25.0,  -15.639, -11.31, -8.843, -7.254, -6.148, -5.333, -4.667,
                             -4.0,   -3.667,  -3.333, -3.0,   -2.667, -2.333, -2.0,   -1.667,
                             -1.333, -1.0,    -0.667, -0.333, 0.0,    0.333,  0.667,  1.0,
                             1.333,  1.667,   2.333,  3.333,  4.667,  7.0,    10.333, 15.0};
    return m;
}

void LidarModel::validate() const {
    if (ring_elevations_deg.empty()) throw ScenarioError("lidar needs at least one ring");
    if (!std::is_sorted(ring_elevations_deg.begin(), ring_elevations_deg.end())) {
        throw ScenarioError("lidar ring elevations must be sorted");
    }
    for (double e : ring_elevations_deg) {
        if (!(std::abs(e) < 90.0)) throw ScenarioError("lidar ring elevations must lie in (-90, 90)");
    }
    if (!(azimuth_step_deg > 0.0)) throw ScenarioError("lidar azimuth step must be positive");
    if (!(azimuth_fov_deg > 0.0 && azimuth_fov_deg <= 360.0)) throw ScenarioError("lidar fov must lie in (0, 360]");
    if (!(max_range > 0.0)) throw ScenarioError("lidar max range must be positive");
    if (!(range_noise >= 0.0) || !std::isfinite(range_noise)) throw ScenarioError("lidar range noise must be >= 0");
    if (!(frame_rate > 0.0)) throw ScenarioError("lidar frame rate must be positive");
    if (!std::isfinite(mount_height) || !std::isfinite(mount_forward)) throw ScenarioError("lidar mount must be finite");
}

std::vector<Eigen::Vector3d> LidarModel::ray_directions() const {
    const bool full_circle = azimuth_fov_deg >= 360.0;
    const auto columns = static_cast<long>(std::llround(azimuth_fov_deg / azimuth_step_deg)) + (full_circle ? 0 : 1);
    std::vector<Eigen::Vector3d> rays;
    rays.reserve(static_cast<std::size_t>(columns) * ring_elevations_deg.size());
    for (long c = 0; c < columns; ++c) {
        const double az = deg2rad(-0.5 * azimuth_fov_deg + static_cast<double>(c) * azimuth_step_deg);
        for (double elev_deg : ring_elevations_deg) {
            const double el = deg2rad(elev_deg);
            rays.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        }
    }
    return rays;
}

void OdometryModel::validate() const {
    for (const Eigen::Vector3d* v : {&translation_walk, &rotation_walk, &translation_white, &rotation_white}) {
        if (!v->allFinite() || (v->array() < 0.0).any()) throw ScenarioError("odometry noise rates must be >= 0");
    }
    if (!translation_drift.allFinite() || !rotation_drift.allFinite()) {
        throw ScenarioError("odometry drift must be finite");
    }
}

bool OdometryModel::is_perfect() const {
    return translation_walk.isZero(0.0) && rotation_walk.isZero(0.0) && translation_drift.isZero(0.0) &&
           rotation_drift.isZero(0.0) && translation_white.isZero(0.0) && rotation_white.isZero(0.0);
}

std::mt19937_64 make_stream(std::uint64_t master_seed, NoiseStream purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed & 0xffffffffu), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(purpose)};
    return std::mt19937_64(seq);
}

RigidTransform lidar_to_world(const Pose& vehicle, const LidarModel& lidar) {
    return RigidTransform::from_pose(vehicle) *
           RigidTransform::from_translation({lidar.mount_forward, 0.0, lidar.mount_height});
}

namespace {

PointCloudFrame cast_rays(const std::vector<Eigen::Vector3d>& rays, const Pose& vehicle, const Terrain& terrain,
                          const RoadLayout& layout, const LidarModel& lidar, std::mt19937_64& rng,
                          std::int64_t frame_index, double timestamp) {
    const RigidTransform sensor = lidar_to_world(vehicle, lidar);
    PointCloudFrame frame;
    frame.frame_index = frame_index;
    frame.timestamp = timestamp;
    frame.frame = CoordinateFrame::Lidar;
    frame.points.reserve(rays.size() / 2);
    for (const Eigen::Vector3d& ray : rays) {
        const std::optional<double> hit = terrain.intersect(sensor.translation(), sensor.rotate(ray), lidar.max_range,
                                                            layout);
        if (!hit) continue;
        double range = *hit;
        if (lidar.range_noise > 0.0) range += std::normal_distribution<double>(0.0, lidar.range_noise)(rng);
        frame.points.emplace_back(ray * range);
    }
    return frame;
}

} // namespace

PointCloudFrame render_frame(const Pose& vehicle, const Terrain& terrain, const RoadLayout& layout,
                             const LidarModel& lidar, std::mt19937_64& rng, std::int64_t frame_index,
                             double timestamp) {
    return cast_rays(lidar.ray_directions(), vehicle, terrain, layout, lidar, rng, frame_index, timestamp);
}

LidarSimulator::LidarSimulator(LidarModel lidar, const Terrain& terrain, RoadLayout layout, std::uint64_t master_seed)
    : lidar_(std::move(lidar)), terrain_(&terrain), layout_(std::move(layout)),
      rng_(make_stream(master_seed, NoiseStream::Lidar)) {
    lidar_.validate();
    rays_ = lidar_.ray_directions();
}

PointCloudFrame LidarSimulator::render(const Pose& vehicle, std::int64_t frame_index, double timestamp) {
    return cast_rays(rays_, vehicle, *terrain_, layout_, lidar_, rng_, frame_index, timestamp);
}

OdometryCorruptor::OdometryCorruptor(OdometryModel model, std::uint64_t master_seed)
    : model_(std::move(model)), rng_(make_stream(master_seed, NoiseStream::Odometry)) {
    model_.validate();
}

void OdometryCorruptor::advance_to(std::int64_t frame_index) {
    if (frame_index < frame_) {
        throw StreamError(fmt::format("odometry frame {} precedes frame {}", frame_index, frame_));
    }
    auto draw = [&](double sigma) { return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng_) : 0.0; };
    while (frame_ < frame_index) {
        ++frame_;
        for (int a = 0; a < 3; ++a) walk_t_[a] += model_.translation_drift[a] + draw(model_.translation_walk[a]);
        for (int a = 0; a < 3; ++a) walk_r_[a] += model_.rotation_drift[a] + draw(model_.rotation_walk[a]);
    }
}

RigidTransform OdometryCorruptor::corrupt(const RigidTransform& truth, std::int64_t frame_index) {
    advance_to(frame_index);
    auto draw = [&](double sigma) { return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng_) : 0.0; };
    Eigen::Vector3d dt = walk_t_;
    Eigen::Vector3d dr = walk_r_;
    for (int a = 0; a < 3; ++a) dt[a] += draw(model_.translation_white[a]);
    for (int a = 0; a < 3; ++a) dr[a] += draw(model_.rotation_white[a]);

    Eigen::Matrix3d rot = truth.rotation();
    const double angle = dr.norm();
    if (angle > 0.0) rot = rot * Eigen::AngleAxisd(angle, dr / angle).toRotationMatrix();
    return RigidTransform(rot, truth.translation() + dt);
}

// -----------------------------------------------------------------------------
// Scenarios
// -----------------------------------------------------------------------------

Pose vehicle_pose(const Scenario& scenario, double s, double wheelbase) {
    const Eigen::Vector2d xy = scenario.spec.layout.at(s);
    return Pose::make(xy.x(), xy.y(), scenario.terrain.height(s), 0.0,
                      deg2rad(scenario.terrain.grade_deg(s, wheelbase)), scenario.spec.layout.heading);
}

std::size_t closest_waypoint_at(const Scenario& scenario, double s) {
    const double x = s / scenario.spec.waypoint_spacing;
    const double idx = std::ceil(x - 0.5);
    if (idx <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(idx), scenario.path.size() - 1);
}

namespace {

Path build_path(const ScenarioSpec& spec, const Terrain& terrain, double wheelbase, std::vector<double>& truth) {
    if (!(spec.waypoint_spacing > 0.0)) throw ScenarioError("waypoint spacing must be positive");
    if (!(spec.length >= 2.0 * spec.waypoint_spacing)) throw ScenarioError("path length must be at least 2 spacings");
    if (!(spec.speed > 0.0)) throw ScenarioError("vehicle speed must be positive");
    const auto count = static_cast<std::size_t>(std::floor(spec.length / spec.waypoint_spacing + 1e-9)) + 1;
    std::vector<Pose> poses;
    poses.reserve(count);
    truth.clear();
    truth.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double s = static_cast<double>(i) * spec.waypoint_spacing;
        const double grade = terrain.grade_deg(s, wheelbase);
        if (!std::isfinite(grade)) throw ScenarioError(fmt::format("grade undefined at waypoint {}", i));
        const Eigen::Vector2d xy = spec.layout.at(s);
        poses.push_back(Pose::make(xy.x(), xy.y(), terrain.height(s), 0.0, deg2rad(grade), spec.layout.heading));
        truth.push_back(grade);
    }
    return Path(std::move(poses), spec.waypoint_spacing);
}

} // namespace

Scenario build_scenario(const ScenarioSpec& spec, double wheelbase) {
    if (!(wheelbase > 0.0)) throw ScenarioError("wheelbase must be positive");
    spec.lidar.validate();
    spec.odometry.validate();
    Terrain terrain(spec.terrain);
    std::vector<double> truth;
    Path path = build_path(spec, terrain, wheelbase, truth);
    return Scenario{spec, std::move(terrain), std::move(path), std::move(truth)};
}

ScenarioSpec flat_scenario(double length) {
    ScenarioSpec s;
    s.name = "flat";
    s.terrain.segments = {TerrainSegment::flat(length)};
    s.length = length;
    return s;
}

ScenarioSpec ramp_scenario(double grade_deg, double length) {
    ScenarioSpec s;
    s.name = "ramp";
    s.terrain.segments = {TerrainSegment::ramp(length, std::sin(deg2rad(grade_deg)))};
    s.length = length;
    return s;
}

ScenarioSpec rolling_hills_scenario(double length, double wavelength, double peak_grade_deg) {
    ScenarioSpec s;
    s.name = "rolling_hills";
    s.terrain.segments = {TerrainSegment::hills(length, peak_grade_deg, wavelength)};
    s.length = length;
    return s;
}

ScenarioSpec noisy_hills_scenario(std::uint64_t seed) {
    ScenarioSpec s = rolling_hills_scenario();
    s.name = "noisy_hills";
    s.seed = seed;
    s.lidar.range_noise = 0.03;
    s.odometry.translation_walk = {0.002, 0.002, 0.004};
    s.odometry.translation_drift = {0.0, 0.0, 0.005};
    s.odometry.translation_white = {0.01, 0.01, 0.03};
    s.odometry.rotation_walk = Eigen::Vector3d::Constant(deg2rad(0.001));
    s.odometry.rotation_white = Eigen::Vector3d::Constant(deg2rad(0.02));
    return s;
}

ScenarioSpec odometry_stress_scenario(std::uint64_t seed) {
    ScenarioSpec s = noisy_hills_scenario(seed);
    s.name = "odometry_stress";
    s.odometry.translation_walk = {0.005, 0.005, 0.01};
    s.odometry.translation_drift = {0.0, 0.0, 0.015};
    s.odometry.rotation_walk = Eigen::Vector3d::Constant(deg2rad(0.003));
    return s;
}

} // namespace gradepreview::sim
