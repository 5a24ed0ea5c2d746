#include <doctest.h>

#include <set>

#include "gradepreview/errors.hpp"
#include "gradepreview/estimator.hpp"
#include "support.hpp"

using namespace gradepreview;

namespace {

std::vector<Point> at_height(double z, std::size_t n = 3) { return std::vector<Point>(n, Point(0, 0, z)); }

PointCloudFrame lidar(std::int64_t index, std::vector<Point> pts) {
    PointCloudFrame f;
    f.frame_index = index;
    f.points = std::move(pts);
    return f;
}

// Closed-form simple regression, kept apart from the library's stats module.
struct Ols {
    double slope, intercept, slope_se, intercept_se;
};
Ols ols(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    Ols o;
    o.slope = (n * sxy - sx * sy) / det;
    o.intercept = (sy - o.slope * sx) / n;
    double sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - o.intercept - o.slope * x[i];
        sse += r * r;
    }
    const double s2 = sse / (n - 2);
    o.slope_se = std::sqrt(s2 * n / det);
    o.intercept_se = std::sqrt(s2 * sxx / det);
    return o;
}

} // namespace

TEST_CASE("grade from patch heights") {
    EstimatorConfig cfg;
    CHECK(estimate_grade(at_height(0.3), at_height(0.3), 0, cfg).grade_deg == 0.0);
    CHECK(estimate_grade(at_height(cfg.wheelbase / 2), at_height(0.0), 0, cfg).grade_deg ==
          doctest::Approx(30.0).epsilon(1e-12));
    // front branch with the reference coefficients: -0.29 * 5 - 1.87
    CHECK(estimate_grade(at_height(1.0), at_height(1.0), 5, cfg).grade_deg == doctest::Approx(-3.32).epsilon(1e-12));
    // means, not sums
    const std::vector<Point> front = {{0, 0, 0.1}, {0, 0, 0.3}};
    const RawGradeEstimate e = estimate_grade(front, at_height(0.0, 7), 0, cfg);
    CHECK(e.front_mean_z == doctest::Approx(0.2));
    CHECK(e.grade_deg == doctest::Approx(rad2deg(std::asin(0.2 / 3.09))));
    CHECK_THROWS_AS(estimate_grade(at_height(4.0), at_height(0.0), 0, cfg), DegenerateGeometryError);
    CHECK_THROWS_AS(estimate_grade({}, at_height(0.0), 0, cfg), std::invalid_argument);
}

TEST_CASE("bias correction branches") {
    EstimatorConfig cfg;
    CHECK(bias_correction(0, cfg) == 0.0);
    CHECK(bias_correction(-3, cfg) == doctest::Approx(0.53).epsilon(1e-12));
    CHECK(bias_correction(1, cfg) == doctest::Approx(-2.16).epsilon(1e-12));
    // discontinuous at zero on purpose
    CHECK(bias_correction(1, cfg) - bias_correction(0, cfg) == doctest::Approx(-2.16));
    CHECK(bias_correction(-1, cfg) == doctest::Approx(-0.27));
    // no cap on the lag
    CHECK(bias_correction(1000, cfg) == doctest::Approx(-0.29 * 1000 - 1.87));
}

TEST_CASE("bias fit on exact and constant data") {
    std::vector<BiasSample> s;
    for (int lag = 1; lag <= 5; ++lag) s.push_back({lag, 2.0 * lag + 1.0});
    for (int lag = 1; lag <= 4; ++lag) s.push_back({-lag, 0.7});
    s.push_back({0, 100.0}); // ignored
    const BiasModel m = fit_bias_model(s);
    CHECK(m.front_slope == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(m.front_offset == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(m.rear_slope) < 1e-12);
    CHECK(m.rear_offset == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(m.front_samples == 5);
    CHECK(m.rear_samples == 4);

    EstimatorConfig cfg;
    m.apply_to(cfg);
    CHECK(cfg.bias_front_slope == m.front_slope);
    CHECK(cfg.bias_rear_offset == m.rear_offset);
}

TEST_CASE("bias fit rejects deficient sides") {
    CHECK_THROWS_AS(fit_bias_model(std::vector<BiasSample>{{1, 0}, {2, 0}, {-1, 0}}), FitError);
    CHECK_THROWS_AS(fit_bias_model(std::vector<BiasSample>{{1, 0}, {1, 1}, {-1, 0}, {-2, 1}}), FitError);
    CHECK_THROWS_AS(fit_bias_model(std::vector<BiasSample>{}), FitError);
}

TEST_CASE("property: noisy bias fit agrees with closed-form least squares") {
    gp_test::Rng rng = gp_test::rng_for(21);
    int within = 0;
    constexpr int kTrials = 200;
    for (int t = 0; t < kTrials; ++t) {
        const double mf = gp_test::uniform(rng, -1, 1), bf = gp_test::uniform(rng, -3, 3);
        const double mr = gp_test::uniform(rng, -1, 1), br = gp_test::uniform(rng, -3, 3);
        std::vector<BiasSample> s;
        std::vector<double> fx, fy;
        for (int k = 0; k < 60; ++k) {
            const int lag = 1 + static_cast<int>(rng() % 12);
            const double e = mf * lag + bf + gp_test::gaussian(rng, 0.5);
            s.push_back({lag, e});
            fx.push_back(lag);
            fy.push_back(e);
            s.push_back({-lag, mr * lag + br + gp_test::gaussian(rng, 0.5)});
        }
        const BiasModel m = fit_bias_model(s);
        const Ols o = ols(fx, fy);
        CHECK(m.front_slope == doctest::Approx(o.slope).epsilon(1e-9));
        CHECK(m.front_offset == doctest::Approx(o.intercept).epsilon(1e-9));
        // the true line should sit within 3 standard errors nearly always
        if (std::abs(m.front_slope - mf) <= 3 * o.slope_se && std::abs(m.front_offset - bf) <= 3 * o.intercept_se) {
            ++within;
        }
    }
    CHECK(within >= kTrials * 95 / 100);
}

TEST_CASE("estimate set extent") {
    EstimateSet s(10);
    CHECK_FALSE(estimate_extent(s));
    s[3] = RawGradeEstimate{};
    s[7] = RawGradeEstimate{};
    CHECK(*estimate_extent(s) == 7);
}

TEST_CASE("scripted frames: rear first gives a negative lag") {
    // Heading +y, identity lidar-to-world. Waypoint 5 has its front patch
    // around y = 6.545 and its rear patch around y = 3.455.
    const Path path = gp_test::straight_path(20);
    EstimatorConfig cfg;
    GradeEstimator est(path, cfg);
    CHECK(est.ingest_frame(lidar(3, {}), RigidTransform::identity(), 0).empty());
    auto out = est.ingest_frame(lidar(10, {{0.0, 6.545, 0.2}}), RigidTransform::identity(), 0);
    for (const auto& e : out) CHECK(e.waypoint != 5);
    CHECK(est.accumulator()[5].front.first_frame == 10);
    CHECK_FALSE(est.accumulator()[5].rear.filled());
    out = est.ingest_frame(lidar(14, {{0.1, 3.455, 0.0}}), RigidTransform::identity(), 0);
    const auto it = std::find_if(out.begin(), out.end(), [](const auto& e) { return e.waypoint == 5; });
    REQUIRE(it != out.end());
    CHECK(it->frame_lag == -4);
    CHECK(it->grade_deg == doctest::Approx(rad2deg(std::asin(0.2 / 3.09)) + 0.40 * 4 - 0.67).epsilon(1e-12));
    CHECK(it->emission_frame == 14);
    CHECK(it->emission_range == doctest::Approx(5.0));
    REQUIRE(est.estimates()[5]);
    CHECK(*est.estimates()[5] == *it);
    CHECK(est.snapshot()->at(5) == est.estimates()[5]);
}

TEST_CASE("scripted frames: both patches in one frame give zero lag and no bias") {
    const Path path = gp_test::straight_path(20);
    GradeEstimator est(path, EstimatorConfig{});
    const auto out = est.ingest_frame(lidar(0, {{0.0, 6.545, 0.1}, {0.0, 3.455, 0.1}}), RigidTransform::identity(), 0);
    const auto it = std::find_if(out.begin(), out.end(), [](const auto& e) { return e.waypoint == 5; });
    REQUIRE(it != out.end());
    CHECK(it->frame_lag == 0);
    CHECK(it->grade_deg == 0.0);
}

TEST_CASE("lidar points are moved to the world frame before filtering") {
    const Path path = gp_test::straight_path(20);
    GradeEstimator est(path, EstimatorConfig{});
    // sensor at (0, 4, 2): the same world points expressed in its frame
    const RigidTransform t = RigidTransform::from_translation({0, 4, 2});
    const auto out = est.ingest_frame(lidar(0, {{0.0, 2.545, -2.0}, {0.0, -0.545, -2.0}}), t, 4);
    const auto it = std::find_if(out.begin(), out.end(), [](const auto& e) { return e.waypoint == 5; });
    REQUIRE(it != out.end());
    CHECK(it->front_mean_z == doctest::Approx(0.0));
    CHECK(it->emission_range == doctest::Approx(1.0));
}

TEST_CASE("preview window covers closest .. closest + d/ds") {
    const Path path = gp_test::straight_path(200);
    EstimatorConfig cfg;
    cfg.preview_distance = 10.0;
    GradeEstimator est(path, cfg);
    // points for the front and rear patches of waypoints 20 and 31
    const std::vector<Point> pts = {{0, 21.545, 0}, {0, 18.455, 0}, {0, 32.545, 0}, {0, 29.455, 0}};
    const auto out = est.ingest_frame(lidar(0, pts), RigidTransform::identity(), 20);
    std::set<std::size_t> got;
    for (const auto& e : out) got.insert(e.waypoint);
    CHECK(got.count(20) == 1);
    CHECK(got.count(31) == 0); // beyond 20 + 10
    CHECK_FALSE(est.accumulator()[31].front.filled());
}

TEST_CASE("buffers freeze on first fill and min-height refine applies") {
    const Path path = gp_test::straight_path(20);
    EstimatorConfig cfg;
    cfg.min_height_band = 0.15;
    GradeEstimator est(path, cfg);
    est.ingest_frame(lidar(0, {{0, 6.5, 0.0}, {0, 6.6, 0.05}, {0, 6.55, 0.5}}), RigidTransform::identity(), 0);
    CHECK(est.accumulator()[5].front.points.size() == 2);
    est.ingest_frame(lidar(1, {{0, 6.5, -1.0}}), RigidTransform::identity(), 0);
    CHECK(est.accumulator()[5].front.points.size() == 2);
    CHECK(est.accumulator()[5].front.first_frame == 0);
}

TEST_CASE("degenerate geometry suppresses the waypoint") {
    const Path path = gp_test::straight_path(20);
    GradeEstimator est(path, EstimatorConfig{});
    const auto out = est.ingest_frame(lidar(0, {{0.0, 6.545, 10.0}, {0.0, 3.455, 0.0}}), RigidTransform::identity(), 0);
    CHECK(std::none_of(out.begin(), out.end(), [](const auto& e) { return e.waypoint == 5; }));
    CHECK(est.accumulator()[5].status == WaypointStatus::Failed);
    REQUIRE(est.failed_waypoints().size() >= 1);
    CHECK(std::count(est.failed_waypoints().begin(), est.failed_waypoints().end(), 5u) == 1);
    CHECK_FALSE(est.estimates()[5]);
}

TEST_CASE("ingest rejects bad input") {
    const Path path = gp_test::straight_path(20);
    GradeEstimator est(path, EstimatorConfig{});
    CHECK_THROWS_AS(est.ingest_frame(lidar(0, {}), RigidTransform::identity(), 20), PathError);
    est.ingest_frame(lidar(5, {}), RigidTransform::identity(), 0);
    CHECK_THROWS_AS(est.ingest_frame(lidar(5, {}), RigidTransform::identity(), 0), StreamError);
    CHECK_THROWS_AS(est.ingest_frame(lidar(4, {}), RigidTransform::identity(), 0), StreamError);
    PointCloudFrame w = lidar(6, {});
    w.frame = CoordinateFrame::World;
    CHECK_THROWS_AS(est.ingest_frame(w, RigidTransform::identity(), 0), FrameTagError);

    EstimatorConfig other;
    other.waypoint_spacing = 2.0;
    CHECK_THROWS_AS(GradeEstimator(path, other), ConfigError);
}

TEST_CASE("property: single emission and frozen buffers under random streams") {
    gp_test::Rng rng = gp_test::rng_for(22);
    for (int run = 0; run < 20; ++run) {
        const double yaw = gp_test::any_angle(rng);
        const Path path = gp_test::straight_path(60, yaw);
        EstimatorConfig cfg;
        cfg.preview_distance = 20.0;
        GradeEstimator est(path, cfg);
        std::set<std::size_t> emitted;
        std::vector<std::vector<Point>> front_seen(60), rear_seen(60);
        std::size_t closest = 0;
        for (std::int64_t f = 0; f < 80; ++f) {
            closest = std::min<std::size_t>(59, closest + (rng() % 2));
            std::vector<Point> pts;
            const Eigen::Vector2d dir(std::sin(yaw), std::cos(yaw)), left(-dir.y(), dir.x());
            for (int k = 0; k < 40; ++k) {
                const double along = gp_test::uniform(rng, static_cast<double>(closest) - 3.0, closest + 25.0);
                const double across = gp_test::uniform(rng, -1.5, 1.5);
                const Eigen::Vector2d xy = along * dir + across * left;
                pts.emplace_back(xy.x(), xy.y(), gp_test::uniform(rng, -0.2, 0.2));
            }
            for (const auto& e : est.ingest_frame(lidar(f, pts), RigidTransform::identity(), closest)) {
                CHECK(emitted.insert(e.waypoint).second);
            }
            for (std::size_t j = 0; j < 60; ++j) {
                const auto& slot = est.accumulator()[j];
                if (!front_seen[j].empty()) CHECK(slot.front.points == front_seen[j]);
                if (!rear_seen[j].empty()) CHECK(slot.rear.points == rear_seen[j]);
                if (front_seen[j].empty()) front_seen[j] = slot.front.points;
                if (rear_seen[j].empty()) rear_seen[j] = slot.rear.points;
                CHECK(est.estimates()[j].has_value() == (slot.status == WaypointStatus::Emitted));
            }
        }
        CHECK(emitted.size() > 20);
    }
}
