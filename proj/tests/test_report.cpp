#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gradepreview/errors.hpp"
#include "gradepreview/report.hpp"
#include "support.hpp"

using namespace gradepreview;
namespace fs = std::filesystem;

namespace {

// Track with a raw estimate and filter output equal to `filtered` at every waypoint.
GradeTrack track_of(const std::vector<double>& filtered, double range = 30.0) {
    GradeTrack t;
    for (std::size_t i = 0; i < filtered.size(); ++i) {
        RawGradeEstimate e;
        e.waypoint = i;
        e.grade_deg = filtered[i];
        e.emission_range = range;
        e.frame_lag = static_cast<std::int64_t>(i % 5) - 2;
        t.raw.push_back(e);
        FilterStep s;
        s.waypoint = i;
        s.grade = filtered[i];
        s.residual = 0.01 * std::sin(static_cast<double>(i) * 1.7);
        s.innovation_variance = 49.0;
        s.predicted_only = false;
        t.filtered.push_back(s);
    }
    return t;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / fs::path("gp_report_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

} // namespace

TEST_CASE("exact estimates give zero mean and std") {
    const std::vector<double> truth = {0.5, 1.0, -2.0, 3.0};
    const ErrorSummary s = compute_errors(truth, track_of(truth));
    CHECK(s.count == 4);
    CHECK(s.mean == 0.0);
    CHECK(s.std == 0.0);
}

TEST_CASE("constant +1 deg estimate offset gives mean -1 and std 0") {
    const std::vector<double> truth = {0.5, 1.0, -2.0, 3.0, 0.0};
    std::vector<double> est = truth;
    for (double& v : est) v += 1.0;
    const ErrorSummary s = compute_errors(truth, track_of(est));
    CHECK(s.mean == doctest::Approx(-1.0));
    CHECK(s.std == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("Gaussian estimate noise is recovered as the error std") {
    auto rng = gp_test::rng_for(4);
    std::vector<double> truth(4000), est(4000);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        truth[i] = gp_test::uniform(rng, -2.0, 2.0);
        est[i] = truth[i] + gp_test::gaussian(rng, 0.5);
    }
    const ErrorSummary s = compute_errors(truth, track_of(est));
    CHECK(s.std >= 0.45);
    CHECK(s.std <= 0.55);
    CHECK(std::abs(s.mean) < 0.05);
}

TEST_CASE("errors skip waypoints without a raw estimate and need at least one") {
    const std::vector<double> truth = {1.0, 2.0, 3.0};
    GradeTrack t = track_of({1.5, 2.5, 3.5});
    t.raw[1].reset();
    const ErrorSummary s = compute_errors(truth, t);
    CHECK(s.count == 2);
    CHECK(s.errors[1].waypoint == 2);
    t.raw[0].reset();
    t.raw[2].reset();
    CHECK_THROWS_AS(compute_errors(truth, t), AlignmentError);
    CHECK_THROWS_AS(compute_errors({}, track_of({1.0})), AlignmentError);
}

TEST_CASE("all errors at one range fill a single bin") {
    std::vector<WaypointError> errs(10);
    for (std::size_t i = 0; i < errs.size(); ++i) {
        errs[i].emission_range = 42.0;
        errs[i].error_deg = (i % 2 ? 1.0 : -1.0) * static_cast<double>(i);
    }
    const RangeBinning b = bin_by_range(errs, 5.0, 5);
    REQUIRE(b.bins.size() == 9);
    for (std::size_t k = 0; k < 8; ++k) {
        CHECK(b.bins[k].count == 0);
        CHECK(b.bins[k].flagged);
    }
    CHECK(b.bins[8].lower == 40.0);
    CHECK(b.bins[8].count == 10);
    CHECK_FALSE(b.bins[8].flagged);
    CHECK(b.bins[8].mean_abs_error == doctest::Approx(4.5));
    CHECK(b.mean_emission_range == doctest::Approx(42.0));
    CHECK_FALSE(b.std_ratio().has_value());
}

TEST_CASE("uniform ranges spread evenly and sparse bins are flagged") {
    std::vector<WaypointError> errs;
    for (int i = 0; i < 100; ++i) {
        WaypointError e;
        e.emission_range = 0.5 + i * 0.5; // 0.5 .. 50
        e.error_deg = 0.1 * ((i % 3) - 1) + 0.05;
        errs.push_back(e);
    }
    WaypointError far;
    far.emission_range = 73.0;
    far.error_deg = 9.0;
    errs.push_back(far);
    const RangeBinning b = bin_by_range(errs, 10.0, 5);
    REQUIRE(b.bins.size() == 8);
    CHECK(b.bins[0].count == 19);
    for (std::size_t k = 1; k < 5; ++k) CHECK(b.bins[k].count == 20);
    CHECK(b.bins[5].count == 1);
    CHECK(b.bins[5].flagged);
    CHECK(b.bins[6].count == 0);
    CHECK(b.bins[7].count == 1);
    CHECK(b.bins[7].flagged);
    CHECK_FALSE(b.bins[7].abs_error_std.has_value());
    REQUIRE(b.std_ratio().has_value());
    CHECK(*b.std_ratio() < 1.5);
    CHECK_THROWS_AS(bin_by_range(errs, 0.0), std::invalid_argument);
    CHECK(bin_by_range({}, 5.0).bins.empty());
}

TEST_CASE("timing statistics") {
    const std::vector<double> flat(20, 3.0);
    const TimingStats c = timing_stats(flat);
    CHECK(c.min_ms == 3.0);
    CHECK(c.max_ms == 3.0);
    CHECK(c.mean_ms == 3.0);
    CHECK_FALSE(c.growth.has_value());

    auto rng = gp_test::rng_for(8);
    std::vector<double> t, len;
    for (int i = 0; i < 200; ++i) {
        len.push_back(10.0 + i);
        t.push_back(0.02 * len.back() + 1.0 + gp_test::gaussian(rng, 0.01));
    }
    const TimingStats g = timing_stats(t, len);
    REQUIRE(g.growth.has_value());
    CHECK(std::abs(g.growth->slope - 0.02) < 0.05 * 0.02);

    const std::vector<double> one = {7.5};
    const TimingStats s = timing_stats(one);
    CHECK(s.count == 1);
    CHECK(s.mean_ms == 7.5);
    CHECK_THROWS_AS(timing_stats(std::vector<double>{}), InsufficientDataError);
}

TEST_CASE("waypoint CSV round-trips exactly") {
    TempDir dir;
    auto rng = gp_test::rng_for(15);
    std::vector<double> truth(50), est(50);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        truth[i] = gp_test::uniform(rng, -3.0, 3.0);
        est[i] = truth[i] + gp_test::gaussian(rng, 0.2);
    }
    GradeTrack t = track_of(est, 31.25);
    t.raw[7].reset();
    t.filtered[7].residual.reset();
    t.filtered[7].predicted_only = true;
    const fs::path file = dir.path / "waypoints.csv";
    write_waypoint_csv(file, truth, t);
    const auto rows = read_waypoint_csv(file);
    REQUIRE(rows.size() == 50);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].index == i);
        CHECK(*rows[i].truth_deg == truth[i]);
        CHECK(*rows[i].filtered_deg == t.filtered[i].grade);
        if (i == 7) {
            CHECK_FALSE(rows[i].raw_deg.has_value());
            CHECK_FALSE(rows[i].residual_deg.has_value());
            continue;
        }
        CHECK(*rows[i].raw_deg == t.raw[i]->grade_deg);
        CHECK(*rows[i].residual_deg == *t.filtered[i].residual);
        CHECK(*rows[i].frame_lag == t.raw[i]->frame_lag);
        CHECK(*rows[i].emission_range == 31.25);
    }
    const ErrorReport from_rows = report_from_rows("x", rows);
    const ErrorSummary direct = compute_errors(truth, t);
    CHECK(from_rows.errors.count == direct.count);
    CHECK(from_rows.errors.mean == direct.mean);
    CHECK(from_rows.errors.std == direct.std);
}

TEST_CASE("malformed waypoint CSV names the file and line") {
    TempDir dir;
    const fs::path file = dir.path / "bad.csv";
    std::ofstream(file) << "index,truth_deg,raw_deg,filtered_deg,residual_deg,frame_lag,emission_range_m\n"
                        << "0,1,1,1,0,0,10\n"
                        << "1,abc,1,1,0,0,10\n";
    try {
        read_waypoint_csv(file);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
    }
}

TEST_CASE("report generation is pure: identical inputs give identical files") {
    TempDir a, b;
    const std::vector<double> truth = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    const GradeTrack t = track_of({0.1, 0.4, 1.1, 1.4, 2.1, 2.4, 3.1});
    std::vector<FrameTiming> timings(5);
    for (std::size_t i = 0; i < timings.size(); ++i) {
        timings[i].frame_index = static_cast<std::int64_t>(i);
        timings[i].filter_length = 3 + i;
        timings[i].ingest_ms = 1.0 + static_cast<double>(i);
    }
    write_run_artifacts(a.path, "run", truth, t, timings);
    write_run_artifacts(b.path, "run", truth, t, timings);
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a.path)) {
        ++files;
        CHECK(slurp(entry.path()) == slurp(b.path / entry.path().filename()));
    }
    CHECK(files == 5);
}

TEST_CASE("summary without truth still reports counts") {
    GradeTrack t = track_of({0.1, 0.2});
    const ErrorReport r = build_report("no-truth", {}, t);
    CHECK(r.errors.count == 0);
    CHECK(r.estimates == 2);
    CHECK(format_summary(r).find("no waypoint has both a truth value and an estimate") != std::string::npos);
}
