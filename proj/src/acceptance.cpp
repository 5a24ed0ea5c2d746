#include "gradepreview/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gradepreview/kalman.hpp"
#include "gradepreview/patch.hpp"
#include "gradepreview/pipeline.hpp"
#include "gradepreview/report.hpp"
#include "gradepreview/sim.hpp"
#include "gradepreview/stats.hpp"

namespace gradepreview {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool passed = false;
    std::string detail;
};

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Point-in-rectangle by the sign of cross products against the four corners,
// walking the outline counter-clockwise. Returns the smallest edge distance,
// negative outside.
double polygon_margin(const ContactPatch& patch, const Point& p) {
    const double psi = patch.yaw();
    const Eigen::Vector2d fwd(std::sin(psi), std::cos(psi));
    const Eigen::Vector2d left(-fwd.y(), fwd.x());
    const Eigen::Vector2d c = patch.center();
    const double hl = 0.5 * patch.length();
    const double hw = 0.5 * patch.width();
    const std::array<Eigen::Vector2d, 4> corner = {c - hl * fwd - hw * left, c + hl * fwd - hw * left,
                                                   c + hl * fwd + hw * left, c - hl * fwd + hw * left};
    double margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 4; ++k) {
        const Eigen::Vector2d a = corner[k];
        const Eigen::Vector2d b = corner[(k + 1) % 4];
        const Eigen::Vector2d e = b - a;
        const Eigen::Vector2d v = p.head<2>() - a;
        margin = std::min(margin, (e.x() * v.y() - e.y() * v.x()) / e.norm());
    }
    return margin;
}

class Suite {
  public:
    explicit Suite(const AcceptanceOptions& options) : opt_(options) {
        if (opt_.work_dir) {
            work_ = *opt_.work_dir;
        } else {
            const auto stamp = std::chrono::system_clock::now().time_since_epoch().count();
            work_ = fs::temp_directory_path() / fmt::format("gradepreview-acceptance-{}", stamp);
            cleanup_ = true;
        }
        fs::create_directories(work_);
    }
    ~Suite() {
        if (cleanup_) {
            std::error_code ec;
            fs::remove_all(work_, ec);
        }
    }

    Verdict flat_null();
    Verdict ramp_recovery();
    Verdict unbiasedness();
    Verdict bias_fit_recovery();
    Verdict residual_whiteness_check();
    Verdict complexity_scaling();
    Verdict box_filter_oracle();
    Verdict kalman_algebra();
    Verdict emission_range();
    Verdict determinism();

  private:
    static EstimatorConfig ideal_config() {
        EstimatorConfig cfg;
        cfg.clear_bias();
        return cfg;
    }
    const EndToEndResult& flat_run();
    const EndToEndResult& ramp_run();
    const EstimatorConfig& calibrated();
    const std::vector<EndToEndResult>& held_out();
    std::vector<const EstimateSet*> all_estimate_sets();

    AcceptanceOptions opt_;
    fs::path work_;
    bool cleanup_ = false;
    std::optional<EndToEndResult> flat_, ramp_, lag_spread_;
    std::optional<EstimatorConfig> calibrated_;
    std::optional<BiasCalibration> calibration_;
    std::vector<EndToEndResult> held_out_;
};

const EndToEndResult& Suite::flat_run() {
    if (!flat_) flat_ = run_end_to_end(sim::build_scenario(sim::flat_scenario(500.0), 3.09), ideal_config());
    return *flat_;
}

const EndToEndResult& Suite::ramp_run() {
    if (!ramp_) ramp_ = run_end_to_end(sim::build_scenario(sim::ramp_scenario(3.0, 500.0), 3.09), ideal_config());
    return *ramp_;
}

const EstimatorConfig& Suite::calibrated() {
    if (!calibrated_) {
        // Same procedure as the fit-bias verb: uncorrected run on the training seed, then least squares.
        const EstimatorConfig base = ideal_config();
        const sim::Scenario sc = sim::build_scenario(sim::noisy_hills_scenario(opt_.training_seed), base.wheelbase);
        const EndToEndResult train = run_end_to_end(sc, base);
        calibration_ = calibrate_bias(train.track.raw, train.truth_grade_deg);
        EstimatorConfig cfg;
        calibration_->model.apply_to(cfg);
        calibrated_ = cfg;
    }
    return *calibrated_;
}

const std::vector<EndToEndResult>& Suite::held_out() {
    if (held_out_.empty()) {
        const EstimatorConfig& cfg = calibrated();
        for (std::size_t k = 0; k < opt_.held_out_seeds; ++k) {
            const std::uint64_t seed = opt_.first_held_out_seed + k;
            held_out_.push_back(run_end_to_end(sim::build_scenario(sim::noisy_hills_scenario(seed), cfg.wheelbase), cfg));
        }
    }
    return held_out_;
}

std::vector<const EstimateSet*> Suite::all_estimate_sets() {
    std::vector<const EstimateSet*> sets = {&flat_run().track.raw, &ramp_run().track.raw};
    for (const EndToEndResult& r : held_out()) sets.push_back(&r.track.raw);
    if (lag_spread_) sets.push_back(&lag_spread_->track.raw);
    return sets;
}

// 1 -----------------------------------------------------------------------------
Verdict Suite::flat_null() {
    const auto t0 = Clock::now();
    const EndToEndResult& run = flat_run();
    const double elapsed = seconds_since(t0);
    double worst = 0.0;
    for (const FilterStep& s : run.track.filtered) worst = std::max(worst, std::abs(s.grade));
    const bool covered = run.track.filtered.size() > 400;
    return {worst < 1e-6 && elapsed < 30.0 && covered,
            fmt::format("max |filtered| {:.3e} deg over {} waypoints, {:.1f} s", worst, run.track.filtered.size(),
                        elapsed)};
}

// 2 -----------------------------------------------------------------------------
Verdict Suite::ramp_recovery() {
    const EndToEndResult& run = ramp_run();
    double worst = 0.0, sum = 0.0;
    std::size_t at = 0, n = 0;
    for (std::size_t i = 20; i < run.track.filtered.size(); ++i) {
        const double e = run.truth_grade_deg[i] - run.track.filtered[i].grade;
        sum += e;
        ++n;
        if (std::abs(e) > worst) {
            worst = std::abs(e);
            at = i;
        }
    }
    return {n > 400 && worst <= 0.05,
            fmt::format("max |truth - filtered| {:.4f} deg at waypoint {}, mean {:+.4f} deg over {} waypoints", worst, at,
                        n ? sum / static_cast<double>(n) : 0.0, n)};
}

// 3 -----------------------------------------------------------------------------
Verdict Suite::unbiasedness() {
    std::vector<double> pooled;
    for (const EndToEndResult& r : held_out()) {
        for (const WaypointError& e : compute_errors(r.truth_grade_deg, r.track).errors) pooled.push_back(e.error_deg);
    }
    const double mean = stats::mean(pooled);
    const double sd = stats::sample_std(pooled);
    const BiasModel& m = calibration_->model;
    return {std::abs(mean) <= 0.1 && sd <= 1.0,
            fmt::format("pooled mean {:+.4f} deg, std {:.4f} deg, n {} over {} seeds; fitted m_f {:+.4f} b_f {:+.4f} "
                        "m_r {:+.4f} b_r {:+.4f}",
                        mean, sd, pooled.size(), held_out().size(), m.front_slope, m.front_offset, m.rear_slope,
                        m.rear_offset)};
}

// 4 -----------------------------------------------------------------------------
Verdict Suite::bias_fit_recovery() {
    constexpr double kSlope = 0.3;
    constexpr double kOffset = -1.5;
    if (!lag_spread_) {
        // White pose noise scatters the first-hit frames without a lag-dependent error of its own.
        sim::ScenarioSpec spec = sim::noisy_hills_scenario(opt_.training_seed + 1);
        spec.name = "lag_spread";
        spec.odometry.translation_walk.setZero();
        spec.odometry.translation_drift.setZero();
        spec.odometry.rotation_walk.setZero();
        spec.odometry.translation_white = {0.005, 0.005, 0.005};
        lag_spread_ = run_end_to_end(sim::build_scenario(spec, 3.09), ideal_config());
    }
    std::vector<BiasSample> samples = bias_samples(lag_spread_->track.raw, lag_spread_->truth_grade_deg);
    // Injected raw' = raw - (slope |lag| + offset), so the error grows by the same line.
    for (BiasSample& s : samples) {
        if (s.frame_lag != 0) s.error_deg += kSlope * static_cast<double>(std::abs(s.frame_lag)) + kOffset;
    }
    const BiasModel m = fit_bias_model(samples);
    auto rel = [](double got, double want) { return std::abs(got - want) / std::abs(want); };
    const double worst = std::max({rel(m.front_slope, kSlope), rel(m.front_offset, kOffset), rel(m.rear_slope, kSlope),
                                   rel(m.rear_offset, kOffset)});
    const bool enough = m.front_samples + m.rear_samples >= 200;
    return {enough && worst <= 0.10,
            fmt::format("front {:+.4f}/lag {:+.4f} ({} samples), rear {:+.4f}/lag {:+.4f} ({} samples), worst "
                        "relative error {:.1f} %",
                        m.front_slope, m.front_offset, m.front_samples, m.rear_slope, m.rear_offset, m.rear_samples,
                        100.0 * worst)};
}

// 5 -----------------------------------------------------------------------------
Verdict Suite::residual_whiteness_check() {
    bool all = true;
    std::size_t fewest_inside = 20;
    double worst_mean_ratio = 0.0;
    std::map<std::size_t, std::size_t> failing_lags;
    for (const EndToEndResult& r : held_out()) {
        const WhitenessStats w = residual_whiteness(collect_residuals(r.track.filtered));
        const double n = static_cast<double>(w.count);
        const double mean_bound = 3.0 * w.std / std::sqrt(n);
        const double lag_bound = 3.0 / std::sqrt(n);
        std::size_t inside = 0;
        for (std::size_t k = 0; k < w.autocorrelation.size(); ++k) {
            if (std::abs(w.autocorrelation[k]) < lag_bound) {
                ++inside;
            } else {
                ++failing_lags[k + 1];
            }
        }
        const bool ok = std::abs(w.mean) <= mean_bound && inside * 10 >= w.autocorrelation.size() * 9;
        all = all && ok;
        fewest_inside = std::min(fewest_inside, inside);
        worst_mean_ratio = std::max(worst_mean_ratio, std::abs(w.mean) / mean_bound);
    }
    std::string lags;
    for (const auto& [lag, count] : failing_lags) lags += fmt::format(" {}({}x)", lag, count);
    return {all, fmt::format("worst |mean| / (3 sigma / sqrt n) {:.2f}; fewest lags inside 3/sqrt n: {}/20 over {} "
                             "seeds; lags outside:{}",
                             worst_mean_ratio, fewest_inside, held_out().size(), lags.empty() ? " none" : lags)};
}

// 6 -----------------------------------------------------------------------------
Verdict Suite::complexity_scaling() {
    const auto t0 = Clock::now();
    std::vector<Pose> poses;
    for (int i = 0; i <= 200; ++i) poses.push_back(Pose::make(0.0, i, 0.0, 0.0, 0.0, 0.0));
    const Path path(poses, 1.0);
    std::mt19937_64 rng = sim::make_stream(opt_.training_seed, sim::NoiseStream::Test);
    auto cloud_of = [&](std::size_t n) {
        std::uniform_real_distribution<double> x(-2.0, 2.0), y(-5.0, 110.0), z(-0.1, 0.1);
        PointCloudFrame f;
        f.points.reserve(n);
        for (std::size_t k = 0; k < n; ++k) f.points.emplace_back(x(rng), y(rng), z(rng));
        return f;
    };
    // Sizes are interleaved within each round so slow drift in machine load
    // does not line up with the sweep, and the minimum over rounds is kept:
    // timing noise only ever adds.
    auto sweep = [&](const std::vector<std::pair<EstimatorConfig, const PointCloudFrame*>>& cases) {
        std::vector<double> best(cases.size(), std::numeric_limits<double>::infinity());
        for (int round = 0; round < 15; ++round) {
            for (std::size_t c = 0; c < cases.size(); ++c) {
                GradeEstimator est(path, cases[c].first);
                const auto s = Clock::now();
                est.ingest_frame(*cases[c].second, RigidTransform::identity(), 0);
                best[c] = std::min(best[c], std::chrono::duration<double, std::milli>(Clock::now() - s).count());
            }
        }
        return best;
    };

    std::vector<double> n_axis, d_axis;
    std::vector<PointCloudFrame> clouds;
    for (int k = 1; k <= 10; ++k) {
        const std::size_t n = 10000 * static_cast<std::size_t>(k);
        n_axis.push_back(static_cast<double>(n));
        clouds.push_back(cloud_of(n));
    }
    std::vector<std::pair<EstimatorConfig, const PointCloudFrame*>> n_cases, d_cases;
    for (const PointCloudFrame& c : clouds) n_cases.emplace_back(EstimatorConfig{}, &c);
    const PointCloudFrame fixed = cloud_of(40000);
    for (int k = 1; k <= 10; ++k) {
        EstimatorConfig cfg;
        cfg.preview_distance = 10.0 * k;
        d_axis.push_back(static_cast<double>(cfg.preview_waypoints()));
        d_cases.emplace_back(cfg, &fixed);
    }
    const std::vector<double> n_ms = sweep(n_cases);
    const std::vector<double> d_ms = sweep(d_cases);
    const stats::LinearFit fn = stats::fit_line(n_axis, n_ms);
    const stats::LinearFit fd = stats::fit_line(d_axis, d_ms);
    const double elapsed = seconds_since(t0);
    return {fn.r_squared > 0.95 && fd.r_squared > 0.95 && fn.slope > 0.0 && fd.slope > 0.0 && elapsed < 300.0,
            fmt::format("time vs N (10k..100k, d/ds 75): R^2 {:.4f}, {:.3e} ms/point; time vs d/ds (10..100, N 40k): "
                        "R^2 {:.4f}, {:.3e} ms/waypoint; {:.1f} s",
                        fn.r_squared, fn.slope, fd.r_squared, fd.slope, elapsed)};
}

// 7 -----------------------------------------------------------------------------
Verdict Suite::box_filter_oracle() {
    std::mt19937_64 rng = sim::make_stream(opt_.training_seed + 7, sim::NoiseStream::Test);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr std::size_t kCases = 100000;
    std::size_t mismatches = 0, points = 0, inside = 0, skipped = 0;
    std::vector<Point> cloud, got;
    for (std::size_t c = 0; c < kCases; ++c) {
        const Eigen::Vector2d center(200.0 * unit(rng) - 100.0, 200.0 * unit(rng) - 100.0);
        const double yaw = (2.0 * unit(rng) - 1.0) * std::numbers::pi;
        const double length = 0.05 + 3.0 * unit(rng);
        const double width = 0.05 + 3.0 * unit(rng);
        const ContactPatch patch(center, 0.0, yaw, length, width, PatchSide::Front, 0);
        const std::size_t n = 1 + static_cast<std::size_t>(unit(rng) * 40.0);
        cloud.clear();
        const double reach = 0.75 * std::max(length, width);
        for (std::size_t k = 0; k < n; ++k) {
            cloud.emplace_back(center.x() + reach * (2.0 * unit(rng) - 1.0), center.y() + reach * (2.0 * unit(rng) - 1.0),
                               10.0 * unit(rng) - 5.0);
        }
        got.clear();
        box_filter_into(cloud, patch, got);
        std::size_t g = 0;
        for (const Point& p : cloud) {
            const double margin = polygon_margin(patch, p);
            const bool in_got = g < got.size() && got[g] == p;
            if (in_got) ++g;
            if (std::abs(margin) < 1e-9) {
                ++skipped; // within rounding of the outline; exact edges are covered by unit tests
                continue;
            }
            ++points;
            const bool expect = margin > 0.0;
            inside += expect ? 1 : 0;
            if (expect != in_got) ++mismatches;
        }
        if (g != got.size()) ++mismatches;
    }
    return {mismatches == 0,
            fmt::format("{} cases, {} points ({} inside), {} mismatches, {} points within 1e-9 m of an edge skipped",
                        kCases, points, inside, mismatches, skipped)};
}

// 8 -----------------------------------------------------------------------------
Verdict Suite::kalman_algebra() {
    std::vector<std::string> notes;
    bool ok = true;

    // Process noise for one metre at the reference q.
    const double q = 8.2e-5;
    const Eigen::Matrix2d qm = process_noise(1.0, q);
    Eigen::Matrix2d expected;
    expected << q / 3.0, q / 2.0, q / 2.0, q;
    GradeState zero;
    const Eigen::Matrix2d predicted = predict(zero, 1.0, q).covariance;
    const double q_err = std::max((qm - expected).cwiseAbs().maxCoeff(), (predicted - expected).cwiseAbs().maxCoeff());
    ok = ok && q_err <= 1e-12;
    notes.push_back(fmt::format("Q error {:.1e}", q_err));

    // Random predict/update sequences.
    std::mt19937_64 rng = sim::make_stream(opt_.training_seed + 8, sim::NoiseStream::Test);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double worst_asym = 0.0, worst_eig = 0.0;
    for (int seq = 0; seq < 10000; ++seq) {
        Eigen::Matrix2d a;
        a << gauss(rng), gauss(rng), gauss(rng), gauss(rng);
        GradeState s;
        s.covariance = 3.0 * unit(rng) * a * a.transpose();
        s.mean << 10.0 * gauss(rng), gauss(rng);
        for (int step = 0; step < 20; ++step) {
            if (unit(rng) < 0.5) {
                s = predict(s, 0.1 + 4.9 * unit(rng), 1e-2 * unit(rng));
            } else {
                s = update(s, s.mean(0) + 5.0 * gauss(rng), 1e-3 + 100.0 * unit(rng)).state;
            }
            worst_asym = std::max(worst_asym, std::abs(s.covariance(0, 1) - s.covariance(1, 0)));
            const Eigen::Matrix2d sym = 0.5 * (s.covariance + s.covariance.transpose());
            worst_eig = std::min(worst_eig, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(sym).eigenvalues().minCoeff());
        }
    }
    ok = ok && worst_asym <= 1e-9 && worst_eig >= -1e-9;
    notes.push_back(fmt::format("10^4 sequences: max asymmetry {:.1e}, min eigenvalue {:.1e}", worst_asym, worst_eig));

    // Incremental against batch on every scenario run by the suite.
    const EstimatorConfig& cfg = calibrated();
    double worst_split = 0.0;
    std::size_t compared = 0;
    for (const EstimateSet* raw : all_estimate_sets()) {
        const auto extent = estimate_extent(*raw);
        if (!extent) continue;
        const FilterOutput batch = run_filter(*raw, cfg);
        std::size_t first = 0;
        while (!(*raw)[first]) ++first;
        for (std::size_t split : {std::size_t{0}, *extent / 7, *extent / 3, *extent / 2, *extent}) {
            // The head sees only estimates before the split, as in a live run,
            // unless that leaves it unseeded.
            EstimateSet prefix(raw->begin(), raw->end());
            if (split > first) {
                for (std::size_t i = split; i < prefix.size(); ++i) prefix[i].reset();
            }
            FilterOutput joined;
            FilterCheckpoint cp = FilterCheckpoint::start(cfg);
            if (split > 0) {
                IncrementalResult head = run_filter_incremental(cp, prefix, split - 1, cfg);
                joined = head.steps;
                cp = head.checkpoint;
            }
            IncrementalResult tail = run_filter_incremental(cp, *raw, *extent, cfg);
            joined.insert(joined.end(), tail.steps.begin(), tail.steps.end());
            if (joined.size() != batch.size()) {
                worst_split = std::numeric_limits<double>::infinity();
                continue;
            }
            for (std::size_t i = 0; i < batch.size(); ++i) {
                worst_split = std::max(worst_split, std::abs(joined[i].grade - batch[i].grade));
                worst_split = std::max(worst_split, (joined[i].covariance - batch[i].covariance).cwiseAbs().maxCoeff());
            }
            ++compared;
        }
    }
    // Live pipeline in incremental mode against the full-refilter run of the same seed.
    const EndToEndResult& full = held_out().front();
    const EndToEndResult inc =
        run_end_to_end(sim::build_scenario(sim::noisy_hills_scenario(opt_.first_held_out_seed), cfg.wheelbase), cfg,
                       {GradeFilterTrack::Mode::Incremental, {}});
    double worst_live = inc.track.filtered.size() == full.track.filtered.size() ? 0.0
                                                                                : std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < std::min(inc.track.filtered.size(), full.track.filtered.size()); ++i) {
        worst_live = std::max(worst_live, std::abs(inc.track.filtered[i].grade - full.track.filtered[i].grade));
    }
    ok = ok && worst_split <= 1e-9 && worst_live <= 1e-9;
    notes.push_back(fmt::format("incremental vs batch: {} splits max diff {:.1e}, live pipeline max diff {:.1e}",
                                compared, worst_split, worst_live));

    std::string detail;
    for (const std::string& s : notes) detail += (detail.empty() ? "" : "; ") + s;
    return {ok, detail};
}

// 9 -----------------------------------------------------------------------------
Verdict Suite::emission_range() {
    std::vector<WaypointError> pooled;
    for (const EndToEndResult& r : held_out()) {
        const ErrorSummary s = compute_errors(r.truth_grade_deg, r.track);
        pooled.insert(pooled.end(), s.errors.begin(), s.errors.end());
    }
    const RangeBinning bins = bin_by_range(pooled, 5.0, 5);
    std::string table;
    std::size_t populated = 0;
    for (const RangeBin& b : bins.bins) {
        if (!b.abs_error_std) continue;
        ++populated;
        table += fmt::format(" [{:.0f},{:.0f}):{:.3f}(n={})", b.lower, b.upper, *b.abs_error_std, b.count);
    }
    const std::optional<double> ratio = bins.std_ratio();
    // Not asserted: the same table without the waypoints inside the first
    // preview window, which are emitted at short range while the filter warms up.
    const double warmup = calibrated().preview_distance;
    std::vector<WaypointError> settled;
    std::copy_if(pooled.begin(), pooled.end(), std::back_inserter(settled),
                 [&](const WaypointError& e) { return static_cast<double>(e.waypoint) >= warmup; });
    const std::optional<double> settled_ratio = bin_by_range(settled, 5.0, 5).std_ratio();
    auto show = [](const std::optional<double>& r) { return r ? fmt::format("{:.3f}", *r) : std::string("n/a"); };
    return {ratio && *ratio < 2.0,
            fmt::format("mean emission range {:.1f} m; {} populated bins, max/min |error| std {} (waypoints past "
                        "the first {:.0f} m: {}, not asserted); bins:{}",
                        bins.mean_emission_range, populated, show(ratio), warmup, show(settled_ratio), table)};
}

// 10 ----------------------------------------------------------------------------
Verdict Suite::determinism() {
    const EstimatorConfig& cfg = calibrated();
    const EndToEndResult& first = held_out().front();
    const EndToEndResult again =
        run_end_to_end(sim::build_scenario(sim::noisy_hills_scenario(opt_.first_held_out_seed), cfg.wheelbase), cfg);
    const fs::path a = work_ / "determinism_a";
    const fs::path b = work_ / "determinism_b";
    fs::create_directories(a);
    fs::create_directories(b);
    write_run_artifacts(a, "determinism", first.truth_grade_deg, first.track, first.timings);
    write_run_artifacts(b, "determinism", again.truth_grade_deg, again.track, again.timings);
    std::size_t files = 0, differing = 0;
    std::uintmax_t bytes = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        if (entry.path().extension() != ".csv") continue;
        ++files;
        const std::string x = slurp(entry.path());
        const std::string y = slurp(b / entry.path().filename());
        bytes += x.size();
        if (x != y) ++differing;
    }
    return {files >= 3 && differing == 0,
            fmt::format("{} CSV files ({} bytes) compared across two runs of seed {}, {} differ", files, bytes,
                        opt_.first_held_out_seed, differing)};
}

} // namespace

std::string format_result(const CriterionResult& r) {
    return fmt::format("{} criterion {:>2}  {:<34} {:7.1f} s  {}", r.passed ? "PASS" : "FAIL", r.id, r.title, r.seconds,
                       r.detail);
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options) {
    Suite suite(options);
    struct Entry {
        int id;
        const char* title;
        Verdict (Suite::*run)();
    };
    static const Entry entries[] = {
        {1, "flat-world null", &Suite::flat_null},
        {2, "ramp recovery", &Suite::ramp_recovery},
        {3, "unbiased under calibrated noise", &Suite::unbiasedness},
        {4, "bias-fit recovery", &Suite::bias_fit_recovery},
        {5, "residual whiteness", &Suite::residual_whiteness_check},
        {6, "complexity scaling", &Suite::complexity_scaling},
        {7, "box-filter oracle", &Suite::box_filter_oracle},
        {8, "kalman algebra", &Suite::kalman_algebra},
        {9, "emission-range behaviour", &Suite::emission_range},
        {10, "determinism", &Suite::determinism},
    };
    std::vector<CriterionResult> results;
    for (const Entry& e : entries) {
        if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), e.id) == options.only.end()) {
            continue;
        }
        CriterionResult r;
        r.id = e.id;
        r.title = e.title;
        const auto t0 = Clock::now();
        try {
            const Verdict v = (suite.*e.run)();
            r.passed = v.passed;
            r.detail = v.detail;
        } catch (const std::exception& ex) {
            r.passed = false;
            r.detail = fmt::format("error: {}", ex.what());
        }
        r.seconds = seconds_since(t0);
        if (options.on_result) options.on_result(r);
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace gradepreview
