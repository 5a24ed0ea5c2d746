#include "gradepreview/report.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <stdexcept>

#include <fmt/format.h>

#include "textio.hpp"

namespace gradepreview {

namespace {

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

} // namespace

ErrorSummary summarize_errors(std::vector<WaypointError> errors) {
    ErrorSummary out;
    std::vector<double> values;
    values.reserve(errors.size());
    for (const WaypointError& e : errors) values.push_back(e.error_deg);
    out.count = errors.size();
    out.mean = stats::mean(values);
    out.std = stats::sample_std(values);
    out.errors = std::move(errors);
    return out;
}

ErrorSummary compute_errors(std::span<const double> truth_grade_deg, const GradeTrack& track) {
    std::vector<WaypointError> errors;
    const std::size_t n = std::min({truth_grade_deg.size(), track.raw.size(), track.filtered.size()});
    for (std::size_t i = 0; i < n; ++i) {
        if (!track.raw[i]) continue;
        WaypointError e;
        e.waypoint = i;
        e.truth_deg = truth_grade_deg[i];
        e.estimate_deg = track.filtered[i].grade;
        e.error_deg = e.truth_deg - e.estimate_deg;
        e.emission_range = track.raw[i]->emission_range;
        e.frame_lag = track.raw[i]->frame_lag;
        errors.push_back(e);
    }
    if (errors.empty()) throw AlignmentError("no waypoint has both a truth value and an estimate");
    return summarize_errors(std::move(errors));
}

std::optional<double> RangeBinning::std_ratio() const {
    std::optional<double> lo, hi;
    for (const RangeBin& b : bins) {
        if (!b.abs_error_std) continue;
        lo = lo ? std::min(*lo, *b.abs_error_std) : *b.abs_error_std;
        hi = hi ? std::max(*hi, *b.abs_error_std) : *b.abs_error_std;
    }
    const auto populated = std::count_if(bins.begin(), bins.end(), [](const RangeBin& b) { return !b.flagged; });
    if (populated < 2 || !lo) return std::nullopt;
    return *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
}

RangeBinning bin_by_range(std::span<const WaypointError> errors, double bin_width, std::size_t min_count) {
    if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw std::invalid_argument("bin width must be positive");
    RangeBinning out;
    out.bin_width = bin_width;
    out.min_count = min_count;
    if (errors.empty()) return out;

    std::vector<std::vector<double>> by_bin;
    double range_sum = 0.0;
    for (const WaypointError& e : errors) {
        const auto k = static_cast<std::size_t>(std::floor(std::max(0.0, e.emission_range) / bin_width));
        if (k >= by_bin.size()) by_bin.resize(k + 1);
        by_bin[k].push_back(std::abs(e.error_deg));
        range_sum += e.emission_range;
    }
    out.mean_emission_range = range_sum / static_cast<double>(errors.size());
    for (std::size_t k = 0; k < by_bin.size(); ++k) {
        RangeBin b;
        b.lower = static_cast<double>(k) * bin_width;
        b.upper = static_cast<double>(k + 1) * bin_width;
        b.count = by_bin[k].size();
        b.mean_abs_error = stats::mean(by_bin[k]);
        b.flagged = b.count < std::max<std::size_t>(min_count, 2);
        if (!b.flagged) b.abs_error_std = stats::sample_std(by_bin[k]);
        out.bins.push_back(b);
    }
    return out;
}

TimingStats timing_stats(std::span<const double> times_ms, std::span<const double> filter_length) {
    if (times_ms.empty()) throw InsufficientDataError("timing statistics need at least one sample");
    TimingStats out;
    out.count = times_ms.size();
    out.min_ms = *std::min_element(times_ms.begin(), times_ms.end());
    out.max_ms = *std::max_element(times_ms.begin(), times_ms.end());
    out.mean_ms = stats::mean(times_ms);
    if (filter_length.size() == times_ms.size() && times_ms.size() >= 2) {
        const auto [lo, hi] = std::minmax_element(filter_length.begin(), filter_length.end());
        if (*lo != *hi) out.growth = stats::fit_line(filter_length, times_ms);
    }
    return out;
}

TimingStats timing_stats(std::span<const FrameTiming> timings) {
    std::vector<double> t, len;
    for (const FrameTiming& f : timings) {
        t.push_back(f.total_ms());
        len.push_back(static_cast<double>(f.filter_length));
    }
    return timing_stats(t, len);
}

ErrorReport build_report(std::string name, std::span<const double> truth_grade_deg, const GradeTrack& track,
                         std::span<const FrameTiming> timings, double bin_width) {
    ErrorReport r;
    r.name = std::move(name);
    try {
        r.errors = compute_errors(truth_grade_deg, track);
    } catch (const AlignmentError&) {
        // no truth, or nothing emitted: the report still carries counts and timing
    }
    r.ranges = bin_by_range(r.errors.errors, bin_width);
    try {
        r.whiteness = residual_whiteness(collect_residuals(track.filtered));
    } catch (const InsufficientDataError&) {
    }
    if (!timings.empty()) r.timing = timing_stats(timings);
    r.estimates = static_cast<std::size_t>(
        std::count_if(track.raw.begin(), track.raw.end(), [](const auto& e) { return e.has_value(); }));
    r.failed = track.failed.size();
    return r;
}

// -----------------------------------------------------------------------------

void write_waypoint_csv(const std::filesystem::path& file, std::span<const double> truth_grade_deg,
                        const GradeTrack& track) {
    auto out = textio::open_output(file);
    out << "index,truth_deg,raw_deg,filtered_deg,residual_deg,frame_lag,emission_range_m\n";
    const std::size_t n = std::max({truth_grade_deg.size(), track.raw.size(), track.filtered.size()});
    for (std::size_t i = 0; i < n; ++i) {
        std::optional<double> truth, raw, filtered, residual, range;
        std::string lag;
        if (i < truth_grade_deg.size()) truth = truth_grade_deg[i];
        if (i < track.raw.size() && track.raw[i]) {
            raw = track.raw[i]->grade_deg;
            range = track.raw[i]->emission_range;
            lag = fmt::format("{}", track.raw[i]->frame_lag);
        }
        if (i < track.filtered.size()) {
            filtered = track.filtered[i].grade;
            residual = track.filtered[i].residual;
        }
        out << fmt::format("{},{},{},{},{},{},{}\n", i, opt(truth), opt(raw), opt(filtered), opt(residual), lag,
                           opt(range));
    }
    textio::finish(out, file);
}

void write_frame_csv(const std::filesystem::path& file, std::span<const FrameTiming> timings) {
    auto out = textio::open_output(file);
    out << "frame,closest_waypoint,emitted,filter_length,filter_steps\n";
    for (const FrameTiming& t : timings) {
        out << fmt::format("{},{},{},{},{}\n", t.frame_index, t.closest_waypoint, t.emitted, t.filter_length,
                           t.filter_steps);
    }
    textio::finish(out, file);
}

void write_range_csv(const std::filesystem::path& file, const RangeBinning& ranges) {
    auto out = textio::open_output(file);
    out << "lower_m,upper_m,count,mean_abs_error_deg,abs_error_std_deg,flagged\n";
    for (const RangeBin& b : ranges.bins) {
        out << fmt::format("{},{},{},{},{},{}\n", b.lower, b.upper, b.count, b.count ? fmt::format("{}", b.mean_abs_error) : "",
                           opt(b.abs_error_std), b.flagged ? 1 : 0);
    }
    textio::finish(out, file);
}

std::string format_summary(const ErrorReport& r) {
    fmt::memory_buffer buf;
    auto out = std::back_inserter(buf);
    fmt::format_to(out, "run: {}\n", r.name);
    fmt::format_to(out, "estimates: {}  suppressed: {}\n\n", r.estimates, r.failed);
    fmt::format_to(out, "error (truth - filtered), degrees\n");
    if (r.errors.count == 0) {
        fmt::format_to(out, "  no waypoint has both a truth value and an estimate\n\n");
    } else {
        fmt::format_to(out, "  waypoints: {}\n  mean: {:.4f}\n  std: {:.4f}\n\n", r.errors.count, r.errors.mean,
                       r.errors.std);
    }
    fmt::format_to(out, "emission range\n  mean: {:.2f} m\n  bin width: {} m (bins under {} samples flagged)\n",
                   r.ranges.mean_emission_range, r.ranges.bin_width, r.ranges.min_count);
    for (const RangeBin& b : r.ranges.bins) {
        if (b.count == 0) continue;
        fmt::format_to(out, "  [{:6.1f}, {:6.1f}) n={:<5} |err| std {}\n", b.lower, b.upper, b.count,
                       b.abs_error_std ? fmt::format("{:.4f}", *b.abs_error_std) : std::string("(flagged)"));
    }
    if (auto ratio = r.ranges.std_ratio()) fmt::format_to(out, "  max/min bin std: {:.3f}\n", *ratio);
    fmt::format_to(out, "\n");
    if (r.whiteness) {
        const WhitenessStats& w = *r.whiteness;
        const double n = static_cast<double>(w.count);
        std::size_t inside = 0;
        for (double a : w.autocorrelation) inside += std::abs(a) < 3.0 / std::sqrt(n) ? 1 : 0;
        fmt::format_to(out, "filter residual\n  count: {}\n  mean: {:.4f} (3 sigma / sqrt n = {:.4f})\n  std: {:.4f}\n",
                       w.count, w.mean, 3.0 * w.std / std::sqrt(n), w.std);
        fmt::format_to(out, "  autocorrelation (bound {:.4f}, {}/{} lags inside):\n   ", 3.0 / std::sqrt(n), inside,
                       w.autocorrelation.size());
        for (std::size_t k = 0; k < w.autocorrelation.size(); ++k) {
            fmt::format_to(out, " {}:{:+.3f}", k + 1, w.autocorrelation[k]);
        }
        fmt::format_to(out, "\n\n");
    } else {
        fmt::format_to(out, "filter residual\n  too few residuals for whiteness statistics\n\n");
    }
    if (r.timing) {
        const TimingStats& t = *r.timing;
        fmt::format_to(out, "frame time (wall clock, not reproducible)\n  frames: {}\n  min: {:.3f} ms\n"
                            "  mean: {:.3f} ms\n  max: {:.3f} ms\n",
                       t.count, t.min_ms, t.mean_ms, t.max_ms);
        if (t.growth) {
            fmt::format_to(out, "  growth: {:.3e} ms per filtered waypoint (r^2 {:.3f})\n", t.growth->slope,
                           t.growth->r_squared);
        }
    }
    return fmt::to_string(buf);
}

void write_summary(const std::filesystem::path& file, const ErrorReport& report) {
    auto out = textio::open_output(file);
    out << format_summary(report);
    textio::finish(out, file);
}

void write_plot_script(const std::filesystem::path& file) {
    auto out = textio::open_output(file);
    out << R"PY(#!/usr/bin/env python3
# Redraws the run charts from the CSVs in this directory.
# usage: python3 plot.py [directory]
import csv
import math
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))


def column(rows, key):
    return [float(r[key]) if r[key] != "" else math.nan for r in rows]


with open(os.path.join(here, "waypoints.csv")) as f:
    wp = list(csv.DictReader(f))
idx = column(wp, "index")
truth = column(wp, "truth_deg")
raw = column(wp, "raw_deg")
filt = column(wp, "filtered_deg")
resid = column(wp, "residual_deg")

fig, ax = plt.subplots(figsize=(10, 4))
ax.plot(idx, raw, ".", ms=2, alpha=0.4, label="raw")
ax.plot(idx, filt, lw=1.2, label="filtered")
ax.plot(idx, truth, lw=1.0, label="truth")
ax.set_xlabel("waypoint")
ax.set_ylabel("grade [deg]")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "grade.png"), dpi=120)

err = [t - e for t, e, r in zip(truth, filt, raw) if not (math.isnan(t) or math.isnan(e) or math.isnan(r))]
if len(err) > 1:
    mu = sum(err) / len(err)
    sd = math.sqrt(sum((e - mu) ** 2 for e in err) / (len(err) - 1))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(err, bins=40, density=True, alpha=0.6)
    if sd > 0:
        lo, hi = min(err), max(err)
        xs = [lo + (hi - lo) * i / 200 for i in range(201)]
        ax.plot(xs, [math.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi)) for x in xs])
    ax.set_title(f"mean {mu:.3f} deg, std {sd:.3f} deg")
    ax.set_xlabel("truth - filtered [deg]")
    fig.tight_layout()
    fig.savefig(os.path.join(here, "error_hist.png"), dpi=120)

ranges_file = os.path.join(here, "ranges.csv")
if os.path.exists(ranges_file):
    with open(ranges_file) as f:
        rb = [r for r in csv.DictReader(f) if r["abs_error_std_deg"] != ""]
    if rb:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar([float(r["lower_m"]) for r in rb], [float(r["abs_error_std_deg"]) for r in rb],
               width=[float(r["upper_m"]) - float(r["lower_m"]) for r in rb], align="edge")
        ax.set_xlabel("emission range [m]")
        ax.set_ylabel("|error| std [deg]")
        fig.tight_layout()
        fig.savefig(os.path.join(here, "range_bins.png"), dpi=120)

res = [r for r in resid if not math.isnan(r)]
if len(res) >= 30:
    energy = sum(r * r for r in res)
    acf = [sum(res[i] * res[i + k] for i in range(len(res) - k)) / energy for k in range(1, 21)]
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(10, 6))
    a1.plot(res, lw=0.6)
    a1.set_ylabel("residual [deg]")
    a2.bar(range(1, 21), acf)
    bound = 3 / math.sqrt(len(res))
    a2.axhline(bound, ls="--", c="k")
    a2.axhline(-bound, ls="--", c="k")
    a2.set_xlabel("lag")
    a2.set_ylabel("autocorrelation")
    fig.tight_layout()
    fig.savefig(os.path.join(here, "residual.png"), dpi=120)
)PY";
    textio::finish(out, file);
}

std::vector<WaypointRow> read_waypoint_csv(const std::filesystem::path& file) {
    auto in = textio::open_input(file);
    const std::string name = file.string();
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw IoError(name, 1, "missing header");
    ++lineno;
    if (textio::trim(line) != "index,truth_deg,raw_deg,filtered_deg,residual_deg,frame_lag,emission_range_m") {
        throw IoError(name, lineno, "unexpected header");
    }
    std::vector<WaypointRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (textio::trim(line).empty()) continue;
        const auto f = textio::split(line);
        if (f.size() != 7) throw IoError(name, lineno, fmt::format("expected 7 fields, found {}", f.size()));
        WaypointRow r;
        r.index = textio::parse<std::size_t>(f[0], name, lineno, "index");
        r.truth_deg = textio::parse_optional<double>(f[1], name, lineno, "truth_deg");
        r.raw_deg = textio::parse_optional<double>(f[2], name, lineno, "raw_deg");
        r.filtered_deg = textio::parse_optional<double>(f[3], name, lineno, "filtered_deg");
        r.residual_deg = textio::parse_optional<double>(f[4], name, lineno, "residual_deg");
        r.frame_lag = textio::parse_optional<std::int64_t>(f[5], name, lineno, "frame_lag");
        r.emission_range = textio::parse_optional<double>(f[6], name, lineno, "emission_range_m");
        rows.push_back(r);
    }
    return rows;
}

ErrorReport report_from_rows(std::string name, std::span<const WaypointRow> rows, double bin_width) {
    ErrorReport r;
    r.name = std::move(name);
    std::vector<WaypointError> errors;
    std::vector<double> residuals;
    for (const WaypointRow& row : rows) {
        if (row.residual_deg) residuals.push_back(*row.residual_deg);
        if (!row.raw_deg) continue;
        ++r.estimates;
        if (!row.truth_deg || !row.filtered_deg) continue;
        WaypointError e;
        e.waypoint = row.index;
        e.truth_deg = *row.truth_deg;
        e.estimate_deg = *row.filtered_deg;
        e.error_deg = e.truth_deg - e.estimate_deg;
        e.emission_range = row.emission_range.value_or(0.0);
        e.frame_lag = row.frame_lag.value_or(0);
        errors.push_back(e);
    }
    if (errors.empty()) throw AlignmentError("no row has truth, raw and filtered values");
    r.errors = summarize_errors(std::move(errors));
    r.ranges = bin_by_range(r.errors.errors, bin_width);
    try {
        r.whiteness = residual_whiteness(residuals);
    } catch (const InsufficientDataError&) {
    }
    return r;
}

ErrorReport write_run_artifacts(const std::filesystem::path& dir, const std::string& name,
                                std::span<const double> truth_grade_deg, const GradeTrack& track,
                                std::span<const FrameTiming> timings, double bin_width) {
    ErrorReport report = build_report(name, truth_grade_deg, track, timings, bin_width);
    write_waypoint_csv(dir / "waypoints.csv", truth_grade_deg, track);
    write_frame_csv(dir / "frames.csv", timings);
    write_range_csv(dir / "ranges.csv", report.ranges);
    write_summary(dir / "summary.txt", report);
    write_plot_script(dir / "plot.py");
    return report;
}

} // namespace gradepreview
