#include "gradepreview/kalman.hpp"

#include <cmath>

#include <fmt/format.h>

namespace gradepreview {

Eigen::Matrix2d process_noise(double ds, double q) {
    Eigen::Matrix2d qm;
    qm << ds * ds * ds / 3.0, ds * ds / 2.0, ds * ds / 2.0, ds;
    return q * qm;
}

GradeState predict(const GradeState& state, double ds, double q) {
    Eigen::Matrix2d phi;
    phi << 1.0, ds, 0.0, 1.0;
    GradeState out;
    out.mean = phi * state.mean;
    out.covariance = phi * state.covariance * phi.transpose() + process_noise(ds, q);
    return out;
}

UpdateResult update(const GradeState& state, double measurement, double measurement_variance) {
    const Eigen::RowVector2d h(1.0, 0.0);
    const double s = state.covariance(0, 0) + measurement_variance;
    if (!(s > 0.0) || !std::isfinite(s)) {
        throw NumericalError(fmt::format("innovation variance {} is not positive", s));
    }
    const Eigen::Vector2d gain = state.covariance.col(0) / s;
    const double residual = measurement - state.mean(0);

    UpdateResult out;
    out.residual = residual;
    out.innovation_variance = s;
    out.state.mean = state.mean + gain * residual;
    const Eigen::Matrix2d ikh = Eigen::Matrix2d::Identity() - gain * h;
    Eigen::Matrix2d p = ikh * state.covariance * ikh.transpose() + gain * measurement_variance * gain.transpose();
    out.state.covariance = 0.5 * (p + p.transpose());
    return out;
}

namespace {

std::optional<double> first_estimate_from(const EstimateSet& raw, std::size_t from) {
    for (std::size_t i = from; i < raw.size(); ++i) {
        if (raw[i]) return raw[i]->grade_deg;
    }
    return std::nullopt;
}

// One waypoint: predict, then update if a measurement exists.
FilterStep step(GradeState& state, std::size_t k, const EstimateSet& raw, const EstimatorConfig& cfg) {
    state = predict(state, cfg.waypoint_spacing, cfg.process_noise);
    FilterStep out;
    out.waypoint = k;
    if (k < raw.size() && raw[k]) {
        UpdateResult u = update(state, raw[k]->grade_deg, cfg.measurement_variance);
        state = u.state;
        out.residual = u.residual;
        out.innovation_variance = u.innovation_variance;
        out.predicted_only = false;
    }
    out.grade = state.grade();
    out.grade_rate = state.grade_rate();
    out.covariance = state.covariance;
    out.covariance_trace = state.covariance.trace();
    return out;
}

} // namespace

FilterCheckpoint FilterCheckpoint::start(const EstimatorConfig& cfg) {
    FilterCheckpoint cp;
    cp.state.mean.setZero();
    cp.state.covariance.setZero();
    cp.state.covariance(0, 0) = cfg.prior_grade_variance.value_or(cfg.measurement_variance);
    cp.state.covariance(1, 1) = cfg.process_noise * cfg.prior_rate_scale;
    return cp;
}

GradeState initial_state(const EstimateSet& raw, const EstimatorConfig& cfg) {
    GradeState s = FilterCheckpoint::start(cfg).state;
    s.mean(0) = first_estimate_from(raw, 0).value_or(0.0);
    return s;
}

FilterOutput run_filter(const EstimateSet& raw, const EstimatorConfig& cfg, std::optional<std::size_t> extent) {
    if (!extent) extent = estimate_extent(raw);
    if (!extent) return {};
    GradeState state = initial_state(raw, cfg);
    FilterOutput out;
    out.reserve(*extent + 1);
    for (std::size_t k = 0; k <= *extent; ++k) out.push_back(step(state, k, raw, cfg));
    return out;
}

IncrementalResult run_filter_incremental(const FilterCheckpoint& checkpoint, const EstimateSet& raw,
                                         std::size_t extent, const EstimatorConfig& cfg) {
    if (extent + 1 < checkpoint.next_waypoint) {
        throw CheckpointError(fmt::format("extension ends at waypoint {} but the checkpoint is already at {}", extent,
                                          checkpoint.next_waypoint));
    }
    IncrementalResult result;
    result.checkpoint = checkpoint;
    FilterCheckpoint& cp = result.checkpoint;
    if (extent + 1 == cp.next_waypoint) return result;

    if (!cp.seeded) {
        // Prediction-only steps leave the mean at (theta0, 0), so seeding late
        // reproduces a run that knew the first estimate from the start.
        if (auto first = first_estimate_from(raw, cp.next_waypoint)) {
            cp.state.mean(0) = *first;
            cp.seeded = true;
        }
    }
    result.steps.reserve(extent + 1 - cp.next_waypoint);
    for (std::size_t k = cp.next_waypoint; k <= extent; ++k) result.steps.push_back(step(cp.state, k, raw, cfg));
    cp.next_waypoint = extent + 1;
    return result;
}

std::size_t GradeFilterTrack::refresh(const EstimateSet& raw, std::size_t final_before) {
    const std::optional<std::size_t> extent = estimate_extent(raw);
    if (!extent) {
        output_.clear();
        return 0;
    }
    if (mode_ == Mode::Full) {
        output_ = run_filter(raw, cfg_, extent);
        return output_.size();
    }

    std::size_t steps = 0;
    const std::size_t commit_to = std::min(final_before, *extent + 1);
    output_.resize(checkpoint_.next_waypoint);
    // Steps before the first estimate report the prior grade, which a batch run
    // takes from that estimate; commit only once it lies in the committed range.
    bool seeded = checkpoint_.seeded;
    for (std::size_t k = checkpoint_.next_waypoint; !seeded && k < commit_to; ++k) seeded = raw[k].has_value();
    if (seeded && commit_to > checkpoint_.next_waypoint) {
        IncrementalResult committed = run_filter_incremental(checkpoint_, raw, commit_to - 1, cfg_);
        steps += committed.steps.size();
        output_.insert(output_.end(), committed.steps.begin(), committed.steps.end());
        checkpoint_ = committed.checkpoint;
    }
    IncrementalResult tail = run_filter_incremental(checkpoint_, raw, *extent, cfg_);
    steps += tail.steps.size();
    output_.insert(output_.end(), tail.steps.begin(), tail.steps.end());
    return steps;
}

WhitenessStats residual_whiteness(std::span<const double> residuals, std::size_t max_lag) {
    if (residuals.size() < 30) {
        throw InsufficientDataError(fmt::format("whiteness needs at least 30 residuals, got {}", residuals.size()));
    }
    const std::size_t n = residuals.size();
    WhitenessStats out;
    out.count = n;
    double sum = 0.0, energy = 0.0;
    for (double r : residuals) {
        sum += r;
        energy += r * r;
    }
    out.mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double r : residuals) ss += (r - out.mean) * (r - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(n - 1));

    out.autocorrelation.reserve(max_lag);
    for (std::size_t k = 1; k <= max_lag; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i + k < n; ++i) acc += residuals[i] * residuals[i + k];
        out.autocorrelation.push_back(energy > 0.0 ? acc / energy : 0.0);
    }
    return out;
}

std::vector<double> collect_residuals(const FilterOutput& output) {
    std::vector<double> r;
    for (const FilterStep& s : output) {
        if (s.residual) r.push_back(*s.residual);
    }
    return r;
}

} // namespace gradepreview
