#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gradepreview/estimator.hpp"
#include "gradepreview/types.hpp"

namespace gradepreview {

/// Constant-grade-rate state over arclength: [grade deg, grade rate deg/m].
struct GradeState {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();

    double grade() const { return mean(0); }
    double grade_rate() const { return mean(1); }
};

/// Process noise for one step of length `ds`: q * [[ds^3/3, ds^2/2], [ds^2/2, ds]].
Eigen::Matrix2d process_noise(double ds, double q);

/// x <- Phi x, P <- Phi P Phi^T + Q with Phi = [[1, ds], [0, 1]].
GradeState predict(const GradeState& state, double ds, double q);

struct UpdateResult {
    GradeState state;
    double residual = 0.0;            // z - H x_prior
    double innovation_variance = 0.0; // H P H^T + R
};

/// Scalar grade measurement update (Joseph form). Throws NumericalError when
/// the innovation variance is not positive.
UpdateResult update(const GradeState& state, double measurement, double measurement_variance);

/// Per-waypoint filter output.
struct FilterStep {
    std::size_t waypoint = 0;
    double grade = 0.0;
    double grade_rate = 0.0;
    std::optional<double> residual;
    std::optional<double> innovation_variance;
    bool predicted_only = true;
    double covariance_trace = 0.0;
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
};

using FilterOutput = std::vector<FilterStep>;

/// Prior used before waypoint 0: grade = first available estimate (0 if none),
/// rate 0, P0 = diag(prior grade variance, q * prior_rate_scale).
GradeState initial_state(const EstimateSet& raw, const EstimatorConfig& cfg);

/// Runs the filter over waypoints 0..extent (extent defaults to the farthest
/// estimate). Waypoints without an estimate get a prediction-only step.
FilterOutput run_filter(const EstimateSet& raw, const EstimatorConfig& cfg,
                        std::optional<std::size_t> extent = std::nullopt);

/// Filter state after processing waypoints [0, next_waypoint).
struct FilterCheckpoint {
    GradeState state;
    std::size_t next_waypoint = 0;
    bool seeded = false; // a measurement has been absorbed, or the prior was set from one

    static FilterCheckpoint start(const EstimatorConfig& cfg);
};

struct IncrementalResult {
    FilterOutput steps;
    FilterCheckpoint checkpoint;
};

/// Continues a checkpointed filter over waypoints checkpoint.next_waypoint..extent.
/// Matches run_filter over the same data to 1e-9. Until an estimate has been
/// seen, steps report the start grade 0 where run_filter reports the first
/// estimate, so a checkpoint is only comparable once seeded. Passing extent + 1 ==
/// next_waypoint yields an empty extension; anything smaller throws CheckpointError.
IncrementalResult run_filter_incremental(const FilterCheckpoint& checkpoint, const EstimateSet& raw,
                                         std::size_t extent, const EstimatorConfig& cfg);

/**
 * Keeps a filter track current as estimates arrive, either re-running the
 * whole prefix each time (Full) or resuming from the last waypoint that can
 * no longer change (Incremental).
 */
class GradeFilterTrack {
  public:
    enum class Mode { Full, Incremental };

    GradeFilterTrack(EstimatorConfig cfg, Mode mode) : cfg_(std::move(cfg)), mode_(mode) {
        checkpoint_ = FilterCheckpoint::start(cfg_);
    }

    /// Refilters up to the farthest estimate. Waypoints below `final_before`
    /// will receive no further estimates. Returns the number of filter steps run.
    std::size_t refresh(const EstimateSet& raw, std::size_t final_before);

    const FilterOutput& output() const noexcept { return output_; }
    Mode mode() const noexcept { return mode_; }

  private:
    EstimatorConfig cfg_;
    Mode mode_;
    FilterOutput output_;
    FilterCheckpoint checkpoint_;
};

// -----------------------------------------------------------------------------
// Residual diagnostics
// -----------------------------------------------------------------------------

struct WhitenessStats {
    double mean = 0.0;
    double std = 0.0;
    std::size_t count = 0;
    std::vector<double> autocorrelation; // lags 1..K
};

/// Mean, sample std and normalized autocorrelation about zero,
/// rho(k) = sum r_i r_{i+k} / sum r_i^2, for lags 1..max_lag.
/// Throws InsufficientDataError with fewer than 30 residuals.
WhitenessStats residual_whiteness(std::span<const double> residuals, std::size_t max_lag = 20);

/// Non-null residuals of a filter run, in waypoint order.
std::vector<double> collect_residuals(const FilterOutput& output);

} // namespace gradepreview
