#pragma once

#include <cstddef>
#include <span>

namespace gradepreview::stats {

double mean(std::span<const double> values);
/// Unbiased (n - 1) sample standard deviation; 0 for fewer than two samples.
double sample_std(std::span<const double> values);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double intercept_stderr = 0.0;
    double r_squared = 0.0;
    std::size_t count = 0;

    double operator()(double x) const { return slope * x + intercept; }
};

/// Ordinary least squares y = slope * x + intercept. Requires at least two
/// samples with distinct x; throws std::invalid_argument otherwise.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

} // namespace gradepreview::stats
