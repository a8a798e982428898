#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ovt {

struct GradCheckEntry {
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<GradCheckEntry> per_parameter;

    bool pass(double tolerance) const { return max_relative_error < tolerance; }
};

/// Compares an analytic gradient against central finite differences of f.
///
/// Relative error per coordinate is |analytic - numeric| divided by
/// max(|analytic|, |numeric|, 1e-8). `step` must lie in [1e-7, 1e-3];
/// a non-finite evaluation of f aborts the check.
GradCheckReport finite_difference_check(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> params,
    std::span<const double> analytic_grad,
    double step);

}  // namespace ovt
