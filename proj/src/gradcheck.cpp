#include "ovt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ovt {

GradCheckReport finite_difference_check(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> params,
    std::span<const double> analytic_grad,
    double step) {
    if (!(step >= 1e-7 && step <= 1e-3)) {
        throw std::invalid_argument("finite_difference_check: step " + std::to_string(step) +
                                    " outside [1e-7, 1e-3]");
    }
    if (params.size() != analytic_grad.size()) {
        throw std::invalid_argument("finite_difference_check: gradient length mismatch");
    }

    std::vector<double> work(params.begin(), params.end());
    GradCheckReport report;
    report.per_parameter.reserve(params.size());

    for (std::size_t i = 0; i < work.size(); ++i) {
        const double saved = work[i];
        work[i] = saved + step;
        const double f_plus = f(work);
        work[i] = saved - step;
        const double f_minus = f(work);
        work[i] = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
            throw std::runtime_error("finite_difference_check: non-finite evaluation at coordinate " +
                                     std::to_string(i));
        }
        const double numeric = (f_plus - f_minus) / (2.0 * step);
        const double analytic = analytic_grad[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic - numeric) / denom;

        report.per_parameter.push_back({i, analytic, numeric, rel});
        report.max_relative_error = std::max(report.max_relative_error, rel);
    }
    return report;
}

}  // namespace ovt
