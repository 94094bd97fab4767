#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pricing {

/// Numerical failure inside a time integration (step underflow, non-finite
/// state, step budget exhausted).
class SolverError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepControl {
    double rel_tol = 1e-6;
    double abs_tol = 1e-9;
    double min_step = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 500'000'000;  // accepted + rejected
};

struct IntegrationReport {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    double max_error_ratio = 0.0;  // largest accepted error/tolerance ratio
};

namespace detail {

inline double weighted_rms(const std::vector<double>& err, const std::vector<double>& y0,
                           const std::vector<double>& y1, const StepControl& ctl) {
    double acc = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) {
        const double scale =
            ctl.abs_tol + ctl.rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double r = err[i] / scale;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(err.size()));
}

} // namespace detail

/// Adaptive Dormand-Prince 5(4) integration of y' = rhs(t, y) from t0 through
/// an increasing list of checkpoint times. The step size is clamped so each
/// checkpoint is hit exactly, and on_checkpoint(index, t, y) fires there.
/// Step-size selection uses the embedded 4th-order error estimate with a PI
/// controller; the first-same-as-last property saves one rhs call per step.
///
/// rhs signature: rhs(double t, const std::vector<double>& y, std::vector<double>& dydt)
template <typename Rhs, typename Callback>
IntegrationReport integrate_dopri5(Rhs&& rhs, std::vector<double>& y, double t0,
                                   std::span<const double> checkpoints, const StepControl& ctl,
                                   Callback&& on_checkpoint) {
    // Butcher tableau
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    // difference between the 5th- and embedded 4th-order weights
    static constexpr double d1 = 71.0 / 57600, d3 = -71.0 / 16695, d4 = 71.0 / 1920,
                            d5 = -17253.0 / 339200, d6 = 22.0 / 525, d7 = -1.0 / 40;

    if (!(ctl.rel_tol > 0.0) || !(ctl.abs_tol > 0.0))
        throw std::invalid_argument("integrate_dopri5: tolerances must be positive");
    for (std::size_t i = 0; i + 1 < checkpoints.size(); ++i)
        if (!(checkpoints[i] <= checkpoints[i + 1]))
            throw std::invalid_argument("integrate_dopri5: checkpoints must be nondecreasing");
    if (!checkpoints.empty() && checkpoints.front() < t0 - 1e-14 * std::max(1.0, std::abs(t0)))
        throw std::invalid_argument("integrate_dopri5: checkpoint before start time");

    const std::size_t n = y.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n),
        yerr(n);
    IntegrationReport report;

    double t = t0;
    rhs(t, y, k1);

    // initial step heuristic: match the scale of y and y'
    double h;
    {
        double d0 = 0.0, dd1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sc = ctl.abs_tol + ctl.rel_tol * std::abs(y[i]);
            d0 += (y[i] / sc) * (y[i] / sc);
            dd1 += (k1[i] / sc) * (k1[i] / sc);
        }
        d0 = std::sqrt(d0 / static_cast<double>(n));
        dd1 = std::sqrt(dd1 / static_cast<double>(n));
        double h0 = (d0 < 1e-5 || dd1 < 1e-5) ? 1e-6 : 0.01 * d0 / dd1;
        h0 = std::min(h0, ctl.max_step);
        for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h0 * k1[i];
        rhs(t + h0, ytmp, k2);
        double d2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sc = ctl.abs_tol + ctl.rel_tol * std::abs(y[i]);
            d2 += ((k2[i] - k1[i]) / sc) * ((k2[i] - k1[i]) / sc);
        }
        d2 = std::sqrt(d2 / static_cast<double>(n)) / h0;
        const double dmax = std::max(dd1, d2);
        const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                        : std::pow(0.01 / dmax, 0.2);
        h = std::min({100.0 * h0, h1, ctl.max_step});
    }

    double err_old = 1e-4;
    bool last_rejected = false;
    const auto step_floor = [&](double at) {
        return std::max(ctl.min_step, 4.0 * std::numeric_limits<double>::epsilon() *
                                          std::max(1.0, std::abs(at)));
    };

    for (std::size_t ci = 0; ci < checkpoints.size(); ++ci) {
        const double target = checkpoints[ci];
        while (t < target - 1e-14 * std::max(1.0, std::abs(target))) {
            if (report.accepted + report.rejected >= ctl.max_steps)
                throw SolverError("integrate_dopri5: step budget exhausted at t = " +
                                  std::to_string(t));
            if (h < step_floor(t))
                throw SolverError("integrate_dopri5: step size " + std::to_string(h) +
                                  " under the floor at t = " + std::to_string(t));
            h = std::min(h, ctl.max_step);
            // clamp the trial step to land on the checkpoint, but keep the
            // controller's natural step h across the hit
            double ht = h;
            bool hits_target = false;
            if (t + ht >= target) {
                ht = target - t;
                hits_target = true;
            }

            for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + ht * a21 * k1[i];
            rhs(t + c2 * ht, ytmp, k2);
            for (std::size_t i = 0; i < n; ++i)
                ytmp[i] = y[i] + ht * (a31 * k1[i] + a32 * k2[i]);
            rhs(t + c3 * ht, ytmp, k3);
            for (std::size_t i = 0; i < n; ++i)
                ytmp[i] = y[i] + ht * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
            rhs(t + c4 * ht, ytmp, k4);
            for (std::size_t i = 0; i < n; ++i)
                ytmp[i] = y[i] + ht * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
            rhs(t + c5 * ht, ytmp, k5);
            for (std::size_t i = 0; i < n; ++i)
                ytmp[i] = y[i] +
                          ht * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                                a65 * k5[i]);
            rhs(t + ht, ytmp, k6);
            for (std::size_t i = 0; i < n; ++i)
                ynew[i] = y[i] + ht * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                                       b6 * k6[i]);
            rhs(t + ht, ynew, k7);
            for (std::size_t i = 0; i < n; ++i)
                yerr[i] = ht * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                                d6 * k6[i] + d7 * k7[i]);

            const double err = detail::weighted_rms(yerr, y, ynew, ctl);
            if (!std::isfinite(err)) {
                if (ht <= 2.0 * step_floor(t))
                    throw SolverError(
                        "integrate_dopri5: non-finite state at minimal step, t = " +
                        std::to_string(t));
                h = 0.1 * ht;
                ++report.rejected;
                last_rejected = true;
                continue;
            }

            if (err <= 1.0) {
                t = hits_target ? target : t + ht;
                y.swap(ynew);
                k1.swap(k7);
                ++report.accepted;
                report.max_error_ratio = std::max(report.max_error_ratio, err);
                if (!hits_target) {
                    double factor = 0.9 * std::pow(std::max(err, 1e-16), -0.7 / 5.0) *
                                    std::pow(err_old, 0.4 / 5.0);
                    factor = std::clamp(factor, 0.2, 5.0);
                    if (last_rejected) factor = std::min(factor, 1.0);
                    h = ht * factor;
                }
                err_old = std::max(err, 1e-4);
                last_rejected = false;
            } else {
                h = ht * std::max(0.1, 0.9 * std::pow(err, -0.2));
                ++report.rejected;
                last_rejected = true;
            }
        }
        on_checkpoint(ci, target, const_cast<const std::vector<double>&>(y));
    }
    return report;
}

} // namespace pricing
