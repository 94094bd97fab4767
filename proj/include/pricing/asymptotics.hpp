#pragma once

#include "pricing/deterministic_policy.hpp"
#include "pricing/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pricing {

/// Similarity profile of the boundary layer that smooths the kink of the
/// frozen-multiplier price at xi = beta (1-t). On the stretched coordinate
/// eta = (xi - beta tau) / (sigma tau^{3/2}), tau = 1-t, the price deviation
/// from delta is sigma sqrt(tau) f(eta) to leading order, where f solves
///
///     beta^2 f'' + (3 eta + 2 f) f' - f = 0,
///     f(eta) -> 0   as eta -> +inf,
///     f'(eta) -> -1 as eta -> -inf.
///
/// The profile depends on the problem only through beta; delta is carried
/// along so the price approximation needs no ProblemSpec argument.
struct InnerLayerSolution {
    double beta = 1.0;
    std::vector<double> eta_grid;
    std::vector<double> f;
    std::vector<double> f_prime;
    double delta = 0.0;

    /// Piecewise-linear readout of f. Beyond the right edge the profile is
    /// continued by its Dirichlet value; beyond the left edge it is continued
    /// with slope -1, matching the far-field condition.
    double f_at(double eta) const {
        const double lo = eta_grid.front();
        const double hi = eta_grid.back();
        if (eta <= lo) return f.front() + (lo - eta);
        if (eta >= hi) return f.back();
        const double h = eta_grid[1] - eta_grid[0];
        auto i = static_cast<std::size_t>((eta - lo) / h);
        if (i >= eta_grid.size() - 1) i = eta_grid.size() - 2;
        const double w = (eta - eta_grid[i]) / h;
        return (1.0 - w) * f[i] + w * f[i + 1];
    }

    /// Checks the shape of the stored profile: consistent uniform grid,
    /// f(+L) at the far-field value, left slope at -1, and f decreasing.
    /// The profile decays super-exponentially on the right, far below double
    /// precision, so strict decrease is only required while values sit above
    /// a representability floor; past it the tail must stay below the floor
    /// but its leftover ordering carries no information.
    void validate() const {
        const std::size_t n = eta_grid.size();
        if (n < 5 || f.size() != n || f_prime.size() != n)
            throw std::invalid_argument("InnerLayerSolution: need >= 5 nodes and matching value arrays");
        if (!(beta > 0.0) || !std::isfinite(beta))
            throw std::invalid_argument("InnerLayerSolution: beta must be positive and finite");
        const double h = eta_grid[1] - eta_grid[0];
        if (!(h > 0.0))
            throw std::invalid_argument("InnerLayerSolution: grid must be increasing");
        constexpr double floor = 1e-30;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (std::abs(eta_grid[i + 1] - eta_grid[i] - h) > 1e-12 * std::abs(h))
                throw std::invalid_argument("InnerLayerSolution: grid must be uniform");
            const bool strictly_down = f[i + 1] < f[i];
            const bool underflowed = std::abs(f[i]) <= floor && std::abs(f[i + 1]) <= floor;
            if (!strictly_down && !underflowed)
                throw std::invalid_argument("InnerLayerSolution: f must be decreasing");
        }
        if (std::abs(f.back()) > 1e-4)
            throw std::invalid_argument("InnerLayerSolution: f does not vanish at the right edge");
        if (std::abs(f_prime.front() + 1.0) > 1e-3)
            throw std::invalid_argument("InnerLayerSolution: left slope is not -1");
    }
};

namespace detail {

/// Thomas elimination for a tridiagonal system; consumes its inputs.
/// lower[i], diag[i], upper[i] multiply x[i-1], x[i], x[i+1] in row i
/// (lower[0] and upper[n-1] unused). No pivoting: callers supply rows
/// whose diagonal dominates on the grids used here.
inline std::vector<double> solve_tridiagonal(std::vector<double>& lower,
                                             std::vector<double>& diag,
                                             std::vector<double>& upper,
                                             std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (diag[i - 1] == 0.0)
            throw std::runtime_error("solve_tridiagonal: zero pivot at row " + std::to_string(i - 1));
        const double m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    if (diag[n - 1] == 0.0)
        throw std::runtime_error("solve_tridiagonal: zero pivot at row " + std::to_string(n - 1));
    std::vector<double> x(n);
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    return x;
}

inline void require_linear_family(const ProblemSpec& spec, const char* who) {
    if (spec.demand.family() != DemandFamily::linear)
        throw std::invalid_argument(std::string(who) +
                                    ": the layer expansion is derived for the linear demand family");
}

}  // namespace detail

/// Solves the layer profile ODE on [-truncation, truncation] by damped Newton
/// iteration on a second-order central difference scheme. The right boundary
/// carries the Dirichlet value f = 0; the left boundary imposes f' = -1
/// through a one-sided second-order stencil (the far-field condition
/// constrains the slope, not the value). The initial guess is the glued
/// outer solution f0(eta) = max(0, -eta).
///
/// Shooting from the left is ill-conditioned because the (3 eta + 2 f)
/// advection grows linearly, so the two-point formulation is used instead.
/// Converges when the discrete residual drops below 1e-9 in max norm;
/// otherwise throws with the last residual after 100 iterations.
inline InnerLayerSolution solve_inner_ode(double beta, double truncation = 10.0,
                                          std::size_t n_nodes = 2001) {
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw std::invalid_argument("solve_inner_ode: beta must be positive and finite");
    if (!(truncation > 0.0) || !std::isfinite(truncation))
        throw std::invalid_argument("solve_inner_ode: truncation must be positive and finite");
    if (n_nodes < 5)
        throw std::invalid_argument("solve_inner_ode: need at least 5 nodes");

    const std::size_t n = n_nodes;
    const double h = 2.0 * truncation / static_cast<double>(n - 1);
    std::vector<double> eta(n);
    for (std::size_t i = 0; i < n; ++i)
        eta[i] = -truncation + static_cast<double>(i) * h;

    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = std::max(0.0, -eta[i]);

    const double b2h2 = beta * beta / (h * h);
    auto residual = [&](const std::vector<double>& y, std::vector<double>& out) {
        out[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h) + 1.0;
        for (std::size_t i = 1; i + 1 < n; ++i)
            out[i] = b2h2 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) +
                     (3.0 * eta[i] + 2.0 * y[i]) * (y[i + 1] - y[i - 1]) / (2.0 * h) - y[i];
        out[n - 1] = y[n - 1];
    };
    auto max_abs = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    };

    constexpr double tolerance = 1e-9;
    constexpr int max_iterations = 100;
    std::vector<double> res(n), trial(n), trial_res(n);
    std::vector<double> lower(n), diag(n), upper(n), rhs(n);
    residual(f, res);
    double res_norm = max_abs(res);
    int iteration = 0;
    while (res_norm > tolerance && iteration < max_iterations) {
        lower[0] = 0.0;
        diag[0] = -3.0 / (2.0 * h);
        upper[0] = 2.0 / h;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double advection = (3.0 * eta[i] + 2.0 * f[i]) / (2.0 * h);
            lower[i] = b2h2 - advection;
            diag[i] = -2.0 * b2h2 + (f[i + 1] - f[i - 1]) / h - 1.0;
            upper[i] = b2h2 + advection;
        }
        lower[n - 1] = 0.0;
        diag[n - 1] = 1.0;
        upper[n - 1] = 0.0;
        for (std::size_t i = 0; i < n; ++i) rhs[i] = -res[i];

        // The one-sided boundary stencil reaches column 2; fold that entry
        // into row 0 with one elimination step against row 1, which restores
        // the tridiagonal shape exactly.
        if (upper[1] == 0.0)
            throw std::runtime_error("solve_inner_ode: degenerate boundary elimination; refine the grid");
        const double m = (-1.0 / (2.0 * h)) / upper[1];
        diag[0] -= m * lower[1];
        upper[0] -= m * diag[1];
        rhs[0] -= m * rhs[1];

        const std::vector<double> step = detail::solve_tridiagonal(lower, diag, upper, rhs);

        double damping = 1.0;
        double trial_norm = res_norm;
        while (damping >= 1.0 / 1024.0) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = f[i] + damping * step[i];
            residual(trial, trial_res);
            trial_norm = max_abs(trial_res);
            if (trial_norm <= (1.0 - 0.5 * damping) * res_norm) break;
            damping *= 0.5;
        }
        f.swap(trial);
        res.swap(trial_res);
        res_norm = trial_norm;
        ++iteration;
    }
    if (res_norm > tolerance)
        throw std::runtime_error("solve_inner_ode: Newton stalled at residual " +
                                 format_double(res_norm) + " after " +
                                 std::to_string(max_iterations) +
                                 " iterations; enlarge the domain or refine the grid");

    InnerLayerSolution sol;
    sol.beta = beta;
    sol.eta_grid = std::move(eta);
    sol.f = std::move(f);
    sol.f_prime.resize(n);
    sol.f_prime[0] = (-3.0 * sol.f[0] + 4.0 * sol.f[1] - sol.f[2]) / (2.0 * h);
    for (std::size_t i = 1; i + 1 < n; ++i)
        sol.f_prime[i] = (sol.f[i + 1] - sol.f[i - 1]) / (2.0 * h);
    sol.f_prime[n - 1] =
        (3.0 * sol.f[n - 1] - 4.0 * sol.f[n - 2] + sol.f[n - 3]) / (2.0 * h);
    sol.validate();
    return sol;
}

/// Convenience overload: reads beta and delta off the problem's
/// frozen-multiplier policy.
inline InnerLayerSolution solve_inner_ode(const ProblemSpec& spec, double truncation = 10.0,
                                          std::size_t n_nodes = 2001) {
    detail::require_linear_family(spec, "solve_inner_ode");
    const DeterministicPolicy policy(spec);
    InnerLayerSolution sol = solve_inner_ode(policy.beta(), truncation, n_nodes);
    sol.delta = policy.delta();
    return sol;
}

/// Leading-order stochastic price near the kink:
///     delta + sigma sqrt(tau) f((xi - beta tau) / (sigma tau^{3/2})),
/// with xi = s/g and tau = 1-t. Requires sigma > 0 and tau > 0.
inline double inner_price_approx(const InnerLayerSolution& sol, const ProblemSpec& spec,
                                 const MarketState& x) {
    detail::require_linear_family(spec, "inner_price_approx");
    spec.validate();
    x.validate();
    if (!(spec.sigma > 0.0))
        throw std::invalid_argument("inner_price_approx: sigma must be positive");
    const double tau = 1.0 - x.t;
    if (!(tau > 0.0))
        throw std::domain_error("inner_price_approx: no pricing decision at t = 1");
    if (!(x.g > 0.0))
        throw std::domain_error("inner_price_approx: demand multiplier must be positive");
    const double xi = x.s / x.g;
    const double eta = (xi - sol.beta * tau) / (spec.sigma * tau * std::sqrt(tau));
    const double delta = spec.demand.static_optimal_price(spec.terminal_cost);
    return delta + spec.sigma * std::sqrt(tau) * sol.f_at(eta);
}

/// Second-order correction to the frozen-multiplier price in the sell-out
/// region xi < beta (1-t):  a^D(t,s,g) - sigma^2 xi / 2.
inline double outer_correction(const ProblemSpec& spec, const MarketState& x) {
    detail::require_linear_family(spec, "outer_correction");
    const DeterministicPolicy policy(spec);
    x.validate();
    if (!(x.g > 0.0))
        throw std::domain_error("outer_correction: demand multiplier must be positive");
    const double xi = x.s / x.g;
    const double tau = 1.0 - x.t;
    if (!(xi < policy.beta() * tau))
        throw std::domain_error("outer_correction: xi = " + format_double(xi) +
                                " is outside the sell-out region xi < beta (1-t)");
    return policy.price(x) - 0.5 * spec.sigma * spec.sigma * xi;
}

/// Writes the layer profile as CSV with header eta,f,fprime.
inline void write_inner_layer_csv(std::ostream& os, const InnerLayerSolution& sol) {
    os << "eta,f,fprime\n";
    for (std::size_t i = 0; i < sol.eta_grid.size(); ++i)
        os << format_double(sol.eta_grid[i]) << ',' << format_double(sol.f[i]) << ','
           << format_double(sol.f_prime[i]) << '\n';
}

}  // namespace pricing
