#pragma once

#include "pricing/demand.hpp"
#include "pricing/deterministic_policy.hpp"
#include "pricing/io.hpp"
#include "pricing/rk45.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pricing {

/// Uniform spatial grid in the similarity coordinate xi = s/g, together with
/// the reversed times tau = 1-t at which solution rows are stored.
struct SimilarityGrid {
    double xi_max = 0.0;
    std::size_t n_xi = 0;
    std::vector<double> tau_checkpoints;

    static SimilarityGrid uniform(double xi_max, std::size_t n_xi,
                                  std::vector<double> tau_checkpoints) {
        SimilarityGrid g{xi_max, n_xi, std::move(tau_checkpoints)};
        g.validate();
        return g;
    }

    /// 0, 0.01, ..., 1: matches the simulator's default repricing interval,
    /// so policy evaluation never interpolates in tau.
    static std::vector<double> default_checkpoints() {
        std::vector<double> taus(101);
        for (std::size_t k = 0; k < taus.size(); ++k)
            taus[k] = static_cast<double>(k) / 100.0;
        return taus;
    }

    double dxi() const { return xi_max / static_cast<double>(n_xi - 1); }

    double xi(std::size_t i) const {
        return i + 1 == n_xi ? xi_max : static_cast<double>(i) * dxi();
    }

    void validate() const {
        if (!(xi_max > 0.0) || !std::isfinite(xi_max))
            throw std::invalid_argument("SimilarityGrid: xi_max must be positive and finite");
        if (n_xi < 3)
            throw std::invalid_argument("SimilarityGrid: need at least 3 nodes");
        if (tau_checkpoints.empty())
            throw std::invalid_argument("SimilarityGrid: no tau checkpoints");
        for (std::size_t k = 0; k < tau_checkpoints.size(); ++k) {
            const double tau = tau_checkpoints[k];
            if (!(tau >= 0.0 && tau <= 1.0))
                throw std::invalid_argument("SimilarityGrid: checkpoints must lie in [0,1]");
            if (k > 0 && !(tau > tau_checkpoints[k - 1]))
                throw std::invalid_argument("SimilarityGrid: checkpoints must be increasing");
        }
    }
};

/// Truncation bound far enough out that the policy is flat at delta:
/// several multiples of the largest kink location xi = beta (at tau = 1).
inline double default_xi_max(const ProblemSpec& spec) {
    const DeterministicPolicy det(spec);
    const double kink_at_one = spec.demand.family() == DemandFamily::linear
                                   ? det.beta()
                                   : spec.demand.q1() * det.rho_star();
    return 8.0 * kink_at_one;
}

struct SolverReport {
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
    double max_error_ratio = 0.0;          // largest accepted local error estimate
    std::size_t price_bound_violations = 0;  // raw maximizer outside A at checkpoints
};

/// Grid-backed solution of the value PDE in similarity variables,
///   phi_tau = 1/2 sigma^2 xi^2 phi_xixi + max_a (a - phi_xi) q(a),
/// with v(t,s,g) = g phi(1-t, s/g). psi rows hold the unprojected maximizer
/// price (q1 + phi_xi)/2; evaluation projects onto the admissible interval.
class HjbSolution {
public:
    HjbSolution(ProblemSpec spec, SimilarityGrid grid, std::vector<std::vector<double>> phi,
                std::vector<std::vector<double>> psi, SolverReport report)
        : spec_(std::move(spec)),
          grid_(std::move(grid)),
          phi_(std::move(phi)),
          psi_(std::move(psi)),
          report_(report),
          policy_(spec_) {
        grid_.validate();
        const std::size_t rows = grid_.tau_checkpoints.size();
        if (phi_.size() != rows || psi_.size() != rows)
            throw std::invalid_argument("HjbSolution: row count mismatch");
        for (std::size_t r = 0; r < rows; ++r)
            if (phi_[r].size() != grid_.n_xi || psi_[r].size() != grid_.n_xi)
                throw std::invalid_argument("HjbSolution: node count mismatch");
    }

    const ProblemSpec& spec() const { return spec_; }
    const SimilarityGrid& grid() const { return grid_; }
    const SolverReport& report() const { return report_; }
    const std::vector<std::vector<double>>& phi() const { return phi_; }
    const std::vector<std::vector<double>>& psi() const { return psi_; }
    double delta() const { return policy_.delta(); }

    /// Optimal pricing rule a^B(t, s, g) read off the stored grid.
    double price(const MarketState& x) const {
        x.validate();
        if (x.t == 1.0)
            throw std::domain_error("HjbSolution::price: no pricing decision at t = 1");
        if (x.g == 0.0) return policy_.delta();  // demand is dead; price is moot
        const double xi = x.s / x.g;
        if (xi >= grid_.xi_max) return policy_.delta();
        const double raw = interpolate(psi_, 1.0 - x.t, xi);
        return spec_.demand.admissible_prices().project(raw);
    }

    double operator()(double t, double s, double g) const { return price({t, s, g}); }

    /// Value surface v(t,s,g) = g phi(1-t, s/g), extended past the truncation
    /// bound by the far-field slope phi_xi = -C.
    double value(const MarketState& x) const {
        x.validate();
        if (x.g == 0.0) return -spec_.terminal_cost * x.s;
        const double xi = x.s / x.g;
        const double tau = 1.0 - x.t;
        if (xi >= grid_.xi_max) {
            const double edge = interpolate(phi_, tau, grid_.xi_max);
            return x.g * (edge - spec_.terminal_cost * (xi - grid_.xi_max));
        }
        return x.g * interpolate(phi_, tau, xi);
    }

    void write_csv(std::ostream& out) const {
        out << "tau,xi,phi,psi\n";
        for (std::size_t r = 0; r < grid_.tau_checkpoints.size(); ++r)
            for (std::size_t i = 0; i < grid_.n_xi; ++i)
                out << format_double(grid_.tau_checkpoints[r]) << ',' << format_double(grid_.xi(i))
                    << ',' << format_double(phi_[r][i]) << ',' << format_double(psi_[r][i])
                    << '\n';
    }

    static HjbSolution from_csv(std::istream& in, ProblemSpec spec) {
        std::string line;
        if (!next_data_line(in, line) || line.rfind("tau,xi,phi,psi", 0) != 0)
            throw std::invalid_argument("HjbSolution::from_csv: missing tau,xi,phi,psi header");
        std::vector<double> taus, xis;
        std::vector<std::vector<double>> phi, psi;
        while (next_data_line(in, line)) {
            const auto row = parse_csv_row(line);
            if (row.size() != 4)
                throw std::invalid_argument("HjbSolution::from_csv: expected 4 columns, got " +
                                            std::to_string(row.size()));
            if (taus.empty() || row[0] != taus.back()) {
                taus.push_back(row[0]);
                phi.emplace_back();
                psi.emplace_back();
            }
            if (taus.size() == 1) xis.push_back(row[1]);
            phi.back().push_back(row[2]);
            psi.back().push_back(row[3]);
        }
        if (taus.empty() || xis.size() < 3)
            throw std::invalid_argument("HjbSolution::from_csv: no data rows");
        for (const auto* rows : {&phi, &psi})
            for (const auto& r : *rows)
                if (r.size() != xis.size())
                    throw std::invalid_argument("HjbSolution::from_csv: ragged checkpoint block");
        SimilarityGrid grid{xis.back(), xis.size(), std::move(taus)};
        grid.validate();
        for (std::size_t i = 0; i < xis.size(); ++i)
            if (std::abs(xis[i] - grid.xi(i)) > 1e-12 * std::max(1.0, grid.xi_max))
                throw std::invalid_argument("HjbSolution::from_csv: xi nodes are not uniform");
        return HjbSolution(std::move(spec), std::move(grid), std::move(phi), std::move(psi),
                           SolverReport{});
    }

private:
    /// Bilinear interpolation with node snapping, so queries at stored
    /// checkpoints and grid nodes return stored values exactly.
    double interpolate(const std::vector<std::vector<double>>& rows, double tau,
                       double xi) const {
        const auto& taus = grid_.tau_checkpoints;
        std::size_t r0 = 0, r1 = 0;
        double wt = 0.0;
        if (tau <= taus.front()) {
            r0 = r1 = 0;
        } else if (tau >= taus.back()) {
            r0 = r1 = taus.size() - 1;
        } else {
            r1 = static_cast<std::size_t>(
                std::lower_bound(taus.begin(), taus.end(), tau) - taus.begin());
            r0 = r1 - 1;
            wt = (tau - taus[r0]) / (taus[r1] - taus[r0]);
            if (wt < 1e-9) { r1 = r0; wt = 0.0; }
            else if (wt > 1.0 - 1e-9) { r0 = r1; wt = 0.0; }
        }
        const double u = xi / grid_.dxi();
        auto j = static_cast<std::size_t>(u);
        double wx = u - static_cast<double>(j);
        // snap to the nearest node when within rounding distance of it
        if (wx < 1e-9 * std::max(1.0, u)) wx = 0.0;
        else if (1.0 - wx < 1e-9 * std::max(1.0, u)) { ++j; wx = 0.0; }
        if (j >= grid_.n_xi - 1) { j = grid_.n_xi - 1; wx = 0.0; }
        const auto sample = [&](const std::vector<double>& row) {
            return wx == 0.0 ? row[j] : (1.0 - wx) * row[j] + wx * row[j + 1];
        };
        const double lo = sample(rows[r0]);
        return wt == 0.0 ? lo : (1.0 - wt) * lo + wt * sample(rows[r1]);
    }

    ProblemSpec spec_;
    SimilarityGrid grid_;
    std::vector<std::vector<double>> phi_;
    std::vector<std::vector<double>> psi_;
    SolverReport report_;
    DeterministicPolicy policy_;
};

namespace detail {

inline void require_linear(const ProblemSpec& spec, const char* who) {
    if (spec.demand.family() != DemandFamily::linear)
        throw std::invalid_argument(std::string(who) +
                                    ": only the linear demand family is supported");
}

/// Stiff diffusion pins the step near the explicit stability limit, so very
/// tight tolerances cost no extra steps; they damp the marginally stable
/// boundary sawtooth that looser settings leave in the stored price rows.
inline StepControl pde_default_control() {
    StepControl ctl;
    ctl.rel_tol = 1e-12;
    ctl.abs_tol = 1e-15;
    ctl.min_step = 1e-12;
    ctl.max_steps = 500'000'000;
    return ctl;
}

} // namespace detail

/// Integrate the value PDE forward in tau from the terminal data
/// phi(0, xi) = -C xi. Boundaries: phi(tau, 0) = 0 and a Dirichlet far field
/// -C xi_max + V(C) tau taken from the deterministic solution. The price rows
/// psi are recovered from phi by second-order differencing at every
/// checkpoint, with psi(tau, 0) = q1 pinned to its boundary value.
inline HjbSolution solve_value_pde(const ProblemSpec& spec, const SimilarityGrid& grid,
                                   const StepControl& ctl = detail::pde_default_control()) {
    spec.validate();
    grid.validate();
    detail::require_linear(spec, "solve_value_pde");
    const DeterministicPolicy det(spec);
    const double q1 = spec.demand.q1();
    const double cost = spec.terminal_cost;
    const double value_rate = det.value_rate();
    const auto& A = spec.demand.admissible_prices();

    const std::size_t n = grid.n_xi;
    const double dxi = grid.dxi();
    const double inv_d2 = 1.0 / (dxi * dxi);
    const double inv_2d = 1.0 / (2.0 * dxi);
    std::vector<double> diffusion(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = grid.xi(i);
        diffusion[i] = 0.5 * spec.sigma * spec.sigma * xi * xi;
    }

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = -cost * grid.xi(i);

    const auto rhs = [&](double, const std::vector<double>& f, std::vector<double>& df) {
        df[0] = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double lap = (f[i + 1] - 2.0 * f[i] + f[i - 1]) * inv_d2;
            const double grad = (f[i + 1] - f[i - 1]) * inv_2d;
            const double a = A.project(0.5 * (q1 + grad));
            df[i] = diffusion[i] * lap + (a - grad) * (q1 - a);
        }
        df[n - 1] = value_rate;
    };

    std::vector<std::vector<double>> phi, psi;
    phi.reserve(grid.tau_checkpoints.size());
    psi.reserve(grid.tau_checkpoints.size());
    std::size_t violations = 0;
    const auto store = [&](std::size_t, double, const std::vector<double>& f) {
        phi.push_back(f);
        std::vector<double> row(n);
        row[0] = q1;  // boundary value of the pricing function
        for (std::size_t i = 1; i + 1 < n; ++i)
            row[i] = 0.5 * (q1 + (f[i + 1] - f[i - 1]) * inv_2d);
        row[n - 1] =
            0.5 * (q1 + (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * inv_2d);
        for (double a : row)
            if (a < A.lo - 1e-9 || a > A.hi + 1e-9) ++violations;
        psi.push_back(std::move(row));
    };

    IntegrationReport rep;
    try {
        rep = integrate_dopri5(rhs, y, 0.0, grid.tau_checkpoints, ctl, store);
    } catch (const SolverError& e) {
        const double last_tau = phi.empty() ? -1.0 : grid.tau_checkpoints[phi.size() - 1];
        throw SolverError(std::string(e.what()) + "; last stored checkpoint tau = " +
                          (phi.empty() ? std::string("none") : std::to_string(last_tau)));
    }

    const SolverReport report{rep.accepted, rep.rejected, rep.max_error_ratio, violations};
    return HjbSolution(spec, grid, std::move(phi), std::move(psi), report);
}

/// Price rows from integrating the pricing-function PDE directly,
///   psi_tau = 1/2 sigma^2 xi^2 psi_xixi + (sigma^2 xi - q1 + psi) psi_xi,
/// used as an independent cross-check on psi derived from phi.
struct PriceGridSolution {
    SimilarityGrid grid;
    std::vector<std::vector<double>> psi;
    SolverReport report;
};

inline PriceGridSolution solve_price_pde(const ProblemSpec& spec, const SimilarityGrid& grid,
                                         const StepControl& ctl = detail::pde_default_control()) {
    spec.validate();
    grid.validate();
    detail::require_linear(spec, "solve_price_pde");
    const DeterministicPolicy det(spec);
    const double q1 = spec.demand.q1();
    const double sigma2 = spec.sigma * spec.sigma;

    const std::size_t n = grid.n_xi;
    const double dxi = grid.dxi();
    const double inv_d2 = 1.0 / (dxi * dxi);
    const double inv_2d = 1.0 / (2.0 * dxi);
    std::vector<double> diffusion(n), drift(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = grid.xi(i);
        diffusion[i] = 0.5 * sigma2 * xi * xi;
        drift[i] = sigma2 * xi - q1;
    }

    // terminal data: the deterministic price at tau = 0 in the viscosity
    // sense, q1 at the exhausted-stock boundary and delta elsewhere
    std::vector<double> y(n, det.delta());
    y[0] = q1;

    const auto rhs = [&](double, const std::vector<double>& f, std::vector<double>& df) {
        df[0] = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double lap = (f[i + 1] - 2.0 * f[i] + f[i - 1]) * inv_d2;
            const double grad = (f[i + 1] - f[i - 1]) * inv_2d;
            df[i] = diffusion[i] * lap + (drift[i] + f[i]) * grad;
        }
        df[n - 1] = 0.0;
    };

    PriceGridSolution out{grid, {}, {}};
    out.psi.reserve(grid.tau_checkpoints.size());
    const auto store = [&](std::size_t, double, const std::vector<double>& f) {
        out.psi.push_back(f);
    };

    IntegrationReport rep;
    try {
        rep = integrate_dopri5(rhs, y, 0.0, grid.tau_checkpoints, ctl, store);
    } catch (const SolverError& e) {
        const double last_tau =
            out.psi.empty() ? -1.0 : grid.tau_checkpoints[out.psi.size() - 1];
        throw SolverError(std::string(e.what()) + "; last stored checkpoint tau = " +
                          (out.psi.empty() ? std::string("none") : std::to_string(last_tau)));
    }
    out.report = SolverReport{rep.accepted, rep.rejected, rep.max_error_ratio, 0};
    return out;
}

} // namespace pricing
