#pragma once

#include "pricing/demand.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pricing {

/// State of the market: time t in [0,1], remaining stock s >= 0, and the
/// current demand multiplier g >= 0.
struct MarketState {
    double t = 0.0;
    double s = 0.0;
    double g = 1.0;

    void validate() const {
        if (!(t >= 0.0 && t <= 1.0))
            throw std::domain_error("MarketState: t = " + std::to_string(t) +
                                    " outside [0,1]");
        if (!(s >= 0.0) || !std::isfinite(s))
            throw std::domain_error("MarketState: stock must be >= 0 and finite");
        if (!(g >= 0.0) || !std::isfinite(g))
            throw std::domain_error("MarketState: demand multiplier must be >= 0 and finite");
    }
};

/// Optimal policy of the deterministic problem (demand multiplier frozen at
/// its current value). Used both as a near-optimal feedback rule for the
/// stochastic problem and as the sigma -> 0 reference for the PDE solver.
///
/// With w = (1-t) g and the effective fill rate r = s/w:
///   linear:       price = q1 - r          while r <= beta, else delta
///   exponential:  price = -log(s/(q1 w))  while s/(q1 w) <= rho*, else delta
/// where delta is the static optimal price and beta, rho* mark the boundary
/// between the sell-everything region and the liquidation region.
class DeterministicPolicy {
public:
    explicit DeterministicPolicy(ProblemSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        const double q1 = spec_.demand.q1();
        const double c = spec_.terminal_cost;
        delta_ = spec_.demand.static_optimal_price(c);
        if (spec_.demand.family() == DemandFamily::linear) {
            beta_ = std::min(q1, 0.5 * (q1 + c));
            // value rate of the liquidation region; (q1+c)^2/4 caps at q1*c
            // once the cost exceeds the choke price
            value_rate_ = c < q1 ? 0.25 * (q1 + c) * (q1 + c) : q1 * c;
        } else {
            // sell-out threshold for the stock-to-demand ratio s/(q1 w)
            beta_ = std::exp(-delta_);
            value_rate_ = (delta_ + c) * q1 * std::exp(-delta_);
        }
    }

    const ProblemSpec& spec() const { return spec_; }

    /// Static optimal price; charged whenever stock is plentiful.
    double delta() const { return delta_; }

    /// Region boundary: linear family sells out iff s <= (1-t) g beta;
    /// exponential iff s <= (1-t) g q1 rho_star.
    double beta() const { return beta_; }
    double rho_star() const { return beta_; }

    /// Value per unit of (1-t) g in the liquidation region.
    double value_rate() const { return value_rate_; }

    double price(const MarketState& x) const {
        x.validate();
        const auto& A = spec_.demand.admissible_prices();
        const double q1 = spec_.demand.q1();
        if (x.s == 0.0) return A.hi;  // choke price: nothing left to sell
        const double w = (1.0 - x.t) * x.g;
        if (w == 0.0) return delta_;
        if (spec_.demand.family() == DemandFamily::linear) {
            const double r = x.s / w;
            return r <= beta_ ? A.project(q1 - r) : delta_;
        }
        const double rho = x.s / (q1 * w);
        return rho <= beta_ ? A.project(-std::log(rho)) : delta_;
    }

    double operator()(double t, double s, double g) const { return price({t, s, g}); }

    /// Expected optimal profit-to-go of the deterministic problem.
    double value(const MarketState& x) const {
        x.validate();
        const double c = spec_.terminal_cost;
        const double q1 = spec_.demand.q1();
        const double w = (1.0 - x.t) * x.g;
        if (x.s == 0.0) return 0.0;
        if (w == 0.0) return -c * x.s;
        if (spec_.demand.family() == DemandFamily::linear) {
            const double r = x.s / w;
            return r <= beta_ ? q1 * x.s - x.s * x.s / w : -c * x.s + value_rate_ * w;
        }
        const double rho = x.s / (q1 * w);
        return rho <= beta_ ? -x.s * std::log(rho) : -c * x.s + value_rate_ * w;
    }

private:
    ProblemSpec spec_;
    double delta_ = 0.0;
    double beta_ = 0.0;
    double value_rate_ = 0.0;
};

namespace detail {

/// max over admissible a of (a - p) q(a), in closed form.
inline double hamiltonian(const DemandModel& demand, double p) {
    const auto& A = demand.admissible_prices();
    const double q1 = demand.q1();
    if (demand.family() == DemandFamily::linear) {
        const double a = A.project(0.5 * (q1 + p));
        return (a - p) * (q1 - a);
    }
    const double a = A.project(1.0 + p);
    return (a - p) * q1 * std::exp(-a);
}

} // namespace detail

/// Residual of the dynamic-programming PDE
///   v_t + g max_a { (a - v_s) q(a) } = 0
/// evaluated on the closed-form deterministic value with second-order central
/// differences of step h. The state must stay clear of the domain edges and
/// the kink surface so every stencil point lies on one smooth branch.
inline double hjb_residual(const DeterministicPolicy& policy, const MarketState& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("hjb_residual: h must be positive");
    if (x.t - h < 0.0 || x.t + h > 1.0 || x.s - h <= 0.0 || x.g - h <= 0.0)
        throw std::domain_error("hjb_residual: stencil leaves the state domain");

    const auto& spec = policy.spec();
    const bool linear = spec.demand.family() == DemandFamily::linear;
    const double q1 = spec.demand.q1();
    // signed position relative to the kink surface; require the whole stencil
    // on one side
    const auto side = [&](double t, double s, double g) {
        const double w = (1.0 - t) * g;
        const double bound = linear ? policy.beta() * w : policy.rho_star() * q1 * w;
        return s - bound;
    };
    const double center = side(x.t, x.s, x.g);
    for (const auto& [dt, ds, dg] :
         {std::array{h, 0.0, 0.0}, std::array{-h, 0.0, 0.0}, std::array{0.0, h, 0.0},
          std::array{0.0, -h, 0.0}, std::array{0.0, 0.0, h}, std::array{0.0, 0.0, -h}}) {
        if (side(x.t + dt, x.s + ds, x.g + dg) * center <= 0.0)
            throw std::domain_error("hjb_residual: stencil straddles the kink surface");
    }

    const auto v = [&](double t, double s, double g) {
        return policy.value({t, s, g});
    };
    const double v_t = (v(x.t + h, x.s, x.g) - v(x.t - h, x.s, x.g)) / (2.0 * h);
    const double v_s = (v(x.t, x.s + h, x.g) - v(x.t, x.s - h, x.g)) / (2.0 * h);
    return v_t + x.g * detail::hamiltonian(spec.demand, v_s);
}

} // namespace pricing
