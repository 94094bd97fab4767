#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pricing {

enum class DemandFamily { linear, exponential };

inline const char* to_string(DemandFamily f) {
    return f == DemandFamily::linear ? "linear" : "exponential";
}

/// Closed interval of admissible prices.
struct PriceInterval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double a) const { return a >= lo && a <= hi; }
    double project(double a) const { return std::clamp(a, lo, hi); }
};

/// Demand rate q(a) in nondimensional units: time is the sales horizon,
/// stock is the initial inventory, and the price unit absorbs the slope
/// (linear) or decay (exponential) coefficient, so
///   linear:       q(a) = q1 - a        on A = [0, q1]
///   exponential:  q(a) = q1 exp(-a)    on A = [0, a_max]
class DemandModel {
public:
    static DemandModel linear(double q1) {
        check_q1(q1);
        return DemandModel(DemandFamily::linear, q1, {0.0, q1});
    }

    static DemandModel exponential(double q1) {
        return exponential(q1, default_exponential_cutoff(q1));
    }

    static DemandModel exponential(double q1, double a_max) {
        check_q1(q1);
        if (!(a_max > 0.0) || !std::isfinite(a_max))
            throw std::invalid_argument("DemandModel: price cutoff must be positive and finite");
        return DemandModel(DemandFamily::exponential, q1, {0.0, a_max});
    }

    /// Truncation point for the (unbounded) exponential price domain. Demand
    /// at the cutoff is below q1*exp(-30), so the truncation is immaterial.
    static double default_exponential_cutoff(double q1) {
        return 30.0 * (1.0 + 1.0 / q1);
    }

    DemandFamily family() const { return family_; }
    double q1() const { return q1_; }
    const PriceInterval& admissible_prices() const { return prices_; }

    /// Demand rate at price a; throws std::domain_error outside A.
    double demand_at(double a) const {
        if (a < prices_.lo)
            throw std::domain_error("price " + std::to_string(a) +
                                    " below admissible minimum " + std::to_string(prices_.lo));
        if (a > prices_.hi)
            throw std::domain_error("price " + std::to_string(a) +
                                    " above admissible maximum " + std::to_string(prices_.hi));
        return family_ == DemandFamily::linear ? q1_ - a : q1_ * std::exp(-a);
    }

    double operator()(double a) const { return demand_at(a); }

    /// Maximizer of the static profit rate (a + c) q(a) over A, where c is
    /// the per-unit terminal cost; this is also the far-field price of the
    /// deterministic policy.
    double static_optimal_price(double terminal_cost) const {
        if (!(terminal_cost >= 0.0))
            throw std::invalid_argument("static_optimal_price: terminal cost must be >= 0");
        const double unconstrained = family_ == DemandFamily::linear
                                         ? 0.5 * (q1_ - terminal_cost)
                                         : 1.0 - terminal_cost;
        return prices_.project(unconstrained);
    }

private:
    DemandModel(DemandFamily family, double q1, PriceInterval prices)
        : family_(family), q1_(q1), prices_(prices) {}

    static void check_q1(double q1) {
        if (!(q1 > 0.0) || !std::isfinite(q1))
            throw std::invalid_argument("DemandModel: q1 must be positive and finite");
    }

    DemandFamily family_;
    double q1_;
    PriceInterval prices_;
};

/// Nondimensional problem data shared by policies, solvers and simulators.
struct ProblemSpec {
    DemandModel demand;
    double terminal_cost = 0.0;  // cost c >= 0 per unit of unsold stock
    double sigma = 0.0;          // demand-multiplier volatility, >= 0

    void validate() const {
        if (!(terminal_cost >= 0.0) || !std::isfinite(terminal_cost))
            throw std::invalid_argument("ProblemSpec: terminal cost must be >= 0 and finite");
        if (!(sigma >= 0.0) || !std::isfinite(sigma))
            throw std::invalid_argument("ProblemSpec: sigma must be >= 0 and finite");
    }
};

/// Market data in physical units, before rescaling.
struct RawMarketData {
    DemandFamily family = DemandFamily::linear;
    double initial_stock = 0.0;    // units of inventory
    double horizon = 0.0;          // length of the sales window
    double reference_price = 0.0;  // price unit used for the raw coefficients
    double raw_q1 = 0.0;           // linear: q(p) = raw_q1 - raw_q2 p; exponential: raw_q1 exp(-raw_q2 p)
    double raw_q2 = 0.0;
    double raw_sigma = 0.0;        // volatility per sqrt(physical time)
    double terminal_cost = 0.0;    // per-unit cost of leftover stock, in the same currency as prices

    void validate() const {
        auto positive = [](double x, const char* name) {
            if (!(x > 0.0) || !std::isfinite(x))
                throw std::invalid_argument(std::string("RawMarketData: ") + name +
                                            " must be positive and finite");
        };
        positive(initial_stock, "initial_stock");
        positive(horizon, "horizon");
        positive(reference_price, "reference_price");
        positive(raw_q1, "raw_q1");
        positive(raw_q2, "raw_q2");
        if (!(raw_sigma >= 0.0) || !std::isfinite(raw_sigma))
            throw std::invalid_argument("RawMarketData: raw_sigma must be >= 0 and finite");
        if (!(terminal_cost >= 0.0) || !std::isfinite(terminal_cost))
            throw std::invalid_argument("RawMarketData: terminal_cost must be >= 0 and finite");
    }
};

/// Scale factors linking physical and nondimensional units. A physical
/// price p corresponds to the nondimensional price a via
///   p = a * reference_price / price_scale.
struct ScalingRecord {
    double initial_stock = 1.0;
    double horizon = 1.0;
    double reference_price = 1.0;
    double price_scale = 1.0;  // the absorbed demand coefficient
};

/// Physical price for a nondimensional one.
inline double to_physical_price(double a, const ScalingRecord& s) {
    return a * s.reference_price / s.price_scale;
}

/// Nondimensional price for a physical one.
inline double to_scaled_price(double p, const ScalingRecord& s) {
    return p * s.price_scale / s.reference_price;
}

struct NondimensionalProblem {
    ProblemSpec spec;
    ScalingRecord scaling;
};

/// Rescale raw market data to the unit-stock, unit-horizon form, absorbing
/// the price coefficient into the price unit.
inline NondimensionalProblem nondimensionalize(const RawMarketData& raw) {
    raw.validate();
    const double stock_rate = raw.horizon / raw.initial_stock;
    const double q1 = stock_rate * raw.raw_q1;
    const double price_scale = raw.family == DemandFamily::linear
                                   ? stock_rate * raw.raw_q2 * raw.reference_price
                                   : raw.raw_q2 * raw.reference_price;
    DemandModel demand = raw.family == DemandFamily::linear ? DemandModel::linear(q1)
                                                            : DemandModel::exponential(q1);
    const ScalingRecord scaling{raw.initial_stock, raw.horizon, raw.reference_price, price_scale};
    // the terminal cost is a price, so it rescales like one
    const double cost = to_scaled_price(raw.terminal_cost, scaling);
    NondimensionalProblem out{
        ProblemSpec{std::move(demand), cost, raw.raw_sigma * std::sqrt(raw.horizon)}, scaling};
    out.spec.validate();
    return out;
}

/// Inverse of nondimensionalize.
inline RawMarketData redimensionalize(const ProblemSpec& spec, const ScalingRecord& scaling) {
    RawMarketData raw;
    raw.family = spec.demand.family();
    raw.initial_stock = scaling.initial_stock;
    raw.horizon = scaling.horizon;
    raw.reference_price = scaling.reference_price;
    const double stock_rate = scaling.horizon / scaling.initial_stock;
    raw.raw_q1 = spec.demand.q1() / stock_rate;
    raw.raw_q2 = spec.demand.family() == DemandFamily::linear
                     ? scaling.price_scale / (stock_rate * scaling.reference_price)
                     : scaling.price_scale / scaling.reference_price;
    raw.raw_sigma = spec.sigma / std::sqrt(scaling.horizon);
    raw.terminal_cost = spec.terminal_cost * scaling.reference_price / scaling.price_scale;
    return raw;
}

} // namespace pricing
