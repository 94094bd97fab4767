#pragma once

#include "pricing/demand.hpp"
#include "pricing/io.hpp"
#include "pricing/philox.hpp"
#include "pricing/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace pricing {

/// Which demand-multiplier reading the policy sees at each repricing time:
/// the exact simulated G(t_k), or the stock-drop estimate Ghat(t_k).
enum class EstimatorMode { exact_g, estimated_g };

inline const char* to_string(EstimatorMode mode) {
    return mode == EstimatorMode::exact_g ? "exact" : "estimated";
}

struct SimulationConfig {
    std::size_t n_paths = 100'000;
    double dt = 0.01;                       // repricing interval
    std::size_t substeps_per_interval = 1;  // trapezoid nodes per interval
    std::uint64_t rng_seed = 0;
    EstimatorMode estimator_mode = EstimatorMode::estimated_g;
    double initial_stock = 1.0;
    std::size_t n_threads = 1;

    std::size_t n_intervals() const {
        return static_cast<std::size_t>(std::llround(1.0 / dt));
    }

    void validate() const {
        if (n_paths < 1)
            throw std::invalid_argument("SimulationConfig: n_paths must be at least 1");
        if (!(dt > 0.0) || !(dt <= 1.0))
            throw std::invalid_argument("SimulationConfig: dt must lie in (0, 1]");
        const double k = 1.0 / dt;
        if (std::abs(k - std::llround(k)) > 1e-9 * k)
            throw std::invalid_argument(
                "SimulationConfig: 1/dt must be an integer so the grid covers [0,1] exactly");
        if (substeps_per_interval < 1)
            throw std::invalid_argument(
                "SimulationConfig: substeps_per_interval must be at least 1");
        if (!(initial_stock >= 0.0) || !std::isfinite(initial_stock))
            throw std::invalid_argument(
                "SimulationConfig: initial_stock must be nonnegative and finite");
        if (n_threads < 1)
            throw std::invalid_argument("SimulationConfig: n_threads must be at least 1");
    }
};

/// One simulated repricing path. Rows are the repricing times t_k; prices
/// has one entry per interval [t_k, t_{k+1}).
struct PathRecord {
    std::vector<double> times;
    std::vector<double> stock;
    std::vector<double> multiplier;  // exact G(t_k)
    std::vector<double> estimate;    // Ghat(t_k)
    std::vector<double> prices;
    double hitting_time = 1.0;       // sell-out time, 1 if stock lasts
    double profit = 0.0;
};

struct GEstimate {
    double value = 1.0;
    bool carried = false;  // no information this interval; previous value kept
};

/// Stock-drop estimator Ghat = (prev_stock - stock) / (q(prev_price) dt).
/// A sold-out interval (stock = 0) is biased low and a choke-price interval
/// (q = 0) carries no information; both carry the previous estimate forward.
inline GEstimate estimate_g(const DemandModel& demand, double prev_price, double prev_stock,
                            double stock, double dt, double prev_estimate) {
    if (!(dt > 0.0))
        throw std::invalid_argument("estimate_g: dt must be positive");
    if (!(prev_stock >= stock) || !(stock >= 0.0))
        throw std::invalid_argument("estimate_g: needs prev_stock >= stock >= 0");
    const double rate = demand.demand_at(prev_price);
    if (rate == 0.0 || stock == 0.0) return {prev_estimate, true};
    return {(prev_stock - stock) / (rate * dt), false};
}

/// First two conditional moments of G implied by an observed stock drop over
/// one interval: mean = drop / (q dt), variance = mean^2 (e^{sigma^2 dt}-1)/4.
struct EstimatorMoments {
    double mean = 0.0;
    double variance = 0.0;
};

inline EstimatorMoments estimator_moments(double sigma, double dt, double observed_drop,
                                          double demand_at_price) {
    if (!(dt > 0.0) || !(demand_at_price > 0.0))
        throw std::invalid_argument("estimator_moments: dt and demand must be positive");
    const double mean = observed_drop / (demand_at_price * dt);
    const double variance = 0.25 * mean * mean * std::expm1(sigma * sigma * dt);
    return {mean, variance};
}

/// Exact-distribution multiplier samples on a time grid starting at 0:
/// G(u_{i+1}) = G(u_i) exp(-sigma^2 h / 2 + sigma sqrt(h) Z), h = u_{i+1}-u_i.
/// The marginals carry no discretization bias.
inline std::vector<double> sample_gbm_path(double sigma, std::span<const double> time_grid,
                                           Philox4x64& rng) {
    if (time_grid.empty() || time_grid.front() != 0.0)
        throw std::invalid_argument("sample_gbm_path: time grid must start at 0");
    std::vector<double> g(time_grid.size());
    g[0] = 1.0;
    if (sigma == 0.0) {
        std::fill(g.begin(), g.end(), 1.0);
        return g;
    }
    for (std::size_t i = 0; i + 1 < time_grid.size(); ++i) {
        const double h = time_grid[i + 1] - time_grid[i];
        if (!(h > 0.0))
            throw std::invalid_argument("sample_gbm_path: time grid must be increasing");
        g[i + 1] = g[i] * std::exp(-0.5 * sigma * sigma * h +
                                   sigma * std::sqrt(h) * rng.next_normal());
    }
    return g;
}

/// Substep node times 0 = u_0 < ... < u_{K m} = 1 refining the repricing grid.
inline std::vector<double> substep_times(const SimulationConfig& cfg) {
    const std::size_t k = cfg.n_intervals();
    const std::size_t m = cfg.substeps_per_interval;
    std::vector<double> u(k * m + 1);
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = static_cast<double>(i) * cfg.dt / static_cast<double>(m);
    return u;
}

/// Revenue accumulated with the same quadrature that depleted the stock,
/// minus the terminal handling cost: sum_k a_k (S_k - S_{k+1}) - C S(1).
inline double profit(const PathRecord& path, const ProblemSpec& spec) {
    double revenue = 0.0;
    for (std::size_t k = 0; k < path.prices.size(); ++k)
        revenue += path.prices[k] * (path.stock[k] - path.stock[k + 1]);
    return revenue - spec.terminal_cost * path.stock.back();
}

/// Walk one path on a pre-sampled multiplier curve (values at the substep
/// nodes). Sharing the curve is what makes common-random-number comparisons
/// and quadrature-refinement studies exact: both runs see the same demand.
template <class Policy>
PathRecord simulate_on_multiplier_path(const ProblemSpec& spec, Policy&& policy,
                                       const SimulationConfig& cfg,
                                       std::span<const double> multiplier,
                                       std::size_t path_index = 0) {
    const std::size_t intervals = cfg.n_intervals();
    const std::size_t m = cfg.substeps_per_interval;
    if (multiplier.size() != intervals * m + 1)
        throw std::invalid_argument("simulate_on_multiplier_path: multiplier curve has " +
                                    std::to_string(multiplier.size()) + " nodes, expected " +
                                    std::to_string(intervals * m + 1));
    const auto& admissible = spec.demand.admissible_prices();
    const double sub_dt = cfg.dt / static_cast<double>(m);

    PathRecord rec;
    rec.times.reserve(intervals + 1);
    rec.stock.reserve(intervals + 1);
    rec.multiplier.reserve(intervals + 1);
    rec.estimate.reserve(intervals + 1);
    rec.prices.reserve(intervals);

    double s = cfg.initial_stock;
    double ghat = 1.0;  // G(0) = 1 by construction
    double revenue = 0.0;
    bool sold_out = s == 0.0;
    rec.times.push_back(0.0);
    rec.stock.push_back(s);
    rec.multiplier.push_back(multiplier[0]);
    rec.estimate.push_back(ghat);

    for (std::size_t k = 0; k < intervals; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        const double g_in = cfg.estimator_mode == EstimatorMode::exact_g
                                ? multiplier[k * m]
                                : ghat;
        const double a = policy(t, s, g_in);
        if (!(a >= admissible.lo && a <= admissible.hi))
            throw std::runtime_error(
                "simulate_on_multiplier_path: path " + std::to_string(path_index) + " at t = " +
                format_double(t) + ": policy price " + format_double(a) +
                " lies outside the admissible interval");
        rec.prices.push_back(a);

        const double rate = spec.demand.demand_at(a);
        double s_next = s;
        if (!sold_out && rate > 0.0) {
            for (std::size_t j = 0; j < m; ++j) {
                const double drop = rate * 0.5 *
                                    (multiplier[k * m + j] + multiplier[k * m + j + 1]) * sub_dt;
                if (drop >= s_next) {
                    // sell-out inside this substep: cumulative depletion is
                    // linear between nodes, so the crossing is interpolated
                    const double theta = drop > 0.0 ? s_next / drop : 0.0;
                    rec.hitting_time =
                        t + (static_cast<double>(j) + theta) * sub_dt;
                    s_next = 0.0;
                    sold_out = true;
                    break;
                }
                s_next -= drop;
            }
        }
        revenue += a * (s - s_next);
        ghat = estimate_g(spec.demand, a, s, s_next, cfg.dt, ghat).value;
        s = s_next;
        rec.times.push_back(static_cast<double>(k + 1) * cfg.dt);
        rec.stock.push_back(s);
        rec.multiplier.push_back(multiplier[(k + 1) * m]);
        rec.estimate.push_back(ghat);
    }
    rec.profit = revenue - spec.terminal_cost * s;
    return rec;
}

namespace detail {

/// Run fn(path_index) for every path, optionally across threads. Workers
/// own disjoint index ranges; whoever throws first (lowest range) wins.
template <class Fn>
void for_each_path(const SimulationConfig& cfg, Fn&& fn) {
    const std::size_t n = cfg.n_paths;
    const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(cfg.n_threads, 1), n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([&, w, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
}

/// The multiplier stream for one path: an independent counter-based
/// generator keyed by (seed, path index), so any path is reproducible in
/// isolation and threads never share state.
inline Philox4x64 path_rng(const SimulationConfig& cfg, std::size_t path_index) {
    return Philox4x64(cfg.rng_seed, static_cast<std::uint64_t>(path_index));
}

} // namespace detail

/// Simulate every path and return the full records (per-path storage is
/// ~5 doubles per repricing time; intended for path exports and tests, not
/// the 1e5-path statistics runs, which stream through compare_policies).
template <class Policy>
std::vector<PathRecord> simulate_policy(const ProblemSpec& spec, Policy&& policy,
                                        const SimulationConfig& cfg) {
    spec.validate();
    cfg.validate();
    const auto grid = substep_times(cfg);
    std::vector<PathRecord> out(cfg.n_paths);
    detail::for_each_path(cfg, [&](std::size_t i) {
        auto rng = detail::path_rng(cfg, i);
        const auto curve = sample_gbm_path(spec.sigma, grid, rng);
        out[i] = simulate_on_multiplier_path(spec, policy, cfg, curve, i);
    });
    return out;
}

/// Pathwise comparison of two policies under common random numbers:
/// statistics of the relative profit difference 1 - P(a)/P(b).
struct ComparisonStats {
    SampleSummary rel_diff;
    double q05 = 0.0;
    double q50 = 0.0;
    double q95 = 0.0;
    SampleSummary profit_a;
    SampleSummary profit_b;
    std::size_t excluded_paths = 0;   // P(b) = 0, relative difference undefined
    std::vector<double> rel_diffs;    // per retained path, in path order
};

template <class PolicyA, class PolicyB>
ComparisonStats compare_policies(const ProblemSpec& spec, PolicyA&& policy_a,
                                 PolicyB&& policy_b, const SimulationConfig& cfg) {
    spec.validate();
    cfg.validate();
    const auto grid = substep_times(cfg);
    std::vector<double> pa(cfg.n_paths), pb(cfg.n_paths);
    detail::for_each_path(cfg, [&](std::size_t i) {
        auto rng = detail::path_rng(cfg, i);
        const auto curve = sample_gbm_path(spec.sigma, grid, rng);
        pa[i] = simulate_on_multiplier_path(spec, policy_a, cfg, curve, i).profit;
        pb[i] = simulate_on_multiplier_path(spec, policy_b, cfg, curve, i).profit;
    });

    ComparisonStats stats;
    stats.rel_diffs.reserve(cfg.n_paths);
    for (std::size_t i = 0; i < cfg.n_paths; ++i) {
        if (pb[i] == 0.0) {
            ++stats.excluded_paths;
            continue;
        }
        stats.rel_diffs.push_back(1.0 - pa[i] / pb[i]);
    }
    if (!stats.rel_diffs.empty()) {
        stats.rel_diff = summarize(stats.rel_diffs);
        constexpr std::array<double, 3> ps{0.05, 0.5, 0.95};
        const auto qs = quantiles(stats.rel_diffs, ps);
        stats.q05 = qs[0];
        stats.q50 = qs[1];
        stats.q95 = qs[2];
    }
    stats.profit_a = summarize(pa);
    stats.profit_b = summarize(pb);
    return stats;
}

/// P(stock increases over one interval) under additive Brownian noise:
/// Phi(-sqrt(dt) q / sigma), which tends to 1/2 as dt -> 0.
inline double negative_sales_probability(double q_tilde, double sigma_tilde, double dt) {
    if (!(q_tilde > 0.0))
        throw std::invalid_argument("negative_sales_probability: demand must be positive");
    if (!(dt >= 0.0))
        throw std::invalid_argument("negative_sales_probability: dt must be nonnegative");
    if (sigma_tilde == 0.0) return 0.0;
    if (!(sigma_tilde > 0.0))
        throw std::invalid_argument("negative_sales_probability: volatility must be nonnegative");
    return normal_cdf(-std::sqrt(dt) * q_tilde / sigma_tilde);
}

/// Monte-Carlo companion to negative_sales_probability: walk the additive
/// model dS = -q dt + sigma dW (stopped at zero) and count the intervals on
/// which stock went up.
struct BrownianNoiseDemo {
    std::size_t increases = 0;
    std::size_t intervals = 0;  // intervals started with positive stock
    double fraction = 0.0;
};

/// Per-path CSV rows (path_id, t, S, G, Ghat, price). The price column holds
/// the rate in force as of each time; the terminal row repeats the last one.
/// thin > 1 keeps every thin-th row plus the terminal row of each path.
inline void write_paths_csv(std::ostream& out, std::span<const PathRecord> paths,
                            std::size_t thin = 1) {
    if (thin == 0) throw std::invalid_argument("write_paths_csv: thin must be at least 1");
    out << "path_id,t,S,G,Ghat,price\n";
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& rec = paths[p];
        const std::size_t last = rec.times.size() - 1;
        for (std::size_t k = 0; k <= last; ++k) {
            if (k % thin != 0 && k != last) continue;
            const double price = rec.prices.empty() ? 0.0
                                 : rec.prices[std::min(k, rec.prices.size() - 1)];
            out << p << ',' << format_double(rec.times[k]) << ',' << format_double(rec.stock[k])
                << ',' << format_double(rec.multiplier[k]) << ','
                << format_double(rec.estimate[k]) << ',' << format_double(price) << '\n';
        }
    }
}

/// Summary-statistics CSV, one row per volatility.
inline void write_stats_csv(std::ostream& out,
                            std::span<const std::pair<double, ComparisonStats>> rows) {
    out << "sigma,mean,std,q05,q50,q95\n";
    for (const auto& [sigma, stats] : rows)
        out << format_double(sigma) << ',' << format_double(stats.rel_diff.mean) << ','
            << format_double(stats.rel_diff.stddev) << ',' << format_double(stats.q05) << ','
            << format_double(stats.q50) << ',' << format_double(stats.q95) << '\n';
}

/// Histogram CSV (bin_left, bin_right, count).
inline void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins) {
    out << "bin_left,bin_right,count\n";
    for (const auto& bin : bins)
        out << format_double(bin.left) << ',' << format_double(bin.right) << ',' << bin.count
            << '\n';
}

inline BrownianNoiseDemo brownian_noise_demo(double q_tilde, double sigma_tilde, double dt,
                                             double initial_stock, std::size_t n_paths,
                                             std::uint64_t seed) {
    if (!(q_tilde > 0.0) || !(sigma_tilde > 0.0))
        throw std::invalid_argument("brownian_noise_demo: demand and volatility must be positive");
    if (!(dt > 0.0) || !(dt <= 1.0) || std::abs(1.0 / dt - std::llround(1.0 / dt)) > 1e-9 / dt)
        throw std::invalid_argument("brownian_noise_demo: 1/dt must be an integer in [1, inf)");
    if (!(initial_stock > 0.0))
        throw std::invalid_argument("brownian_noise_demo: initial stock must be positive");
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / dt));
    const double root_dt = std::sqrt(dt);
    BrownianNoiseDemo demo;
    for (std::size_t p = 0; p < n_paths; ++p) {
        Philox4x64 rng(seed, p);
        double s = initial_stock;
        for (std::size_t k = 0; k < steps && s > 0.0; ++k) {
            const double s_next =
                s - q_tilde * dt + sigma_tilde * root_dt * rng.next_normal();
            ++demo.intervals;
            if (s_next > s) ++demo.increases;
            s = std::max(s_next, 0.0);
        }
    }
    demo.fraction = demo.intervals == 0
                        ? 0.0
                        : static_cast<double>(demo.increases) / static_cast<double>(demo.intervals);
    return demo;
}

} // namespace pricing
