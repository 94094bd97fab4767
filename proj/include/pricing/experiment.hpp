#pragma once

#include "pricing/asymptotics.hpp"
#include "pricing/config.hpp"
#include "pricing/deterministic_policy.hpp"
#include "pricing/hjb_solver.hpp"
#include "pricing/sde_simulator.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pricing {

/// Where experiment artifacts go: maps a file name to a writable stream.
/// The CLI passes a directory opener; tests can capture artifacts in memory.
using ArtifactSink = std::function<std::unique_ptr<std::ostream>(const std::string& name)>;

/// Sink that creates the directory on first use and opens plain files in it.
inline ArtifactSink directory_sink(const std::string& directory) {
    return [directory](const std::string& name) -> std::unique_ptr<std::ostream> {
        std::filesystem::create_directories(directory);
        const auto path = std::filesystem::path(directory) / name;
        auto out = std::make_unique<std::ofstream>(path);
        if (!*out)
            throw std::runtime_error("cannot open artifact file: " + path.string());
        return out;
    };
}

enum class PolicyKind { grid, deterministic };

inline PolicyKind parse_policy_kind(const std::string& name) {
    if (name == "grid") return PolicyKind::grid;
    if (name == "deterministic") return PolicyKind::deterministic;
    throw std::invalid_argument("policy: expected grid or deterministic, got " + name);
}

namespace detail {

/// Short file-name token for a sweep value: 0.05 -> "0.05".
inline std::string sigma_token(double sigma) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", sigma);
    return buf;
}

/// One stats row in the shared sigma,mean,std,q05,q50,q95 layout.
inline void write_summary_row(std::ostream& os, double sigma, const SampleSummary& summary,
                              double q05, double q50, double q95) {
    os << format_double(sigma) << ',' << format_double(summary.mean) << ','
       << format_double(summary.stddev) << ',' << format_double(q05) << ','
       << format_double(q50) << ',' << format_double(q95) << '\n';
}

}  // namespace detail

/// solve-hjb: integrates the value PDE on the configured grid and emits the
/// checkpoint table as CSV.
inline void run_solve_hjb(const ExperimentConfig& cfg, const ArtifactSink& sink) {
    cfg.validate();
    const HjbSolution solution =
        solve_value_pde(cfg.problem_spec(), cfg.similarity_grid(), cfg.step_control());
    const auto os = sink("hjb_solution.csv");
    write_provenance(*os, cfg);
    solution.write_csv(*os);
}

/// simulate: runs the configured number of repricing paths under one policy
/// and emits the sampled paths plus a profit summary.
inline void run_simulate(const ExperimentConfig& cfg, PolicyKind kind, const ArtifactSink& sink) {
    cfg.validate();
    const ProblemSpec spec = cfg.problem_spec();
    const SimulationConfig sim = cfg.simulation_config();

    std::vector<PathRecord> records;
    if (kind == PolicyKind::grid) {
        const HjbSolution solution = solve_value_pde(spec, cfg.similarity_grid(), cfg.step_control());
        records = simulate_policy(spec, solution, sim);
    } else {
        records = simulate_policy(spec, DeterministicPolicy(spec), sim);
    }

    if (cfg.write_paths) {
        const auto os = sink("paths.csv");
        write_provenance(*os, cfg);
        write_paths_csv(*os, records, cfg.thin);
    }

    std::vector<double> profits(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) profits[i] = records[i].profit;
    const SampleSummary summary = summarize(profits);
    constexpr std::array<double, 3> ps{0.05, 0.5, 0.95};
    const auto qs = quantiles(profits, ps);

    const auto os = sink("profit_stats.csv");
    write_provenance(*os, cfg);
    *os << "sigma,mean,std,q05,q50,q95\n";
    detail::write_summary_row(*os, spec.sigma, summary, qs[0], qs[1], qs[2]);
}

/// compare: for every sigma in the sweep, solves the grid policy, replays the
/// frozen-multiplier policy on the same demand paths, and emits the summary
/// stats of the relative profit difference 1 - P(frozen)/P(grid) plus one
/// histogram per sigma.
inline void run_compare(const ExperimentConfig& cfg, const ArtifactSink& sink) {
    cfg.validate();
    std::vector<std::pair<double, ComparisonStats>> rows;
    for (double sigma : cfg.sweep_sigmas()) {
        const ProblemSpec spec = cfg.problem_spec(sigma);
        const HjbSolution solution = solve_value_pde(spec, cfg.similarity_grid(), cfg.step_control());
        const DeterministicPolicy frozen(spec);
        const ComparisonStats stats =
            compare_policies(spec, frozen, solution, cfg.simulation_config());
        rows.emplace_back(sigma, stats);

        const auto hist_os = sink("rel_diff_hist_" + detail::sigma_token(sigma) + ".csv");
        write_provenance(*hist_os, cfg);
        write_histogram_csv(*hist_os, make_histogram(stats.rel_diffs, cfg.histogram_bins));
    }
    const auto os = sink("compare_stats.csv");
    write_provenance(*os, cfg);
    write_stats_csv(*os, rows);
}

/// asymptotics: solves the layer profile and emits it, plus a checkpoint
/// table comparing the grid solver against the kink expansion and the
/// outer correction at representative states.
inline void run_asymptotics(const ExperimentConfig& cfg, const ArtifactSink& sink) {
    cfg.validate();
    const ProblemSpec spec = cfg.problem_spec();
    const InnerLayerSolution layer =
        solve_inner_ode(spec, cfg.layer_truncation, cfg.layer_nodes);

    {
        const auto os = sink("layer_profile.csv");
        write_provenance(*os, cfg);
        write_inner_layer_csv(*os, layer);
    }

    const HjbSolution solution =
        solve_value_pde(spec, cfg.similarity_grid(), cfg.step_control());
    const auto os = sink("kink_comparison.csv");
    write_provenance(*os, cfg);
    *os << "tau,xi_kink,psi_kink,kink_approx,xi_outer,psi_outer,outer_approx\n";
    for (int k = 1; k <= 20; ++k) {
        const double tau = 0.05 * k;
        const double t = 1.0 - tau;
        const double xi_kink = layer.beta * tau;
        const MarketState at_kink{t, xi_kink, 1.0};
        const MarketState mid_region{t, 0.5 * xi_kink, 1.0};
        *os << format_double(tau) << ',' << format_double(xi_kink) << ','
            << format_double(solution.price(at_kink)) << ','
            << format_double(inner_price_approx(layer, spec, at_kink)) << ','
            << format_double(0.5 * xi_kink) << ','
            << format_double(solution.price(mid_region)) << ','
            << format_double(outer_correction(spec, mid_region)) << '\n';
    }
}

/// demo-brownian: sweeps the repricing interval and emits the fraction of
/// stock-increasing intervals under additive Brownian noise next to the
/// predicted normal tail probability.
inline void run_demo_brownian(const ExperimentConfig& cfg, const ArtifactSink& sink) {
    cfg.validate();
    const ProblemSpec spec = cfg.problem_spec();
    const DeterministicPolicy policy(spec);
    const double q_tilde = spec.demand.demand_at(policy.delta());
    const double sigma_tilde = spec.sigma;

    const auto os = sink("negative_sales.csv");
    write_provenance(*os, cfg);
    *os << "dt,fraction,predicted,stderr\n";
    for (double dt : {1e-1, 1e-2, 1e-3, 1e-4}) {
        const BrownianNoiseDemo demo = brownian_noise_demo(q_tilde, sigma_tilde, dt,
                                                           cfg.initial_stock, cfg.n_paths, cfg.seed);
        const double predicted = negative_sales_probability(q_tilde, sigma_tilde, dt);
        const double stderr_binomial =
            std::sqrt(predicted * (1.0 - predicted) / static_cast<double>(demo.intervals));
        *os << format_double(dt) << ',' << format_double(demo.fraction) << ','
            << format_double(predicted) << ',' << format_double(stderr_binomial) << '\n';
    }
}

/// price: one-shot policy query at (t, s, g).
inline double run_price(const ExperimentConfig& cfg, PolicyKind kind, double t, double s,
                        double g) {
    cfg.validate();
    const ProblemSpec spec = cfg.problem_spec();
    const MarketState x{t, s, g};
    if (kind == PolicyKind::deterministic) return DeterministicPolicy(spec).price(x);
    const HjbSolution solution =
        solve_value_pde(spec, cfg.similarity_grid(), cfg.step_control());
    return solution.price(x);
}

}  // namespace pricing
