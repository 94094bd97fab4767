#include <CLI11.hpp>

#include "pricing/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config_error = 2;
constexpr int exit_numerical_failure = 3;

pricing::ExperimentConfig load_config(const std::string& config_path,
                                      const std::vector<std::string>& overrides,
                                      const std::string& out_dir_flag) {
    pricing::ExperimentConfig base;
    if (const char* env_dir = std::getenv("PRICER_OUT_DIR"); env_dir && *env_dir)
        base.directory = env_dir;
    pricing::ExperimentConfig cfg = base;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in)
            throw std::invalid_argument("cannot open config file: " + config_path);
        cfg = pricing::parse_config(in, base);
    }
    for (const std::string& assignment : overrides) pricing::apply_override(cfg, assignment);
    if (!out_dir_flag.empty()) cfg.directory = out_dir_flag;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic pricing toolkit: PDE pricing policies, repricing simulation, and "
                 "asymptotic cross-checks. All artifacts are CSV files with a provenance header."};
    app.require_subcommand(1);
    app.fallthrough();  // let --config/--set/--out appear after the subcommand name

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    app.add_option("--config", config_path, "experiment config file (sectioned key = value)");
    app.add_option("--set", overrides, "override a field, e.g. --set problem.sigma=0.2");
    app.add_option("--out", out_dir,
                   "output directory (overrides the config file and $PRICER_OUT_DIR)");

    auto* solve_cmd = app.add_subcommand("solve-hjb", "solve the pricing PDE, emit the grid CSV");

    auto* simulate_cmd =
        app.add_subcommand("simulate", "simulate repricing paths, emit paths and profit stats");
    std::string simulate_policy = "grid";
    simulate_cmd->add_option("--policy", simulate_policy, "grid | deterministic");

    auto* compare_cmd = app.add_subcommand(
        "compare", "compare the grid policy against the frozen-multiplier policy per sigma");

    auto* asymptotics_cmd = app.add_subcommand(
        "asymptotics", "solve the kink layer profile and compare it against the grid solver");

    auto* demo_cmd = app.add_subcommand(
        "demo-brownian", "negative-sales fractions under additive Brownian demand noise");

    auto* price_cmd = app.add_subcommand("price", "print one policy price for a given state");
    std::string price_policy = "grid";
    double t = 0.0, s = 1.0, g = 1.0;
    price_cmd->add_option("--policy", price_policy, "grid | deterministic");
    price_cmd->add_option("--t", t, "time in [0,1]")->required();
    price_cmd->add_option("--s", s, "remaining stock")->required();
    price_cmd->add_option("--g", g, "demand multiplier")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_config_error;
    }

    try {
        const pricing::ExperimentConfig cfg = load_config(config_path, overrides, out_dir);
        const pricing::ArtifactSink sink = pricing::directory_sink(cfg.directory);
        if (*solve_cmd) {
            pricing::run_solve_hjb(cfg, sink);
        } else if (*simulate_cmd) {
            pricing::run_simulate(cfg, pricing::parse_policy_kind(simulate_policy), sink);
        } else if (*compare_cmd) {
            pricing::run_compare(cfg, sink);
        } else if (*asymptotics_cmd) {
            pricing::run_asymptotics(cfg, sink);
        } else if (*demo_cmd) {
            pricing::run_demo_brownian(cfg, sink);
        } else if (*price_cmd) {
            const double price =
                pricing::run_price(cfg, pricing::parse_policy_kind(price_policy), t, s, g);
            std::printf("%s\n", pricing::format_double(price).c_str());
        }
        return exit_ok;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config_error;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return exit_numerical_failure;
    }
}
