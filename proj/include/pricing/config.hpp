#pragma once

#include "pricing/demand.hpp"
#include "pricing/hjb_solver.hpp"
#include "pricing/io.hpp"
#include "pricing/sde_simulator.hpp"
#include "pricing/version.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace pricing {

/// Experiment description: one section per module, parsed from a flat
/// key-value document so runs are diffable and archivable. Field defaults
/// mirror the module defaults; validate() funnels every field through the
/// owning module's own checks before any computation starts.
struct ExperimentConfig {
    // [problem]
    std::string family = "linear";
    double q1 = 1.5;
    double terminal_cost = 0.5;
    double sigma = 0.1;

    // [solver]
    double xi_max = 0.0;  // 0 = derive from the problem
    std::size_t n_xi = 2001;
    double rel_tol = 1e-12;
    double abs_tol = 1e-15;
    double layer_truncation = 10.0;
    std::size_t layer_nodes = 2001;

    // [simulation]
    std::size_t n_paths = 100'000;
    double dt = 0.01;
    std::size_t substeps = 1;
    std::uint64_t seed = 0;
    std::string estimator = "estimated";
    double initial_stock = 1.0;
    std::size_t threads = 1;
    std::vector<double> sigmas;  // sweep for compare; empty = just [problem] sigma

    // [outputs]
    std::string directory = ".";
    bool write_paths = true;
    std::size_t thin = 1;
    std::size_t histogram_bins = 50;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

    DemandModel demand_model() const {
        if (family == "linear") return DemandModel::linear(q1);
        if (family == "exponential") return DemandModel::exponential(q1);
        throw std::invalid_argument("problem.family: expected linear or exponential, got " +
                                    family);
    }

    ProblemSpec problem_spec() const { return {demand_model(), terminal_cost, sigma}; }

    ProblemSpec problem_spec(double sweep_sigma) const {
        return {demand_model(), terminal_cost, sweep_sigma};
    }

    SimilarityGrid similarity_grid() const {
        const double bound = xi_max > 0.0 ? xi_max : default_xi_max(problem_spec());
        return SimilarityGrid::uniform(bound, n_xi, SimilarityGrid::default_checkpoints());
    }

    StepControl step_control() const {
        StepControl ctl = detail::pde_default_control();
        ctl.rel_tol = rel_tol;
        ctl.abs_tol = abs_tol;
        return ctl;
    }

    EstimatorMode estimator_mode() const {
        if (estimator == "estimated") return EstimatorMode::estimated_g;
        if (estimator == "exact") return EstimatorMode::exact_g;
        throw std::invalid_argument("simulation.estimator: expected estimated or exact, got " +
                                    estimator);
    }

    SimulationConfig simulation_config() const {
        SimulationConfig cfg;
        cfg.n_paths = n_paths;
        cfg.dt = dt;
        cfg.substeps_per_interval = substeps;
        cfg.rng_seed = seed;
        cfg.estimator_mode = estimator_mode();
        cfg.initial_stock = initial_stock;
        cfg.n_threads = threads;
        return cfg;
    }

    /// The sweep actually run by compare: the configured list, or the
    /// problem's own sigma when no list is given.
    std::vector<double> sweep_sigmas() const {
        return sigmas.empty() ? std::vector<double>{sigma} : sigmas;
    }

    /// Cross-checks every field against the owning module before any work
    /// starts. Numeric ranges live with the module types; only the fields
    /// no module owns are checked here.
    void validate() const {
        problem_spec().validate();
        similarity_grid();  // constructor validates
        simulation_config().validate();
        if (!(rel_tol > 0.0) || !std::isfinite(rel_tol))
            throw std::invalid_argument("solver.rel_tol: must be positive and finite");
        if (!(abs_tol > 0.0) || !std::isfinite(abs_tol))
            throw std::invalid_argument("solver.abs_tol: must be positive and finite");
        if (!(layer_truncation > 0.0) || !std::isfinite(layer_truncation))
            throw std::invalid_argument("solver.layer_truncation: must be positive and finite");
        if (layer_nodes < 5)
            throw std::invalid_argument("solver.layer_nodes: need at least 5 nodes");
        for (double s : sigmas)
            if (!(s >= 0.0) || !std::isfinite(s))
                throw std::invalid_argument("simulation.sigmas: entries must be >= 0 and finite");
        if (directory.empty())
            throw std::invalid_argument("outputs.directory: must not be empty");
        if (thin == 0)
            throw std::invalid_argument("outputs.thin: must be >= 1");
        if (histogram_bins == 0)
            throw std::invalid_argument("outputs.histogram_bins: must be >= 1");
    }
};

namespace detail {

inline std::string trim(std::string_view text) {
    std::size_t a = 0, b = text.size();
    while (a < b && (text[a] == ' ' || text[a] == '\t')) ++a;
    while (b > a && (text[b - 1] == ' ' || text[b - 1] == '\t' || text[b - 1] == '\r')) --b;
    return std::string(text.substr(a, b - a));
}

inline double parse_double_field(const std::string& key, const std::string& value) {
    const char* p = value.c_str();
    char* end = nullptr;
    const double v = std::strtod(p, &end);
    if (end == p || *end != '\0')
        throw std::invalid_argument(key + ": not a number: " + value);
    return v;
}

inline std::uint64_t parse_unsigned_field(const std::string& key, const std::string& value) {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument(key + ": not a non-negative integer: " + value);
    return std::strtoull(value.c_str(), nullptr, 10);
}

inline bool parse_bool_field(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw std::invalid_argument(key + ": expected true or false, got " + value);
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    if (trim(value).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = value.find(',', start);
        const std::string item = trim(value.substr(start, comma - start));
        if (item.empty()) throw std::invalid_argument(key + ": empty list entry");
        out.push_back(parse_double_field(key, item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string join_double_list(const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += format_double(xs[i]);
    }
    return out;
}

}  // namespace detail

/// Assigns one field addressed as section.key; the same path handles file
/// parsing and --set overrides, so both validate identically.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
    using detail::parse_bool_field;
    using detail::parse_double_field;
    using detail::parse_double_list;
    using detail::parse_unsigned_field;
    if (key == "problem.family") cfg.family = value;
    else if (key == "problem.q1") cfg.q1 = parse_double_field(key, value);
    else if (key == "problem.terminal_cost") cfg.terminal_cost = parse_double_field(key, value);
    else if (key == "problem.sigma") cfg.sigma = parse_double_field(key, value);
    else if (key == "solver.xi_max") cfg.xi_max = parse_double_field(key, value);
    else if (key == "solver.n_xi") cfg.n_xi = parse_unsigned_field(key, value);
    else if (key == "solver.rel_tol") cfg.rel_tol = parse_double_field(key, value);
    else if (key == "solver.abs_tol") cfg.abs_tol = parse_double_field(key, value);
    else if (key == "solver.layer_truncation")
        cfg.layer_truncation = parse_double_field(key, value);
    else if (key == "solver.layer_nodes") cfg.layer_nodes = parse_unsigned_field(key, value);
    else if (key == "simulation.n_paths") cfg.n_paths = parse_unsigned_field(key, value);
    else if (key == "simulation.dt") cfg.dt = parse_double_field(key, value);
    else if (key == "simulation.substeps") cfg.substeps = parse_unsigned_field(key, value);
    else if (key == "simulation.seed") cfg.seed = parse_unsigned_field(key, value);
    else if (key == "simulation.estimator") cfg.estimator = value;
    else if (key == "simulation.initial_stock")
        cfg.initial_stock = parse_double_field(key, value);
    else if (key == "simulation.threads") cfg.threads = parse_unsigned_field(key, value);
    else if (key == "simulation.sigmas") cfg.sigmas = parse_double_list(key, value);
    else if (key == "outputs.directory") cfg.directory = value;
    else if (key == "outputs.paths") cfg.write_paths = parse_bool_field(key, value);
    else if (key == "outputs.thin") cfg.thin = parse_unsigned_field(key, value);
    else if (key == "outputs.histogram_bins")
        cfg.histogram_bins = parse_unsigned_field(key, value);
    else throw std::invalid_argument("unknown config key: " + key);
}

/// Applies a --set override written as section.key=value.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must look like section.key=value: " + assignment);
    const std::string key = detail::trim(assignment.substr(0, eq));
    if (key.find('.') == std::string::npos)
        throw std::invalid_argument("override key must be section.key: " + assignment);
    set_config_value(cfg, key, detail::trim(assignment.substr(eq + 1)));
}

/// Parses the sectioned key-value format:
///   [section]
///   key = value     # one assignment per line, later assignments win
/// Lines starting with # are comments. Unknown sections or keys fail with
/// the offending line number. Assignments land on top of `cfg`, so callers
/// can pre-seed defaults (e.g. an output directory from the environment).
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg = {}) {
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = detail::trim(line);
        if (text.empty() || text[0] == '#') continue;
        if (text.front() == '[') {
            if (text.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(line_no) +
                                            ": unterminated section header: " + text);
            section = detail::trim(text.substr(1, text.size() - 2));
            if (section.empty())
                throw std::invalid_argument("config line " + std::to_string(line_no) +
                                            ": empty section name");
            continue;
        }
        const std::size_t eq = text.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value, got: " + text);
        const std::string key = detail::trim(text.substr(0, eq));
        const std::string value = detail::trim(text.substr(eq + 1));
        if (section.empty())
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": assignment before any [section]: " + text);
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": empty key");
        try {
            set_config_value(cfg, section + "." + key, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": " +
                                        e.what());
        }
    }
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

/// Canonical serialization: fixed section and key order, numbers rendered
/// with round-trip precision. Two configs are equivalent exactly when their
/// canonical strings match; the provenance hash is taken over this form.
inline std::string canonical_config_string(const ExperimentConfig& c) {
    std::string out;
    out += "[problem]\n";
    out += "family = " + c.family + "\n";
    out += "q1 = " + format_double(c.q1) + "\n";
    out += "terminal_cost = " + format_double(c.terminal_cost) + "\n";
    out += "sigma = " + format_double(c.sigma) + "\n";
    out += "\n[solver]\n";
    out += "xi_max = " + format_double(c.xi_max) + "\n";
    out += "n_xi = " + std::to_string(c.n_xi) + "\n";
    out += "rel_tol = " + format_double(c.rel_tol) + "\n";
    out += "abs_tol = " + format_double(c.abs_tol) + "\n";
    out += "layer_truncation = " + format_double(c.layer_truncation) + "\n";
    out += "layer_nodes = " + std::to_string(c.layer_nodes) + "\n";
    out += "\n[simulation]\n";
    out += "n_paths = " + std::to_string(c.n_paths) + "\n";
    out += "dt = " + format_double(c.dt) + "\n";
    out += "substeps = " + std::to_string(c.substeps) + "\n";
    out += "seed = " + std::to_string(c.seed) + "\n";
    out += "estimator = " + c.estimator + "\n";
    out += "initial_stock = " + format_double(c.initial_stock) + "\n";
    out += "threads = " + std::to_string(c.threads) + "\n";
    out += "sigmas = " + detail::join_double_list(c.sigmas) + "\n";
    out += "\n[outputs]\n";
    out += "directory = " + c.directory + "\n";
    out += "paths = " + std::string(c.write_paths ? "true" : "false") + "\n";
    out += "thin = " + std::to_string(c.thin) + "\n";
    out += "histogram_bins = " + std::to_string(c.histogram_bins) + "\n";
    return out;
}

namespace detail {

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace detail

/// 16-hex-digit FNV-1a over the canonical serialization.
inline std::string config_hash(const ExperimentConfig& cfg) {
    return detail::hex64(detail::fnv1a64(canonical_config_string(cfg)));
}

/// Provenance header written at the top of every artifact: one line naming
/// the version, config hash, and seed, then one comment line per config
/// field so the exact configuration can be reconstructed from the artifact.
inline void write_provenance(std::ostream& os, const ExperimentConfig& cfg) {
    os << "# pricer=" << version_string << " config_hash=" << config_hash(cfg)
       << " seed=" << cfg.seed << "\n";
    std::istringstream lines(canonical_config_string(cfg));
    std::string line, section;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        if (line.front() == '[') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const std::size_t eq = line.find('=');
        os << "# config " << section << '.' << detail::trim(line.substr(0, eq)) << '='
           << detail::trim(line.substr(eq + 1)) << "\n";
    }
}

/// Rebuilds the configuration recorded by write_provenance. Reads the
/// "# config section.key=value" lines; stops at the first data line.
inline ExperimentConfig parse_provenance(std::istream& in) {
    ExperimentConfig cfg;
    bool seen = false;
    std::string line;
    while (in.peek() == '#' && std::getline(in, line)) {
        constexpr std::string_view tag = "# config ";
        if (line.size() > tag.size() && std::string_view(line).substr(0, tag.size()) == tag) {
            apply_override(cfg, line.substr(tag.size()));
            seen = true;
        }
    }
    if (!seen)
        throw std::invalid_argument("parse_provenance: no config lines in header");
    return cfg;
}

}  // namespace pricing
