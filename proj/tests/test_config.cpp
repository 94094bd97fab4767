#include <catch2/catch_amalgamated.hpp>

#include "pricing/config.hpp"

#include <sstream>
#include <string>

using namespace pricing;

namespace {

const char* full_document = R"(# Table-1 style experiment
[problem]
family = linear
q1 = 2.25
terminal_cost = 0.75
sigma = 0.2

[solver]
xi_max = 3.0
n_xi = 3001
rel_tol = 1e-10
abs_tol = 1e-13
layer_truncation = 8
layer_nodes = 1001

[simulation]
n_paths = 5000
dt = 0.02
substeps = 4
seed = 37
estimator = exact
initial_stock = 0.5
threads = 4
sigmas = 0.05, 0.1, 0.2, 0.4

[outputs]
directory = /tmp/runs
paths = false
thin = 10
histogram_bins = 25
)";

} // namespace

TEST_CASE("config defaults mirror the module defaults") {
    const ExperimentConfig cfg;
    CHECK(cfg.problem_spec().demand.q1() == 1.5);
    CHECK(cfg.problem_spec().terminal_cost == 0.5);
    CHECK(cfg.problem_spec().sigma == 0.1);
    CHECK(cfg.similarity_grid().xi_max == 8.0);  // derived: 8 x kink location
    CHECK(cfg.similarity_grid().n_xi == 2001);
    CHECK(cfg.step_control().rel_tol == 1e-12);
    CHECK(cfg.step_control().abs_tol == 1e-15);
    CHECK(cfg.simulation_config().n_paths == 100'000);
    CHECK(cfg.simulation_config().estimator_mode == EstimatorMode::estimated_g);
    CHECK(cfg.sweep_sigmas() == std::vector<double>{0.1});
    CHECK_NOTHROW(cfg.validate());

    std::istringstream empty("");
    CHECK(parse_config(empty) == cfg);
}

TEST_CASE("config parses a full document") {
    const ExperimentConfig cfg = parse_config_text(full_document);
    CHECK(cfg.family == "linear");
    CHECK(cfg.q1 == 2.25);
    CHECK(cfg.terminal_cost == 0.75);
    CHECK(cfg.sigma == 0.2);
    CHECK(cfg.xi_max == 3.0);
    CHECK(cfg.n_xi == 3001);
    CHECK(cfg.rel_tol == 1e-10);
    CHECK(cfg.abs_tol == 1e-13);
    CHECK(cfg.layer_truncation == 8.0);
    CHECK(cfg.layer_nodes == 1001);
    CHECK(cfg.n_paths == 5000);
    CHECK(cfg.dt == 0.02);
    CHECK(cfg.substeps == 4);
    CHECK(cfg.seed == 37);
    CHECK(cfg.estimator == "exact");
    CHECK(cfg.estimator_mode() == EstimatorMode::exact_g);
    CHECK(cfg.initial_stock == 0.5);
    CHECK(cfg.threads == 4);
    CHECK(cfg.sigmas == std::vector<double>{0.05, 0.1, 0.2, 0.4});
    CHECK(cfg.sweep_sigmas() == cfg.sigmas);
    CHECK(cfg.directory == "/tmp/runs");
    CHECK(cfg.write_paths == false);
    CHECK(cfg.thin == 10);
    CHECK(cfg.histogram_bins == 25);
    CHECK_NOTHROW(cfg.validate());

    // later assignments win, matching override semantics
    const auto re = parse_config_text("[problem]\nsigma = 0.3\nsigma = 0.4\n");
    CHECK(re.sigma == 0.4);
}

TEST_CASE("config parse errors carry the line and field") {
    auto parse = [](const std::string& text) { return parse_config_text(text); };

    CHECK_THROWS_WITH(parse("[problem]\nbogus = 1\n"),
                      Catch::Matchers::ContainsSubstring("line 2") &&
                          Catch::Matchers::ContainsSubstring("problem.bogus"));
    CHECK_THROWS_WITH(parse("[risk]\nq1 = 1\n"),
                      Catch::Matchers::ContainsSubstring("risk.q1"));
    CHECK_THROWS_WITH(parse("q1 = 1\n"),
                      Catch::Matchers::ContainsSubstring("before any [section]"));
    CHECK_THROWS_WITH(parse("[problem\nq1 = 1\n"),
                      Catch::Matchers::ContainsSubstring("unterminated"));
    CHECK_THROWS_WITH(parse("[problem]\nq1\n"),
                      Catch::Matchers::ContainsSubstring("expected key = value"));
    CHECK_THROWS_WITH(parse("[problem]\nq1 = abc\n"),
                      Catch::Matchers::ContainsSubstring("not a number"));
    CHECK_THROWS_WITH(parse("[simulation]\nn_paths = -3\n"),
                      Catch::Matchers::ContainsSubstring("non-negative integer"));
    CHECK_THROWS_WITH(parse("[simulation]\nsigmas = 0.1,,0.2\n"),
                      Catch::Matchers::ContainsSubstring("empty list entry"));
    CHECK_THROWS_WITH(parse("[outputs]\npaths = yes\n"),
                      Catch::Matchers::ContainsSubstring("true or false"));
}

TEST_CASE("config validation rejects out-of-range fields") {
    auto with = [](const std::string& key, const std::string& value) {
        ExperimentConfig cfg;
        set_config_value(cfg, key, value);
        return cfg;
    };
    CHECK_THROWS_AS(with("problem.family", "quadratic").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("problem.sigma", "-0.1").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("solver.n_xi", "2").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("solver.rel_tol", "0").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("solver.layer_nodes", "4").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("simulation.dt", "0.15").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("simulation.estimator", "banana").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("simulation.threads", "0").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("simulation.sigmas", "0.1,-0.2").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("outputs.thin", "0").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("outputs.histogram_bins", "0").validate(), std::invalid_argument);
    CHECK_THROWS_AS(with("outputs.directory", "").validate(), std::invalid_argument);
}

TEST_CASE("overrides reuse the parsing path") {
    ExperimentConfig cfg;
    apply_override(cfg, "problem.sigma=0.4");
    apply_override(cfg, " simulation.seed = 99 ");
    apply_override(cfg, "outputs.directory=/tmp/a=b");  // value may contain '='
    CHECK(cfg.sigma == 0.4);
    CHECK(cfg.seed == 99);
    CHECK(cfg.directory == "/tmp/a=b");

    CHECK_THROWS_AS(apply_override(cfg, "problem.sigma"), std::invalid_argument);
    CHECK_THROWS_AS(apply_override(cfg, "sigma=0.4"), std::invalid_argument);
    CHECK_THROWS_AS(apply_override(cfg, "problem.unknown=1"), std::invalid_argument);
}

TEST_CASE("canonical form is spelling-invariant and round-trips") {
    const auto a = parse_config_text("[problem]\nsigma = 1e-1\n");
    const auto b = parse_config_text("[problem]\nsigma = 0.1\n");
    CHECK(canonical_config_string(a) == canonical_config_string(b));
    CHECK(config_hash(a) == config_hash(b));

    const auto c = parse_config_text("[simulation]\nseed = 1\n");
    CHECK(config_hash(a) != config_hash(c));

    // canonical text parses back to the same config
    const ExperimentConfig cfg = parse_config_text(full_document);
    CHECK(parse_config_text(canonical_config_string(cfg)) == cfg);
    CHECK(config_hash(cfg).size() == 16);
}

TEST_CASE("hash matches the FNV-1a reference values") {
    CHECK(detail::fnv1a64("") == 14695981039346656037ULL);
    CHECK(detail::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(detail::fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(detail::hex64(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");
    CHECK(detail::hex64(0x1ULL) == "0000000000000001");
}

TEST_CASE("provenance header reconstructs the configuration") {
    const ExperimentConfig cfg = parse_config_text(full_document);
    std::ostringstream os;
    write_provenance(os, cfg);
    const std::string header = os.str();

    CHECK(header.starts_with("# pricer=" + std::string(version_string) +
                             " config_hash=" + config_hash(cfg) + " seed=37\n"));
    CHECK(header.find("# config problem.q1=2.25\n") != std::string::npos);
    CHECK(header.find("# config outputs.directory=/tmp/runs\n") != std::string::npos);

    std::istringstream in(header + "tau,xi,phi,psi\n0,0,0,0\n");
    const ExperimentConfig back = parse_provenance(in);
    CHECK(back == cfg);
    CHECK(config_hash(back) == config_hash(cfg));

    // the stream is left at the first data line
    std::string next;
    CHECK(next_data_line(in, next));
    CHECK(next == "tau,xi,phi,psi");

    std::istringstream bare("no header here\n");
    CHECK_THROWS_AS(parse_provenance(bare), std::invalid_argument);
}

TEST_CASE("config builds module objects for swept sigmas") {
    ExperimentConfig cfg;
    cfg.sigma = 0.1;
    const ProblemSpec swept = cfg.problem_spec(0.4);
    CHECK(swept.sigma == 0.4);
    CHECK(swept.demand.q1() == 1.5);

    cfg.family = "exponential";
    CHECK(cfg.demand_model().family() == DemandFamily::exponential);
    cfg.family = "cubic";
    CHECK_THROWS_AS(cfg.demand_model(), std::invalid_argument);
}
