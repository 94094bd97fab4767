#include <catch2/catch_amalgamated.hpp>

#include "pricing/config.hpp"
#include "pricing/io.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace pricing;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

struct CliRun {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Invoke the installed binary through the shell, capturing streams and the
/// exit status. `env` is a prefix such as "VAR=value" for the child only.
CliRun run_cli(const std::string& args, const std::string& env = {}) {
    namespace fs = std::filesystem;
    static const fs::path capture = [] {
        const fs::path dir = fs::temp_directory_path() / "pricer_cli_capture";
        fs::create_directories(dir);
        return dir;
    }();
    std::string cmd;
    if (!env.empty()) cmd += env + " ";
    cmd += PRICER_BIN;
    cmd += " " + args;
    cmd += " >" + (capture / "stdout.txt").string();
    cmd += " 2>" + (capture / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    CliRun run;
    run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    run.out = slurp(capture / "stdout.txt");
    run.err = slurp(capture / "stderr.txt");
    return run;
}

/// Fresh per-case output directory under the system temp root.
std::filesystem::path case_dir(const std::string& name) {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "pricer_cli_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::vector<std::string> data_lines(const std::filesystem::path& file) {
    std::ifstream in(file);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (next_data_line(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("cli prints the frozen-multiplier price") {
    const CliRun above = run_cli("price --policy deterministic --t 0 --s 2 --g 1");
    CHECK(above.exit_code == 0);
    CHECK(above.out == "0.5\n");  // stock-rich state sells at the static optimum

    const CliRun below = run_cli("price --policy deterministic --t 0 --s 0.5 --g 1");
    CHECK(below.exit_code == 0);
    CHECK(below.out == "1\n");  // rho = 1/2 inside the linear fan: q1 - rho
}

TEST_CASE("cli prints a grid price near the sell-out correction") {
    const CliRun run = run_cli(
        "price --policy grid --t 0.5 --s 0.25 --g 1 --set solver.n_xi=201 --set solver.xi_max=2");
    REQUIRE(run.exit_code == 0);
    // deep in the sell-out region the grid price tracks the corrected
    // frozen-multiplier price 1 - sigma^2 xi / 2 = 0.995
    CHECK_THAT(std::stod(run.out), WithinAbs(0.995, 5e-3));
}

TEST_CASE("cli reports usage errors") {
    CHECK(run_cli("bogus-subcommand").exit_code == 2);
    CHECK(run_cli("price --t 0 --s 1").exit_code == 2);  // --g is required
    CHECK(run_cli("").exit_code == 2);                   // a subcommand is required

    const CliRun help = run_cli("--help");
    CHECK(help.exit_code == 0);
    CHECK_THAT(help.out, ContainsSubstring("Subcommands"));
    CHECK_THAT(help.out, ContainsSubstring("demo-brownian"));
}

TEST_CASE("cli reports config errors with the config exit status") {
    const CliRun unknown = run_cli("price --t 0 --s 1 --g 1 --set solver.bogus=1");
    CHECK(unknown.exit_code == 2);
    CHECK_THAT(unknown.err, ContainsSubstring("unknown config key"));

    const CliRun bad_number = run_cli("price --t 0 --s 1 --g 1 --set problem.sigma=banana");
    CHECK(bad_number.exit_code == 2);
    CHECK_THAT(bad_number.err, ContainsSubstring("not a number"));

    const CliRun no_file = run_cli("--config /nonexistent/experiment.ini price --t 0 --s 1 --g 1");
    CHECK(no_file.exit_code == 2);
    CHECK_THAT(no_file.err, ContainsSubstring("cannot open config file"));

    const CliRun bad_state = run_cli("price --policy deterministic --t 7 --s 1 --g 1");
    CHECK(bad_state.exit_code == 2);
    CHECK_THAT(bad_state.err, ContainsSubstring("outside [0,1]"));
}

TEST_CASE("cli zero-noise simulation repeats one deterministic path") {
    const auto dir = case_dir("zero_noise");
    const CliRun run = run_cli(
        "simulate --policy deterministic --out " + dir.string() +
        " --set problem.sigma=0 --set simulation.n_paths=3 --set simulation.dt=0.2");
    REQUIRE(run.exit_code == 0);

    const auto paths = data_lines(dir / "paths.csv");
    REQUIRE(paths.size() == 1 + 3 * 6);  // header + 3 paths x 6 time nodes
    CHECK(paths[0] == "path_id,t,S,G,Ghat,price");
    for (std::size_t row = 1; row <= 6; ++row) {
        const std::string tail = paths[row].substr(paths[row].find(','));
        CHECK(paths[row + 6] == "1" + tail);   // same state, next path id
        CHECK(paths[row + 12] == "2" + tail);
    }

    const auto stats = data_lines(dir / "profit_stats.csv");
    REQUIRE(stats.size() == 2);
    CHECK(stats[0] == "sigma,mean,std,q05,q50,q95");
    const std::vector<double> row = parse_csv_row(stats[1]);
    REQUIRE(row.size() == 6);
    CHECK(row[3] == row[4]);  // equal order statistics: the profits coincide
    CHECK(row[4] == row[5]);
    CHECK_THAT(row[2], WithinAbs(0.0, 1e-15));
    CHECK_THAT(row[1], WithinAbs(0.5, 1e-12));  // sells one unit at the static optimum
}

TEST_CASE("cli compare writes per-sigma stats and histograms") {
    const auto dir = case_dir("compare");
    const CliRun run = run_cli(
        "compare --out " + dir.string() +
        " --set simulation.sigmas=0.1 --set simulation.n_paths=40 --set simulation.dt=0.1"
        " --set solver.n_xi=201 --set solver.xi_max=2 --set outputs.histogram_bins=6"
        " --set simulation.seed=11");
    REQUIRE(run.exit_code == 0);

    const auto stats = data_lines(dir / "compare_stats.csv");
    REQUIRE(stats.size() == 2);
    CHECK(stats[0] == "sigma,mean,std,q05,q50,q95");
    const std::vector<double> row = parse_csv_row(stats[1]);
    REQUIRE(row.size() == 6);
    CHECK(row[0] == 0.1);
    CHECK(row[3] <= row[4]);
    CHECK(row[4] <= row[5]);

    const auto hist = data_lines(dir / "rel_diff_hist_0.1.csv");
    REQUIRE(hist.size() == 1 + 6);
    CHECK(hist[0] == "bin_left,bin_right,count");
    double total = 0.0;
    for (std::size_t i = 1; i < hist.size(); ++i) {
        const std::vector<double> bin = parse_csv_row(hist[i]);
        REQUIRE(bin.size() == 3);
        CHECK(bin[0] < bin[1]);
        total += bin[2];
    }
    CHECK(total == 40.0);
}

TEST_CASE("cli artifacts begin with a provenance header that reconstructs the config") {
    const auto dir = case_dir("provenance");
    const CliRun run = run_cli("demo-brownian --out " + dir.string() +
                               " --set simulation.n_paths=500 --set simulation.seed=99");
    REQUIRE(run.exit_code == 0);

    const std::string text = slurp(dir / "negative_sales.csv");
    REQUIRE_THAT(text, ContainsSubstring("# pricer=" + std::string(version_string) +
                                         " config_hash="));
    std::istringstream in(text);
    const ExperimentConfig parsed = parse_provenance(in);
    CHECK(parsed.n_paths == 500);
    CHECK(parsed.seed == 99);
    CHECK(parsed.directory == dir.string());

    // the hash recorded on the first line matches the reconstructed config
    const std::string first_line = text.substr(0, text.find('\n'));
    const std::string token = "config_hash=";
    const std::size_t at = first_line.find(token);
    REQUIRE(at != std::string::npos);
    CHECK(first_line.substr(at + token.size(), 16) == config_hash(parsed));

    // the stream is left at the first data row
    std::string line;
    REQUIRE(next_data_line(in, line));
    CHECK(line == "dt,fraction,predicted,stderr");
}

TEST_CASE("cli simulations are reproducible across runs and thread counts") {
    const auto dir1 = case_dir("repro_t1");
    const auto dir4 = case_dir("repro_t4");
    const std::string common =
        " --set simulation.n_paths=64 --set simulation.dt=0.1 --set simulation.seed=37"
        " --set outputs.paths=false";
    const std::string run1 = "simulate --policy deterministic --out " + dir1.string() + common +
                             " --set simulation.threads=1";
    REQUIRE(run_cli(run1).exit_code == 0);
    REQUIRE(run_cli("simulate --policy deterministic --out " + dir4.string() + common +
                    " --set simulation.threads=4").exit_code == 0);

    CHECK(!std::filesystem::exists(dir1 / "paths.csv"));

    // thread count may not change any statistic; only the provenance header
    // records the difference
    CHECK(data_lines(dir1 / "profit_stats.csv") == data_lines(dir4 / "profit_stats.csv"));

    // repeating the exact invocation reproduces the file byte for byte
    const std::string first = slurp(dir1 / "profit_stats.csv");
    REQUIRE(!first.empty());
    REQUIRE(run_cli(run1).exit_code == 0);
    CHECK(slurp(dir1 / "profit_stats.csv") == first);
}

TEST_CASE("cli output directory resolves from flag, config, then environment") {
    namespace fs = std::filesystem;
    const auto root = case_dir("out_precedence");
    const auto env_dir = root / "from_env";
    const auto cfg_dir = root / "from_config";
    const auto flag_dir = root / "from_flag";
    const std::string cmd = "demo-brownian --set simulation.n_paths=200";
    const std::string env = "PRICER_OUT_DIR=" + env_dir.string();

    REQUIRE(run_cli(cmd, env).exit_code == 0);
    CHECK(fs::exists(env_dir / "negative_sales.csv"));

    const auto cfg_file = root / "experiment.ini";
    std::ofstream(cfg_file) << "[outputs]\ndirectory = " << cfg_dir.string() << "\n";
    REQUIRE(run_cli("--config " + cfg_file.string() + " " + cmd, env).exit_code == 0);
    CHECK(fs::exists(cfg_dir / "negative_sales.csv"));

    REQUIRE(run_cli(cmd + " --out " + flag_dir.string(), env).exit_code == 0);
    CHECK(fs::exists(flag_dir / "negative_sales.csv"));
}

TEST_CASE("cli solve-hjb writes every checkpoint row") {
    const auto dir = case_dir("solve_hjb");
    const CliRun run = run_cli("solve-hjb --out " + dir.string() +
                               " --set solver.n_xi=201 --set solver.xi_max=2");
    REQUIRE(run.exit_code == 0);

    const auto rows = data_lines(dir / "hjb_solution.csv");
    REQUIRE(rows.size() == 1 + 101 * 201);  // header + checkpoints x nodes
    CHECK(rows[0] == "tau,xi,phi,psi");
    const std::vector<double> terminal = parse_csv_row(rows[1]);
    CHECK(terminal[0] == 0.0);  // grid starts at the terminal surface tau = 0
    const std::vector<double> last = parse_csv_row(rows.back());
    CHECK(last[0] == 1.0);
    CHECK(last[1] == 2.0);
}

TEST_CASE("cli asymptotics writes the layer profile and the kink comparison") {
    const auto dir = case_dir("asymptotics");
    const CliRun run = run_cli("asymptotics --out " + dir.string() +
                               " --set solver.layer_nodes=301 --set solver.n_xi=201"
                               " --set solver.xi_max=2");
    REQUIRE(run.exit_code == 0);

    const auto profile = data_lines(dir / "layer_profile.csv");
    REQUIRE(profile.size() == 1 + 301);
    CHECK(profile[0] == "eta,f,fprime");

    const auto rows = data_lines(dir / "kink_comparison.csv");
    REQUIRE(rows.size() == 1 + 20);
    CHECK(rows[0] == "tau,xi_kink,psi_kink,kink_approx,xi_outer,psi_outer,outer_approx");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::vector<double> r = parse_csv_row(rows[i]);
        REQUIRE(r.size() == 7);
        CHECK(r[1] == r[0]);        // the kink sits at xi = beta tau with beta = 1
        CHECK(r[4] == 0.5 * r[1]);  // outer probe halfway into the sell-out region
    }
}

TEST_CASE("cli demo-brownian fractions follow the shrinking-step prediction") {
    const auto dir = case_dir("demo_brownian");
    const CliRun run = run_cli("demo-brownian --out " + dir.string() +
                               " --set simulation.n_paths=400 --set simulation.seed=5");
    REQUIRE(run.exit_code == 0);

    const auto rows = data_lines(dir / "negative_sales.csv");
    REQUIRE(rows.size() == 1 + 4);
    CHECK(rows[0] == "dt,fraction,predicted,stderr");
    double prev_predicted = -1.0;
    double prev_dt = 1.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::vector<double> r = parse_csv_row(rows[i]);
        REQUIRE(r.size() == 4);
        CHECK(r[0] < prev_dt);  // dt sweeps downward
        CHECK(r[1] >= 0.0);
        CHECK(r[1] <= 1.0);
        CHECK(r[2] > prev_predicted);  // prediction climbs toward 1/2
        CHECK(r[2] < 0.5);
        prev_dt = r[0];
        prev_predicted = r[2];
    }
}
