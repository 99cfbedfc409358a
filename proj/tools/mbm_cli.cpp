// Command-line front end: simulate, track, evaluate, benchmark, assign.
//
// Exit codes: 0 success, 2 usage or input error, 1 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "mbm/io.hpp"

namespace fs = std::filesystem;
using namespace mbm;

namespace {

constexpr const char* kOutputEnv = "MBM_OUTPUT_DIR";

struct Options {
    std::string scenario = "scenario1";
    std::uint64_t seed = 1;
    int runs = 100;
    std::vector<std::size_t> max_globals;
    std::optional<double> gate, prune_weight, prune_existence, estimate_threshold;
    double gospa_c = 10.0;
    double gospa_p = 2.0;
    bool full_state = false;
    bool truth_per_run = false;
    std::string out;
    std::string measurements, truth, estimates, costs;
    std::size_t k = 1;
};

std::string default_output_dir() {
    const char* env = std::getenv(kOutputEnv);
    return env && *env ? env : ".";
}

io::ScenarioConfig load_scenario(const std::string& name_or_path) {
    for (const auto& s : builtin_scenarios())
        if (s.name == name_or_path) return {s, FilterParams{}};
    if (!fs::is_regular_file(name_or_path))
        throw InputError("'" + name_or_path + "' is neither a built-in scenario nor a readable file");
    std::ifstream in(name_or_path);
    return io::read_scenario(in);
}

FilterParams filter_params(const Options& o, FilterParams p) {
    if (!o.max_globals.empty()) p.max_globals = o.max_globals.front();
    if (o.gate) p.gate_threshold = *o.gate;
    if (o.prune_weight) p.prune_global_weight = *o.prune_weight;
    if (o.prune_existence) p.prune_existence = *o.prune_existence;
    if (o.estimate_threshold) p.estimate_existence = *o.estimate_threshold;
    if (p.max_globals < 1) throw InputError("--max-globals must be at least 1");
    if (!(p.gate_threshold > 0.0)) throw InputError("--gate must be positive");
    if (!(p.prune_global_weight >= 0.0 && p.prune_global_weight < 1.0)) throw InputError("--prune-weight outside [0,1)");
    if (!(p.prune_existence >= 0.0 && p.prune_existence < 1.0)) throw InputError("--prune-existence outside [0,1)");
    if (!(p.estimate_existence >= 0.0 && p.estimate_existence < 1.0))
        throw InputError("--estimate-threshold outside [0,1)");
    return p;
}

GospaParams gospa_params(const Options& o) {
    GospaParams g;
    g.c = o.gospa_c;
    g.p = o.gospa_p;
    if (o.full_state) g.position_indices.clear();
    g.validate();
    return g;
}

fs::path output_dir(const Options& o) {
    fs::path dir = o.out.empty() ? default_output_dir() : o.out;
    fs::create_directories(dir);
    return dir;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    return f;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot read " + path);
    return f;
}

int cmd_simulate(const Options& o) {
    const auto cfg = load_scenario(o.scenario);
    const auto [truth, z] = simulate(cfg.scenario, o.seed, o.seed);
    const auto dir = output_dir(o);
    auto t = open_output(dir / "truth.txt");
    io::write_labeled(t, truth);
    auto m = open_output(dir / "measurements.txt");
    io::write_measurements(m, z);
    std::cout << "wrote " << (dir / "truth.txt").string() << " and " << (dir / "measurements.txt").string() << '\n';
    return 0;
}

int cmd_track(const Options& o) {
    const auto cfg = load_scenario(o.scenario);
    const auto params = filter_params(o, cfg.filter);
    auto in = open_input(o.measurements);
    const auto z = io::read_measurements(in);
    const auto estimates = run_filter(cfg.scenario, z, params);
    const auto path = output_dir(o) / "estimates.txt";
    auto out = open_output(path);
    io::write_labeled(out, io::to_labeled(estimates));
    std::cout << "wrote " << path.string() << " (" << z.size() << " steps)\n";
    return 0;
}

int cmd_evaluate(const Options& o) {
    auto t = open_input(o.truth);
    auto e = open_input(o.estimates);
    const auto truth = io::read_labeled(t);
    const auto est = io::read_labeled(e);
    if (truth.size() != est.size())
        throw InputError("truth has " + std::to_string(truth.size()) + " steps but estimates have " +
                         std::to_string(est.size()));
    const auto params = gospa_params(o);
    std::vector<GospaResult> steps;
    for (std::size_t k = 0; k < truth.size(); ++k)
        steps.push_back(gospa(truth_states(truth[k]), truth_states(est[k]), params));
    const auto dir = output_dir(o);
    auto csv = open_output(dir / "gospa.csv");
    io::write_gospa_csv(csv, steps);
    auto summary = open_output(dir / "gospa_summary.csv");
    io::write_gospa_summary(summary, steps);
    std::cout << "rms_gospa " << io::format_double(rms_gospa(steps)) << '\n';
    return 0;
}

int cmd_benchmark(const Options& o) {
    const auto cfg = load_scenario(o.scenario);
    if (o.runs < 1) throw InputError("--runs must be at least 1");
    std::vector<std::size_t> sweep = o.max_globals;
    if (sweep.empty()) sweep = {100, 200, 300, 400, 500};
    MonteCarloConfig mc;
    mc.n_runs = o.runs;
    mc.seed = o.seed;
    mc.truth_per_run = o.truth_per_run;
    mc.gospa = gospa_params(o);

    const auto dir = output_dir(o);
    fs::create_directories(dir / "runs");
    std::vector<MonteCarloReport> reports;
    std::cout << std::setw(8) << "N_h" << std::setw(14) << "rms_gospa" << std::setw(12) << "loc_p" << std::setw(12)
              << "missed_p" << std::setw(12) << "false_p" << std::setw(14) << "runtime_s" << '\n';
    for (std::size_t nh : sweep) {
        Options one = o;
        one.max_globals = {nh};
        auto report = run_monte_carlo(cfg.scenario, filter_params(one, cfg.filter), mc);
        for (const auto& run : report.runs) {
            auto f = open_output(dir / "runs" / ("nh" + std::to_string(nh) + "_seed" + std::to_string(run.seed) + ".csv"));
            io::write_run_csv(f, run);
        }
        std::cout << std::setw(8) << nh << std::fixed << std::setprecision(4) << std::setw(14) << report.mean_rms_gospa
                  << std::setw(12) << report.mean_localisation_p << std::setw(12) << report.mean_missed_p
                  << std::setw(12) << report.mean_false_p << std::setw(14) << report.mean_runtime_seconds << '\n'
                  << std::defaultfloat;
        report.runs.clear();
        reports.push_back(std::move(report));
    }
    auto summary = open_output(dir / "summary.csv");
    io::write_summary_csv(summary, reports);
    auto timing = open_output(dir / "timing.csv");
    io::write_timing_csv(timing, reports);
    return 0;
}

int cmd_assign(const Options& o) {
    auto in = open_input(o.costs);
    const auto costs = io::read_cost_matrix(in);
    if (o.k < 1) throw InputError("--k must be at least 1");
    const auto ranked = k_best(costs, o.k);
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        auto f = open_output(fs::path(o.out) / "assignments.csv");
        io::write_assignments(f, ranked);
    }
    io::write_assignments(std::cout, ranked);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-Bernoulli mixture tracker with Murty pruning, GOSPA evaluation and Monte Carlo benchmarks"};
    app.require_subcommand(1);
    Options o;

    auto add_scenario = [&](CLI::App* c) {
        c->add_option("--scenario", o.scenario, "built-in name (scenario1..3) or JSON config path")
            ->capture_default_str();
    };
    auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "random seed")->capture_default_str(); };
    auto add_out = [&](CLI::App* c) {
        c->add_option("--out", o.out, std::string("output directory (default $") + kOutputEnv + " or .)");
    };
    auto add_filter = [&](CLI::App* c, bool sweep) {
        c->add_option("--max-globals", o.max_globals,
                      sweep ? "global hypothesis caps N_h, comma separated" : "global hypothesis cap N_h")
            ->delimiter(',')
            ->expected(1, sweep ? 64 : 1);
        c->add_option("--gate", o.gate, "gating threshold on the squared Mahalanobis distance");
        c->add_option("--prune-weight", o.prune_weight, "global hypothesis weight threshold");
        c->add_option("--prune-existence", o.prune_existence, "Bernoulli existence pruning threshold");
        c->add_option("--estimate-threshold", o.estimate_threshold, "existence threshold for estimates");
    };
    auto add_gospa = [&](CLI::App* c) {
        c->add_option("--gospa-c", o.gospa_c, "GOSPA cut-off c")->capture_default_str();
        c->add_option("--gospa-p", o.gospa_p, "GOSPA order p")->capture_default_str();
        c->add_flag("--full-state", o.full_state, "GOSPA distance over the full state instead of position");
    };

    auto* sim = app.add_subcommand("simulate", "write ground truth and measurements for one seed");
    add_scenario(sim);
    add_seed(sim);
    add_out(sim);

    auto* track = app.add_subcommand("track", "run the filter over a measurement file");
    add_scenario(track);
    track->add_option("--measurements", o.measurements, "measurement file")->required();
    add_filter(track, false);
    add_out(track);

    auto* eval = app.add_subcommand("evaluate", "per-step GOSPA between truth and estimate files");
    eval->add_option("--truth", o.truth, "truth file")->required();
    eval->add_option("--estimates", o.estimates, "estimates file")->required();
    add_gospa(eval);
    add_out(eval);

    auto* bench = app.add_subcommand("benchmark", "Monte Carlo runs over a sweep of N_h");
    add_scenario(bench);
    add_seed(bench);
    bench->add_option("--runs", o.runs, "Monte Carlo runs per N_h")->capture_default_str();
    bench->add_flag("--truth-per-run", o.truth_per_run, "draw a new ground truth for every run");
    add_filter(bench, true);
    add_gospa(bench);
    add_out(bench);

    auto* assign = app.add_subcommand("assign", "k best assignments of a cost matrix file");
    assign->add_option("--costs", o.costs, "cost matrix: rows of whitespace-separated numbers, inf = forbidden")
        ->required();
    assign->add_option("--k", o.k, "number of assignments")->capture_default_str();
    add_out(assign);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*sim) return cmd_simulate(o);
        if (*track) return cmd_track(o);
        if (*eval) return cmd_evaluate(o);
        if (*bench) return cmd_benchmark(o);
        return cmd_assign(o);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
}
