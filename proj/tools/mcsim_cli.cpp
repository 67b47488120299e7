// mcsim command line: run scenarios, compare launcher topologies, tally
// costs from event logs, validate scenario files, and serve the REST API
// against a live simulation.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mcsim/api_server.hpp"
#include "mcsim/harness.hpp"
#include "mcsim/scenario.hpp"

namespace fs = std::filesystem;
using namespace mcsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

std::optional<Scenario> load_and_validate(const std::string& path, bool print_ok) {
    Scenario sc;
    try {
        sc = load_scenario(path);
    } catch (const ScenarioError& e) {
        std::cerr << path << ": " << e.what() << "\n";
        return std::nullopt;
    }
    auto errors = validate_scenario(sc);
    if (!errors.empty()) {
        for (const auto& e : errors) std::cerr << path << ": " << e << "\n";
        return std::nullopt;
    }
    if (print_ok) std::cout << path << ": ok\n";
    return sc;
}

void write_outputs(const RunResult& result, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream metrics(fs::path(out_dir) / "metrics.csv");
    write_metrics_csv(result.records, metrics);
    std::ofstream summary(fs::path(out_dir) / "summary.csv");
    write_summary_csv(result.summaries, summary);
    std::ofstream events(fs::path(out_dir) / "events.jsonl");
    for (const auto& line : result.event_lines) events << line << '\n';
}

void print_summaries(const RunResult& result) {
    for (const auto& s : result.summaries) {
        std::cout << s.scenario << " [" << s.mode << "] size=" << s.size << " ranks=" << s.ranks
                  << " reps=" << s.reps << "  creation=" << format_double(s.creation_mean)
                  << "s±" << format_double(s.creation_std)
                  << "  wall=" << format_double(s.wall_mean) << "s±"
                  << format_double(s.wall_std)
                  << "  node_seconds=" << format_double(s.node_seconds_mean) << "\n";
    }
}

ApiServer* g_server = nullptr;
void handle_sigint(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mcsim: deterministic MiniCluster workload-manager simulator"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir = "out";
    std::string eventlog_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<int> reps_override;
    int port = 8050;
    double time_scale = 1.0;

    auto* run = app.add_subcommand("run", "run a scenario and emit metrics");
    run->add_option("scenario", scenario_path, "scenario file")->required();
    std::uint64_t seed_opt = 0;
    auto* seed_flag = run->add_option("--seed", seed_opt, "override the scenario seed");
    int reps_opt = 0;
    auto* reps_flag = run->add_option("--reps", reps_opt, "override the repetition count");
    run->add_option("--out", out_dir, "output directory (metrics.csv, summary.csv, events.jsonl)");

    auto* compare = app.add_subcommand("compare",
                                       "run both launcher topologies and emit paired metrics");
    compare->add_option("scenario", scenario_path, "scenario file")->required();
    compare->add_option("--out", out_dir, "output directory");

    auto* cost = app.add_subcommand("cost", "tally one-time vs repeated costs from an event log");
    cost->add_option("eventlog", eventlog_path, "events.jsonl produced by run")->required();

    auto* validate = app.add_subcommand("validate", "check a scenario file");
    validate->add_option("scenario", scenario_path, "scenario file")->required();

    auto* serve = app.add_subcommand("serve", "start the REST API against a live simulation");
    serve->add_option("scenario", scenario_path, "scenario file")->required();
    serve->add_option("--port", port, "listen port (127.0.0.1)");
    serve->add_option("--time-scale", time_scale, "simulated seconds per wall second");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            return load_and_validate(scenario_path, true) ? kExitOk : kExitValidation;
        }
        if (run->parsed() || compare->parsed()) {
            auto sc = load_and_validate(scenario_path, false);
            if (!sc) return kExitValidation;
            RunOverrides overrides;
            if (seed_flag->count() > 0) overrides.seed = seed_opt;
            if (reps_flag->count() > 0) overrides.reps = reps_opt;
            RunResult result = compare->parsed() ? compare_topologies(*sc, overrides)
                                                 : run_scenario(*sc, overrides);
            write_outputs(result, out_dir);
            print_summaries(result);
            std::cout << "wrote " << out_dir << "/metrics.csv, summary.csv, events.jsonl\n";
            return kExitOk;
        }
        if (cost->parsed()) {
            std::ifstream in(eventlog_path);
            if (!in) {
                std::cerr << "cannot open event log '" << eventlog_path << "'\n";
                return kExitRuntime;
            }
            CostReport report = cost_report(in);
            write_cost_report(report, std::cout);
            return kExitOk;
        }
        if (serve->parsed()) {
            auto sc = load_and_validate(scenario_path, false);
            if (!sc) return kExitValidation;
            int size = sc->effective_sizes().front();
            ClusterOptions opts = build_cluster_options(*sc, size, false);
            ClusterSim sim(opts, sc->seed);
            sim.start();
            register_scenario_plugins(sim, *sc);
            // bring the cluster up before accepting requests
            sim.engine().run_until([&] { return sim.cluster_full_time().has_value(); },
                                   sc->horizon);
            if (!sim.cluster_full_time()) {
                std::cerr << "cluster did not come up within the horizon\n";
                return kExitRuntime;
            }
            ApiServer server(sim, port, time_scale);
            if (!server.start()) {
                std::cerr << "cannot bind 127.0.0.1:" << port << "\n";
                return kExitRuntime;
            }
            g_server = &server;
            std::signal(SIGINT, handle_sigint);
            std::cout << "serving " << sc->name << " on http://127.0.0.1:" << port
                      << " (Ctrl+C to stop)\n";
            server.loop();
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
