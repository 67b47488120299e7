#pragma once

#include <cmath>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcsim/api.hpp"
#include "mcsim/cluster.hpp"
#include "mcsim/scenario.hpp"

namespace mcsim {

// One repetition's measurements.
struct MetricsRecord {
    std::string scenario;
    std::string mode;  // embedded_lead | external_launcher
    int size = 0;      // worker nodes
    int ranks = 0;     // total ranks of the entry job, 0 if none
    int rep = 0;
    std::uint64_t seed = 0;
    double creation_time = -1;  // reconcile start -> all brokers online
    double deletion_time = -1;  // terminate plan -> last pod gone
    double launcher_time = -1;  // entry job submit -> completion
    double wall_time = -1;      // entry job modeled execution
    int nodes_billed = 0;
    double node_seconds_billed = 0;
    int one_time_costs = 0;
    int repeated_costs = 0;
};

struct SummaryRecord {
    std::string scenario;
    std::string mode;
    int size = 0;
    int ranks = 0;
    int reps = 0;
    double creation_mean = 0, creation_std = 0;
    double deletion_mean = 0, deletion_std = 0;
    double launcher_mean = 0, launcher_std = 0;
    double wall_mean = 0, wall_std = 0;
    double node_seconds_mean = 0, node_seconds_std = 0;
};

struct RunResult {
    std::vector<MetricsRecord> records;
    std::vector<SummaryRecord> summaries;
    std::vector<std::string> event_lines;  // JSONL, one record per delivered event
};

namespace detail {

inline double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0;
    double s = 0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Population stddev: a single rep reports 0, not NaN.
inline double stddev_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0;
    double m = mean_of(xs);
    double s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace detail

inline ClusterOptions build_cluster_options(const Scenario& sc, int size, bool external_launcher) {
    ClusterOptions opts;
    opts.spec = sc.minicluster;
    opts.spec.size = external_launcher ? size + 1 : size;
    opts.spec.max_size = std::max(sc.minicluster.max_size, opts.spec.size);
    opts.catalog = sc.catalog;
    opts.retry = sc.retry;
    opts.topology = sc.topology;
    opts.queue = sc.scheduler;
    opts.scale = sc.scale_policy;
    opts.anti_affinity = sc.anti_affinity;
    opts.batch_width = sc.batch_width;
    opts.lead_delay = sc.lead_delay;
    opts.launcher_mode = external_launcher;
    opts.pod_create = sc.pod_create;
    opts.pod_terminate = sc.pod_terminate;
    opts.connect = sc.connect;
    opts.image_pull = sc.image_pull;
    opts.image_pull_enabled = sc.image_pull_enabled;
    opts.image_pull_policy = sc.image_pull_policy;
    if (!sc.minicluster.entry_command.empty() && !sc.minicluster.interactive) {
        JobSpec entry;
        if (sc.entry_job) entry = *sc.entry_job;
        if (!sc.entry_job || sc.entry_job->nodes <= 1) entry.nodes = size;
        if (entry.user.empty() || entry.user == "default")
            entry.user = sc.minicluster.users.empty() ? "default"
                                                      : sc.minicluster.users.front().username;
        opts.entry_job = entry;
    }
    return opts;
}

inline void register_scenario_plugins(ClusterSim& sim, const Scenario& sc) {
    for (const auto& cfg : sc.plugins) {
        std::string secret = sim.config().secret;
        if (cfg.type == "mock") {
            MockBurstPlugin::Config mock;
            mock.name = cfg.name;
            mock.capacity = cfg.capacity;
            mock.shape = cfg.shape;
            mock.provision_latency = cfg.provision_latency;
            mock.real_secret = secret;
            if (cfg.wrong_secret) mock.secret_override = "not-the-cluster-secret";
            sim.bursts().register_plugin(std::make_unique<MockBurstPlugin>(mock));
        } else if (cfg.type == "local") {
            LocalBurstPlugin::Config local;
            local.name = cfg.name;
            local.reserve_nodes = cfg.capacity;
            local.shape = cfg.shape;
            local.provision_latency = cfg.provision_latency;
            local.real_secret = secret;
            sim.bursts().register_plugin(std::make_unique<LocalBurstPlugin>(local));
        }
    }
}

// Derived per-(size, rep) seed: reproducible and distinct across the sweep.
inline std::uint64_t derive_seed(std::uint64_t base, int size_index, int rep) {
    return base + 10007ull * static_cast<std::uint64_t>(size_index) +
           static_cast<std::uint64_t>(rep);
}

inline MetricsRecord run_one_rep(const Scenario& sc, int size, bool external_launcher, int rep,
                                 std::uint64_t seed, std::vector<std::string>* event_lines) {
    ClusterOptions opts = build_cluster_options(sc, size, external_launcher);
    ClusterSim sim(opts, seed);
    SimEngine& eng = sim.engine();
    sim.start();
    register_scenario_plugins(sim, sc);

    SimTime last_external = 0;
    for (const auto& job : sc.jobs) {
        last_external = std::max(last_external, job.submit_at);
        JobSpec spec = job.spec;
        eng.schedule(job.submit_at, EventKind::timer, json{},
                     [&sim, spec] { sim.submit_job(spec); }, false);
    }
    for (const auto& rz : sc.resizes) {
        last_external = std::max(last_external, rz.at);
        int target = rz.size;
        eng.schedule(rz.at, EventKind::timer, json{},
                     [&sim, target] { sim.request_resize_cmd(target, "scenario"); }, false);
    }
    for (const auto& cr : sc.crashes) {
        last_external = std::max(last_external, cr.at);
        int index = cr.index;
        eng.schedule(cr.at, EventKind::timer, json{}, [&sim, index] { sim.crash_pod(index); },
                     false);
    }

    eng.run_until(
        [&] {
            return sim.cluster_full_time().has_value() && eng.now() >= last_external &&
                   sim.all_jobs_terminal() && sim.steady();
        },
        sc.horizon);
    sim.delete_cluster();
    eng.run_until([&] { return sim.deletion_finished_at().has_value(); }, sc.horizon * 2);

    MetricsRecord rec;
    rec.scenario = sc.name;
    rec.mode = external_launcher ? "external_launcher" : "embedded_lead";
    rec.size = size;
    rec.rep = rep;
    rec.seed = seed;
    if (sim.cluster_full_time())
        rec.creation_time = *sim.cluster_full_time() - sim.reconcile_started_at();
    if (sim.deletion_started_at() && sim.deletion_finished_at())
        rec.deletion_time = *sim.deletion_finished_at() - *sim.deletion_started_at();
    if (sim.entry_job_id()) {
        const JobRecord* job = sim.queue().find(*sim.entry_job_id());
        rec.ranks = job->spec.total_ranks();
        if (job->state == JobState::completed) {
            rec.launcher_time = job->end_time - job->submit_time;
            rec.wall_time = job->end_time - job->start_time;
        }
    }
    rec.nodes_billed = sim.nodes_billed();
    rec.node_seconds_billed = sim.node_seconds_billed();
    rec.one_time_costs = sim.one_time_provision_events() + sim.one_time_pull_events();
    rec.repeated_costs = sim.repeated_provision_events() + sim.repeated_pull_events();

    if (event_lines) {
        for (const auto& log : eng.log()) {
            json j;
            j["mode"] = rec.mode;
            j["size"] = size;
            j["rep"] = rep;
            j["t"] = log.t;
            j["seq"] = log.seq;
            j["kind"] = to_string(log.kind);
            j["payload"] = log.payload;
            event_lines->push_back(j.dump());
        }
    }
    return rec;
}

inline SummaryRecord summarize(const std::string& scenario, const std::string& mode, int size,
                               const std::vector<MetricsRecord>& records) {
    SummaryRecord s;
    s.scenario = scenario;
    s.mode = mode;
    s.size = size;
    std::vector<double> creation, deletion, launcher, wall, node_seconds;
    for (const auto& r : records) {
        if (r.mode != mode || r.size != size) continue;
        ++s.reps;
        s.ranks = r.ranks;
        if (r.creation_time >= 0) creation.push_back(r.creation_time);
        if (r.deletion_time >= 0) deletion.push_back(r.deletion_time);
        if (r.launcher_time >= 0) launcher.push_back(r.launcher_time);
        if (r.wall_time >= 0) wall.push_back(r.wall_time);
        node_seconds.push_back(r.node_seconds_billed);
    }
    s.creation_mean = detail::mean_of(creation);
    s.creation_std = detail::stddev_of(creation);
    s.deletion_mean = detail::mean_of(deletion);
    s.deletion_std = detail::stddev_of(deletion);
    s.launcher_mean = detail::mean_of(launcher);
    s.launcher_std = detail::stddev_of(launcher);
    s.wall_mean = detail::mean_of(wall);
    s.wall_std = detail::stddev_of(wall);
    s.node_seconds_mean = detail::mean_of(node_seconds);
    s.node_seconds_std = detail::stddev_of(node_seconds);
    return s;
}

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
};

// Runs every (size, rep) pair of the scenario in its configured comparison
// mode. Sequential by design: logs and CSVs must be reproducible.
inline RunResult run_scenario(const Scenario& sc, RunOverrides overrides = {},
                              bool both_modes = false) {
    RunResult result;
    std::uint64_t base_seed = overrides.seed.value_or(sc.seed);
    int reps = overrides.reps.value_or(sc.reps);
    std::vector<int> sizes = sc.effective_sizes();
    std::vector<bool> modes;
    if (both_modes) {
        modes = {false, true};
    } else {
        modes = {sc.comparison_mode == ComparisonMode::external_launcher};
    }
    for (bool external : modes) {
        for (std::size_t si = 0; si < sizes.size(); ++si) {
            for (int rep = 0; rep < reps; ++rep) {
                std::uint64_t seed = derive_seed(base_seed, static_cast<int>(si), rep);
                result.records.push_back(run_one_rep(sc, sizes[si], external, rep, seed,
                                                     &result.event_lines));
            }
            result.summaries.push_back(summarize(
                sc.name, external ? "external_launcher" : "embedded_lead", sizes[si],
                result.records));
        }
    }
    return result;
}

// The launcher comparison: identical workload, N workers, with the
// coordinator either embedded (lead does work) or an extra node.
inline RunResult compare_topologies(const Scenario& sc, RunOverrides overrides = {}) {
    return run_scenario(sc, overrides, /*both_modes=*/true);
}

// ---- CSV ------------------------------------------------------------------

inline void write_metrics_csv(const std::vector<MetricsRecord>& records, std::ostream& os) {
    os << "scenario,mode,size,ranks,rep,seed,creation_time,deletion_time,launcher_time,"
          "wall_time,nodes_billed,node_seconds_billed,one_time_costs,repeated_costs\n";
    for (const auto& r : records) {
        os << r.scenario << ',' << r.mode << ',' << r.size << ',' << r.ranks << ',' << r.rep
           << ',' << r.seed << ',' << format_double(r.creation_time) << ','
           << format_double(r.deletion_time) << ',' << format_double(r.launcher_time) << ','
           << format_double(r.wall_time) << ',' << r.nodes_billed << ','
           << format_double(r.node_seconds_billed) << ',' << r.one_time_costs << ','
           << r.repeated_costs << '\n';
    }
}

inline void write_summary_csv(const std::vector<SummaryRecord>& summaries, std::ostream& os) {
    os << "scenario,mode,size,ranks,reps,creation_mean,creation_std,deletion_mean,deletion_std,"
          "launcher_mean,launcher_std,wall_mean,wall_std,node_seconds_mean,node_seconds_std\n";
    for (const auto& s : summaries) {
        os << s.scenario << ',' << s.mode << ',' << s.size << ',' << s.ranks << ',' << s.reps
           << ',' << format_double(s.creation_mean) << ',' << format_double(s.creation_std) << ','
           << format_double(s.deletion_mean) << ',' << format_double(s.deletion_std) << ','
           << format_double(s.launcher_mean) << ',' << format_double(s.launcher_std) << ','
           << format_double(s.wall_mean) << ',' << format_double(s.wall_std) << ','
           << format_double(s.node_seconds_mean) << ',' << format_double(s.node_seconds_std)
           << '\n';
    }
}

// ---- cost accounting --------------------------------------------------------

// Figure-style tally: node provisioning and image pulls, split into costs
// paid once for a static cluster vs. repeated by scale-ups.
struct CostReport {
    int one_time_provision = 0;
    int repeated_provision = 0;
    int one_time_pull = 0;
    int repeated_pull = 0;

    int one_time_total() const { return one_time_provision + one_time_pull; }
    int repeated_total() const { return repeated_provision + repeated_pull; }
};

inline CostReport cost_report(std::istream& event_log) {
    CostReport report;
    std::string line;
    while (std::getline(event_log, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        std::string kind = j.value("kind", "");
        if (kind != "pod_creating" && kind != "image_pull") continue;
        std::string cost = j["payload"].value("cost", "");
        bool one_time = cost == "one_time";
        if (kind == "pod_creating")
            (one_time ? report.one_time_provision : report.repeated_provision)++;
        else
            (one_time ? report.one_time_pull : report.repeated_pull)++;
    }
    return report;
}

inline void write_cost_report(const CostReport& r, std::ostream& os) {
    os << "cost_class,kind,count\n";
    os << "one_time,node_provision," << r.one_time_provision << '\n';
    os << "one_time,image_pull," << r.one_time_pull << '\n';
    os << "repeated,node_provision," << r.repeated_provision << '\n';
    os << "repeated,image_pull," << r.repeated_pull << '\n';
}

}  // namespace mcsim
