#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcsim/cluster.hpp"
#include "mcsim/core.hpp"

namespace mcsim {

struct ScenarioJob {
    SimTime submit_at = 0;
    JobSpec spec;
};

struct ScenarioResize {
    SimTime at = 0;
    int size = 0;
};

struct ScenarioCrash {
    SimTime at = 0;
    int index = 0;
};

struct PluginConfig {
    std::string type;  // "mock" or "local"
    std::string name;
    int capacity = 0;
    ResourceShape shape;
    LatencyModel provision_latency = LatencyModel::constant(30.0, "provision");
    bool wrong_secret = false;
};

enum class ComparisonMode { embedded_lead, external_launcher };

// One experiment description: cluster, workload, fault and resize schedule,
// policies and repetition count. The file format is documented in the README.
struct Scenario {
    std::string name;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int reps = 1;
    double horizon = 100000.0;
    std::vector<int> sizes;  // sweep; empty = just minicluster.size

    std::vector<NodeSpec> catalog;
    MiniClusterSpec minicluster;
    std::optional<JobSpec> entry_job;  // nodes defaults to the swept size

    RetryPolicy retry;
    Topology topology;
    JobQueue::Options scheduler;
    std::optional<ScalePolicy> scale_policy;

    bool anti_affinity = true;
    int batch_width = 0;
    double lead_delay = 0.0;
    ComparisonMode comparison_mode = ComparisonMode::embedded_lead;

    LatencyModel pod_create = LatencyModel::constant(2.0, "pod_create");
    LatencyModel pod_terminate = LatencyModel::constant(1.0, "pod_terminate");
    LatencyModel connect = LatencyModel::constant(0.05, "connect");
    LatencyModel image_pull = LatencyModel::constant(10.0, "image_pull");
    bool image_pull_enabled = false;
    ImagePullPolicy image_pull_policy = ImagePullPolicy::cached;

    std::vector<ScenarioJob> jobs;
    std::vector<ScenarioResize> resizes;
    std::vector<ScenarioCrash> crashes;
    std::vector<PluginConfig> plugins;

    std::vector<int> effective_sizes() const {
        return sizes.empty() ? std::vector<int>{minicluster.size} : sizes;
    }
};

class ScenarioError : public std::runtime_error {
  public:
    explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline int line_of_offset(const std::string& text, std::size_t byte) {
    int line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

inline ResourceShape parse_shape(const json& j) {
    ResourceShape s;
    s.sockets = j.value("sockets", 1);
    s.cores_per_socket = j.value("cores_per_socket", 1);
    s.memory_mb = j.value("memory_mb", 1);
    return s;
}

inline LatencyModel parse_latency(const json& j, const std::string& name) {
    LatencyModel m;
    m.name = name;
    m.base = j.value("base", 0.0);
    m.jitter = j.value("jitter", 0.0);
    std::string d = j.value("distribution", "constant");
    if (d == "constant")
        m.distribution = Distribution::constant;
    else if (d == "uniform")
        m.distribution = Distribution::uniform;
    else if (d == "normal")
        m.distribution = Distribution::normal_truncated;
    else
        throw ScenarioError("unknown latency distribution '" + d + "' for " + name);
    return m;
}

inline JobSpec parse_job_spec(const json& j) {
    JobSpec s;
    s.user = j.value("user", "default");
    s.nodes = j.value("nodes", 1);
    s.tasks_per_node = j.value("tasks_per_node", 1);
    s.work_units = j.value("work_units", 1.0);
    s.serial_fraction = j.value("serial_fraction", 0.0);
    s.burstable = j.value("burstable", false);
    return s;
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError("parse error at line " +
                            std::to_string(detail::line_of_offset(text, e.byte)) + ": " +
                            e.what());
    }

    Scenario sc;
    sc.name = root.value("name", "scenario");
    if (root.contains("seed")) {
        sc.seed = root["seed"].get<std::uint64_t>();
        sc.seed_set = true;
    }
    sc.reps = root.value("reps", 1);
    sc.horizon = root.value("horizon", 100000.0);
    if (root.contains("sizes")) sc.sizes = root["sizes"].get<std::vector<int>>();

    if (root.contains("nodes")) {
        const json& nodes = root["nodes"];
        if (nodes.is_array()) {
            int id = 0;
            for (const auto& n : nodes) {
                NodeSpec node;
                node.node_id = n.value("node_id", id);
                node.hostname = n.value("hostname", "node-" + std::to_string(id));
                node.shape = detail::parse_shape(n);
                sc.catalog.push_back(node);
                ++id;
            }
        } else {
            int count = nodes.value("count", 1);
            ResourceShape shape = detail::parse_shape(nodes);
            for (int i = 0; i < count; ++i)
                sc.catalog.push_back({i, "node-" + std::to_string(i), shape});
        }
    }

    if (root.contains("minicluster")) {
        const json& mc = root["minicluster"];
        sc.minicluster.name = mc.value("name", "mc");
        sc.minicluster.size = mc.value("size", 1);
        sc.minicluster.max_size = mc.value("max_size", sc.minicluster.size);
        if (mc.contains("pod_resources"))
            sc.minicluster.pod_resources = detail::parse_shape(mc["pod_resources"]);
        else if (!sc.catalog.empty())
            sc.minicluster.pod_resources = sc.catalog.front().shape;
        sc.minicluster.entry_command = mc.value("entry_command", "");
        sc.minicluster.interactive = mc.value("interactive", false);
        std::string mode = mc.value("auth_mode", "single_user");
        if (mode == "single_user")
            sc.minicluster.auth_mode = AuthMode::single_user;
        else if (mode == "multi_user")
            sc.minicluster.auth_mode = AuthMode::multi_user;
        else
            throw ScenarioError("unknown auth_mode '" + mode + "'");
        sc.minicluster.lead_port = mc.value("lead_port", 8050);
        if (mc.contains("users"))
            for (const auto& u : mc["users"])
                sc.minicluster.users.push_back(UserCredential::make(
                    u.at("username").get<std::string>(), u.value("password", "")));
    }

    if (root.contains("entry_job")) sc.entry_job = detail::parse_job_spec(root["entry_job"]);

    if (root.contains("retry")) {
        const json& r = root["retry"];
        sc.retry.base_interval = r.value("base_interval", 0.1);
        sc.retry.multiplier = r.value("multiplier", 2.0);
        sc.retry.cap = r.value("cap", 30.0);
        sc.retry.max_secret_attempts = r.value("max_secret_attempts", 3);
    }
    if (root.contains("topology")) sc.topology.fanout = root["topology"].value("fanout", 0);
    if (root.contains("scheduler")) {
        const json& s = root["scheduler"];
        sc.scheduler.alpha_per_hop = s.value("alpha_per_hop", 0.0);
        sc.scheduler.fair_share_half_life = s.value("fair_share_half_life", 1000.0);
        sc.scheduler.requeue_on_rank_loss = s.value("requeue_on_rank_loss", true);
    }
    if (root.contains("scale_policy")) {
        const json& p = root["scale_policy"];
        ScalePolicy policy;
        policy.enabled = p.value("enabled", true);
        std::string mode = p.value("mode", "queue_depth");
        if (mode == "utilization")
            policy.mode = ScaleMode::utilization;
        else if (mode == "queue_depth")
            policy.mode = ScaleMode::queue_depth;
        else
            throw ScenarioError("unknown scale mode '" + mode + "'");
        policy.target = p.value("target", 1.0);
        policy.tolerance = p.value("tolerance", 0.10);
        policy.check_interval = p.value("check_interval", 15.0);
        policy.stabilization_window = p.value("stabilization_window", 60.0);
        sc.scale_policy = policy;
    }

    sc.anti_affinity = root.value("anti_affinity", true);
    sc.batch_width = root.value("batch_width", 0);
    sc.lead_delay = root.value("lead_delay", 0.0);
    std::string cmp = root.value("comparison_mode", "embedded_lead");
    if (cmp == "embedded_lead")
        sc.comparison_mode = ComparisonMode::embedded_lead;
    else if (cmp == "external_launcher")
        sc.comparison_mode = ComparisonMode::external_launcher;
    else
        throw ScenarioError("unknown comparison_mode '" + cmp + "'");

    if (root.contains("latencies")) {
        const json& lat = root["latencies"];
        if (lat.contains("pod_create"))
            sc.pod_create = detail::parse_latency(lat["pod_create"], "pod_create");
        if (lat.contains("pod_terminate"))
            sc.pod_terminate = detail::parse_latency(lat["pod_terminate"], "pod_terminate");
        if (lat.contains("connect")) sc.connect = detail::parse_latency(lat["connect"], "connect");
        if (lat.contains("image_pull"))
            sc.image_pull = detail::parse_latency(lat["image_pull"], "image_pull");
    }
    if (root.contains("image_pull")) {
        const json& p = root["image_pull"];
        sc.image_pull_enabled = p.value("enabled", false);
        std::string policy = p.value("policy", "cached");
        if (policy == "cached")
            sc.image_pull_policy = ImagePullPolicy::cached;
        else if (policy == "always")
            sc.image_pull_policy = ImagePullPolicy::always;
        else
            throw ScenarioError("unknown image pull policy '" + policy + "'");
    }

    if (root.contains("jobs"))
        for (const auto& j : root["jobs"])
            sc.jobs.push_back({j.value("submit_at", 0.0), detail::parse_job_spec(j)});
    if (root.contains("resizes"))
        for (const auto& r : root["resizes"])
            sc.resizes.push_back({r.value("at", 0.0), r.value("size", 0)});
    if (root.contains("crashes"))
        for (const auto& c : root["crashes"])
            sc.crashes.push_back({c.value("at", 0.0), c.value("index", 0)});
    if (root.contains("plugins")) {
        for (const auto& p : root["plugins"]) {
            PluginConfig cfg;
            cfg.type = p.value("type", "mock");
            cfg.name = p.value("name", cfg.type);
            cfg.capacity = p.value("capacity", 0);
            cfg.shape = p.contains("shape") ? detail::parse_shape(p["shape"])
                                            : sc.minicluster.pod_resources;
            if (p.contains("provision_latency"))
                cfg.provision_latency =
                    detail::parse_latency(p["provision_latency"], cfg.name + "_provision");
            cfg.wrong_secret = p.value("wrong_secret", false);
            sc.plugins.push_back(cfg);
        }
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

// Cross-reference and bounds checks; returns human-readable problems.
inline std::vector<std::string> validate_scenario(const Scenario& sc) {
    std::vector<std::string> errors;
    if (!sc.seed_set) errors.push_back("seed is mandatory");
    if (sc.reps < 1) errors.push_back("reps must be >= 1");
    if (sc.catalog.empty()) errors.push_back("node catalog is empty");
    for (auto e : validate_spec(sc.minicluster))
        errors.push_back(std::string("minicluster: ") + to_string(e));
    for (int size : sc.effective_sizes())
        if (size < 1 || size > sc.minicluster.max_size)
            errors.push_back("swept size " + std::to_string(size) + " outside [1, max_size]");
    for (const auto& job : sc.jobs) {
        if (!job.spec.valid())
            errors.push_back("job with user '" + job.spec.user + "' has an invalid spec");
        if (!sc.minicluster.users.empty()) {
            bool known = false;
            for (const auto& u : sc.minicluster.users)
                if (u.username == job.spec.user) known = true;
            if (!known) errors.push_back("job user '" + job.spec.user + "' is not configured");
        }
    }
    for (const auto& r : sc.resizes)
        if (r.size < 1 || r.size > sc.minicluster.max_size)
            errors.push_back("scheduled resize to " + std::to_string(r.size) +
                             " outside [1, max_size]");
    for (std::size_t i = 0; i < sc.plugins.size(); ++i) {
        if (sc.plugins[i].type != "mock" && sc.plugins[i].type != "local")
            errors.push_back("unknown plugin type '" + sc.plugins[i].type + "'");
        for (std::size_t k = i + 1; k < sc.plugins.size(); ++k)
            if (sc.plugins[i].name == sc.plugins[k].name)
                errors.push_back("duplicate plugin name '" + sc.plugins[i].name + "'");
    }
    return errors;
}

}  // namespace mcsim
