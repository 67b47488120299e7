#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mcsim/core.hpp"
#include "mcsim/engine.hpp"

namespace mcsim {

// Externally reachable address of the primary lead broker; remote followers
// bootstrap against it. Stable for the life of the MiniCluster.
struct LeadAdvertisement {
    std::string address;
    int port = 8050;
};

struct RemoteCluster {
    int burst_id = 0;
    std::string plugin;
    Rank base_rank = 0;
    int count = 0;
    enum class State { provisioning, joined, torn_down };
    State state = State::provisioning;
    std::vector<std::string> hostnames;  // namespaced: burst-<k>/<name>-<rank>
    ResourceShape shape;
    std::string secret;
    std::set<JobId> assigned_jobs;

    bool live() const { return state != State::torn_down; }
    bool holds(Rank r) const { return r >= base_rank && r < base_rank + count; }
};

struct ProvisionPlan {
    ResourceShape shape;
    LatencyModel latency;   // time until the remote brokers start
    std::string secret;     // what the remote brokers will present on admission
};

// Each plugin decides satisfiability by its own custom terms and owns its
// remote inventory. provision() receives the shared configuration and the
// advertised lead address the remote brokers will dial.
class BurstPlugin {
  public:
    virtual ~BurstPlugin() = default;
    virtual const std::string& name() const = 0;
    virtual bool is_satisfiable(const JobSpec& job, int needed_nodes) const = 0;
    virtual ProvisionPlan provision(int needed_nodes, const ClusterConfig& config,
                                    const LeadAdvertisement& lead) = 0;
    virtual void teardown_remote(int node_count) = 0;
};

// Configurable capacity and provisioning latency; stands in for the cloud
// provider plugins.
class MockBurstPlugin : public BurstPlugin {
  public:
    struct Config {
        std::string name = "mock";
        int capacity = 0;  // max concurrently provisioned remote nodes
        ResourceShape shape;
        LatencyModel provision_latency = LatencyModel::constant(30.0, "mock_provision");
        std::string secret_override;  // nonempty: present this instead of the real secret
        std::string real_secret;
    };

    explicit MockBurstPlugin(Config cfg) : cfg_(std::move(cfg)) {}

    const std::string& name() const override { return cfg_.name; }

    bool is_satisfiable(const JobSpec& job, int needed_nodes) const override {
        if (job.tasks_per_node > cfg_.shape.total_cores()) return false;
        return needed_nodes <= cfg_.capacity - in_use_;
    }

    ProvisionPlan provision(int needed_nodes, const ClusterConfig&,
                            const LeadAdvertisement&) override {
        in_use_ += needed_nodes;
        return {cfg_.shape, cfg_.provision_latency,
                cfg_.secret_override.empty() ? cfg_.real_secret : cfg_.secret_override};
    }

    void teardown_remote(int node_count) override { in_use_ -= node_count; }

    int in_use() const { return in_use_; }

  private:
    Config cfg_;
    int in_use_ = 0;
};

// Steals whole nodes from a reserve pool on the same site; cheap to
// provision compared to a remote cloud.
class LocalBurstPlugin : public BurstPlugin {
  public:
    struct Config {
        std::string name = "local";
        int reserve_nodes = 0;
        ResourceShape shape;
        LatencyModel provision_latency = LatencyModel::constant(5.0, "local_provision");
        std::string real_secret;
    };

    explicit LocalBurstPlugin(Config cfg) : cfg_(std::move(cfg)) {}

    const std::string& name() const override { return cfg_.name; }

    bool is_satisfiable(const JobSpec& job, int needed_nodes) const override {
        if (job.tasks_per_node > cfg_.shape.total_cores()) return false;
        return needed_nodes <= cfg_.reserve_nodes - in_use_;
    }

    ProvisionPlan provision(int needed_nodes, const ClusterConfig&,
                            const LeadAdvertisement&) override {
        in_use_ += needed_nodes;
        return {cfg_.shape, cfg_.provision_latency, cfg_.real_secret};
    }

    void teardown_remote(int node_count) override { in_use_ -= node_count; }

  private:
    Config cfg_;
    int in_use_ = 0;
};

enum class BurstError { no_plugin_satisfiable, insufficient_phantom_ranks };
enum class TeardownError { busy_ranks, already_torn_down, unknown };

// Registry of plugins and live remote clusters plus rank-range bookkeeping.
// The cluster runtime drives the actual provisioning events.
class BurstManager {
  public:
    // Default selector: first registered plugin that answers satisfiable.
    using Selector = std::function<BurstPlugin*(const JobSpec&, int needed,
                                                const std::vector<BurstPlugin*>&)>;

    void register_plugin(std::unique_ptr<BurstPlugin> plugin) {
        plugins_.push_back(std::move(plugin));
    }

    void set_selector(Selector s) { selector_ = std::move(s); }

    bool empty() const { return plugins_.empty(); }

    BurstPlugin* select_plugin(const JobSpec& job, int needed_nodes) {
        std::vector<BurstPlugin*> view;
        view.reserve(plugins_.size());
        for (auto& p : plugins_) view.push_back(p.get());
        if (selector_) return selector_(job, needed_nodes, view);
        for (BurstPlugin* p : view)
            if (p->is_satisfiable(job, needed_nodes)) return p;
        return nullptr;
    }

    // First contiguous gap of `count` ranks within [size, max_size) that no
    // live remote cluster holds.
    std::optional<Rank> allocate_base_rank(int count, int size, int max_size) const {
        for (Rank base = size; base + count <= max_size; ++base) {
            bool free = true;
            for (const auto& [id, rc] : remotes_) {
                if (!rc.live()) continue;
                if (base < rc.base_rank + rc.count && rc.base_rank < base + count) {
                    free = false;
                    base = rc.base_rank + rc.count - 1;  // skip past this remote
                    break;
                }
            }
            if (free) return base;
        }
        return std::nullopt;
    }

    RemoteCluster& create_remote(const std::string& plugin, Rank base, int count,
                                 const std::string& cluster_name, const ProvisionPlan& plan) {
        RemoteCluster rc;
        rc.burst_id = next_burst_id_++;
        rc.plugin = plugin;
        rc.base_rank = base;
        rc.count = count;
        rc.shape = plan.shape;
        rc.secret = plan.secret;
        for (Rank r = base; r < base + count; ++r)
            rc.hostnames.push_back("burst-" + std::to_string(rc.burst_id) + "/" +
                                   hostname_for_rank(cluster_name, r));
        int id = rc.burst_id;
        remotes_[id] = std::move(rc);
        return remotes_[id];
    }

    RemoteCluster* find(int burst_id) {
        auto it = remotes_.find(burst_id);
        return it == remotes_.end() ? nullptr : &it->second;
    }

    const std::map<int, RemoteCluster>& remotes() const { return remotes_; }
    std::map<int, RemoteCluster>& remotes_mut() { return remotes_; }

    // true while any live remote holds the rank; used to keep local pods off
    // remote ranks.
    bool rank_reserved(Rank r) const {
        for (const auto& [id, rc] : remotes_)
            if (rc.live() && rc.holds(r)) return true;
        return false;
    }

    std::set<Rank> reserved_ranks() const {
        std::set<Rank> out;
        for (const auto& [id, rc] : remotes_)
            if (rc.live())
                for (Rank r = rc.base_rank; r < rc.base_rank + rc.count; ++r) out.insert(r);
        return out;
    }

    // Marks the remote gone and returns inventory to the plugin, exactly
    // once. Rank-busy checks happen in the cluster runtime before this.
    std::optional<TeardownError> teardown(int burst_id) {
        auto it = remotes_.find(burst_id);
        if (it == remotes_.end()) return TeardownError::unknown;
        if (it->second.state == RemoteCluster::State::torn_down)
            return TeardownError::already_torn_down;
        it->second.state = RemoteCluster::State::torn_down;
        for (auto& p : plugins_)
            if (p->name() == it->second.plugin) p->teardown_remote(it->second.count);
        return std::nullopt;
    }

  private:
    std::vector<std::unique_ptr<BurstPlugin>> plugins_;
    std::map<int, RemoteCluster> remotes_;
    Selector selector_;
    int next_burst_id_ = 1;
};

}  // namespace mcsim
