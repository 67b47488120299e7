#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcsim/util.hpp"

namespace mcsim {

using SimTime = double;  // simulated seconds
using JobId = std::uint64_t;
using Rank = int;

// Socket/core hierarchy of one host. Kubernetes hands out whole hosts in
// this model, the scheduler accounts cores per socket underneath.
struct ResourceShape {
    int sockets = 1;
    int cores_per_socket = 1;
    long memory_mb = 1;

    int total_cores() const { return sockets * cores_per_socket; }
    bool valid() const { return sockets >= 1 && cores_per_socket >= 1 && memory_mb >= 1; }

    bool operator==(const ResourceShape&) const = default;
};

struct NodeSpec {
    int node_id = 0;
    std::string hostname;
    ResourceShape shape;
};

enum class AuthMode { single_user, multi_user };

struct UserCredential {
    std::string username;
    std::string salt;
    std::string password_hash;  // hash_password(password, salt)

    static UserCredential make(std::string username, std::string_view password,
                               std::string salt = "mc") {
        UserCredential c;
        c.username = std::move(username);
        c.salt = std::move(salt);
        c.password_hash = hash_password(password, c.salt);
        return c;
    }
    bool check(std::string_view password) const {
        return hash_password(password, salt) == password_hash;
    }
};

// Declarative desired state of one MiniCluster.
struct MiniClusterSpec {
    std::string name;
    int size = 1;
    int max_size = 1;
    ResourceShape pod_resources;
    std::string entry_command;
    bool interactive = false;
    AuthMode auth_mode = AuthMode::single_user;
    std::vector<UserCredential> users;
    int lead_port = 8050;
};

enum class SpecError { size_out_of_bounds, empty_name, missing_users };

inline const char* to_string(SpecError e) {
    switch (e) {
        case SpecError::size_out_of_bounds: return "size_out_of_bounds";
        case SpecError::empty_name: return "empty_name";
        case SpecError::missing_users: return "missing_users";
    }
    return "?";
}

// Every violated invariant is reported, not just the first.
inline std::vector<SpecError> validate_spec(const MiniClusterSpec& spec) {
    std::vector<SpecError> errors;
    if (spec.size < 1 || spec.size > spec.max_size)
        errors.push_back(SpecError::size_out_of_bounds);
    if (spec.name.empty())
        errors.push_back(SpecError::empty_name);
    if (spec.auth_mode == AuthMode::multi_user && spec.users.empty())
        errors.push_back(SpecError::missing_users);
    return errors;
}

inline std::string hostname_for_rank(const std::string& cluster_name, Rank rank) {
    return cluster_name + "-" + std::to_string(rank);
}

// Read-only configuration distributed to every broker. The host list always
// has max_size entries; hosts beyond the live size back ranks that appear
// "down" until a pod (local or bursted) claims them.
struct ClusterConfig {
    std::vector<std::string> ranked_hosts;
    std::string secret;
    int lead_port = 8050;
    std::string entry_command;
};

inline ClusterConfig make_cluster_config(const MiniClusterSpec& spec, std::string secret) {
    ClusterConfig cfg;
    cfg.ranked_hosts.reserve(spec.max_size);
    for (Rank r = 0; r < spec.max_size; ++r)
        cfg.ranked_hosts.push_back(hostname_for_rank(spec.name, r));
    cfg.secret = std::move(secret);
    cfg.lead_port = spec.lead_port;
    cfg.entry_command = spec.entry_command;
    return cfg;
}

// One unit of work: whole nodes x tasks per node, with an Amdahl-style
// duration model parameterized by (work_units, serial_fraction).
struct JobSpec {
    JobId job_id = 0;
    std::string user;
    int nodes = 1;
    int tasks_per_node = 1;
    double work_units = 1.0;
    double serial_fraction = 0.0;
    bool burstable = false;

    int total_ranks() const { return nodes * tasks_per_node; }
    bool valid() const {
        return nodes >= 1 && tasks_per_node >= 1 && work_units > 0.0 &&
               serial_fraction >= 0.0 && serial_fraction <= 1.0;
    }
    bool operator==(const JobSpec&) const = default;
};

enum class JobState { pending, running, paused, completed, canceled };

inline const char* to_string(JobState s) {
    switch (s) {
        case JobState::pending: return "pending";
        case JobState::running: return "running";
        case JobState::paused: return "paused";
        case JobState::completed: return "completed";
        case JobState::canceled: return "canceled";
    }
    return "?";
}

// One granted slot: a socket share of a node claimed through a rank.
struct AllocSlot {
    Rank rank = -1;
    int node_id = -1;
    int socket = 0;
    int cores = 0;

    bool operator==(const AllocSlot&) const = default;
};

struct JobRecord {
    JobSpec spec;
    JobState state = JobState::pending;
    SimTime submit_time = 0;
    SimTime start_time = -1;
    SimTime end_time = -1;
    std::vector<AllocSlot> allocation;   // nonempty iff running or paused
    double remaining_fraction = 1.0;     // share of work_units still to do
    int instance = 0;                    // owning (sub-)instance

    // Bookkeeping for the current running segment; progress is linear in
    // elapsed time, so pausing at t settles (t - segment_start)/segment_wall.
    SimTime segment_start = -1;
    double segment_wall = 0;
};

// Queue state frozen for transfer to a differently sized cluster.
struct ArchiveSnapshot {
    SimTime saved_at = 0;
    std::vector<JobRecord> jobs;  // pending/paused/running only
    JobId next_job_id = 1;
};

}  // namespace mcsim
