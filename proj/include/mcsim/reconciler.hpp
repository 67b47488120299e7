#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "mcsim/core.hpp"

namespace mcsim {

enum class PodPhase { pending, creating, running, terminating, gone };

inline const char* to_string(PodPhase p) {
    switch (p) {
        case PodPhase::pending: return "pending";
        case PodPhase::creating: return "creating";
        case PodPhase::running: return "running";
        case PodPhase::terminating: return "terminating";
        case PodPhase::gone: return "gone";
    }
    return "?";
}

// Kubernetes-side view of one indexed pod.
struct PodInstance {
    int index = 0;
    std::optional<int> node_id;
    PodPhase phase = PodPhase::pending;
    SimTime created_at = -1;
    SimTime ready_at = -1;
};

struct DesiredState {
    MiniClusterSpec spec;
    std::uint64_t generation = 1;  // strictly increasing, bumped per accepted change
};

struct ReconcileAction {
    enum class Kind { create, terminate };
    Kind kind;
    int index;

    bool operator==(const ReconcileAction&) const = default;
};

// Pure planner for one reconciliation round.
//
// Creates are emitted ascending for missing indices below the desired size,
// capped so that at most batch_width pods are in the creating phase at once
// (batch_width <= 0 means unlimited). Terminates are emitted descending for
// indices at or above the desired size. Index 0 is never terminated here;
// deleting the whole MiniCluster is a separate path.
//
// `reserved` indices belong to live bursted clusters: the planner leaves
// them alone in both directions so local pods never collide with remote
// ranks.
inline std::vector<ReconcileAction> reconcile(const std::map<int, PodInstance>& observed,
                                              const DesiredState& desired, int batch_width = 0,
                                              const std::set<int>& reserved = {}) {
    std::vector<ReconcileAction> actions;
    const int size = desired.spec.size;

    int creating = 0;
    for (const auto& [index, pod] : observed)
        if (pod.phase == PodPhase::creating) ++creating;

    int budget = batch_width <= 0 ? desired.spec.max_size : batch_width - creating;
    for (int i = 0; i < size && budget > 0; ++i) {
        if (reserved.count(i)) continue;
        auto it = observed.find(i);
        if (it == observed.end() || it->second.phase == PodPhase::gone) {
            actions.push_back({ReconcileAction::Kind::create, i});
            --budget;
        }
    }

    std::vector<int> excess;
    for (const auto& [index, pod] : observed) {
        if (index < size || index == 0) continue;
        if (reserved.count(index)) continue;
        if (pod.phase == PodPhase::gone || pod.phase == PodPhase::terminating) continue;
        excess.push_back(index);
    }
    std::sort(excess.rbegin(), excess.rend());  // larger indices terminated first
    for (int i : excess) actions.push_back({ReconcileAction::Kind::terminate, i});

    return actions;
}

enum class ResizeError { size_out_of_bounds };

struct ResizeOutcome {
    bool accepted = false;
    std::optional<ResizeError> error;
    std::uint64_t generation = 0;
};

// Single validation path for users, applications and the autoscaler.
inline ResizeOutcome request_resize(DesiredState& desired, int new_size) {
    if (new_size < 1 || new_size > desired.spec.max_size)
        return {false, ResizeError::size_out_of_bounds, desired.generation};
    if (new_size != desired.spec.size) {
        desired.spec.size = new_size;
        ++desired.generation;
    }
    return {true, std::nullopt, desired.generation};
}

// With anti-affinity on, picks the lowest-id node hosting no pod of this
// MiniCluster; with it off, the least-loaded node (lowest id on ties), which
// permits co-location and with it the whole-host double discovery hazard.
inline std::optional<int> assign_node(const std::vector<NodeSpec>& catalog,
                                      const std::map<int, int>& pods_per_node,
                                      bool anti_affinity) {
    std::optional<int> best;
    int best_load = 0;
    for (const auto& node : catalog) {
        auto it = pods_per_node.find(node.node_id);
        int load = it == pods_per_node.end() ? 0 : it->second;
        if (anti_affinity) {
            if (load == 0) return node.node_id;
        } else if (!best || load < best_load) {
            best = node.node_id;
            best_load = load;
        }
    }
    return anti_affinity ? std::nullopt : best;
}

// Whole-host discovery: a pod reports the full shape of its node no matter
// how many pods share it.
inline ResourceShape discover_resources(const PodInstance& pod,
                                        const std::vector<NodeSpec>& catalog) {
    if (!pod.node_id) throw std::logic_error("discover_resources: pod not assigned to a node");
    for (const auto& node : catalog)
        if (node.node_id == *pod.node_id) return node.shape;
    throw std::logic_error("discover_resources: node not in catalog");
}

}  // namespace mcsim
