#pragma once

#include <cmath>
#include <deque>
#include <optional>

#include "mcsim/core.hpp"

namespace mcsim {

enum class ScaleMode { utilization, queue_depth };

struct ScalePolicy {
    bool enabled = true;
    ScaleMode mode = ScaleMode::queue_depth;
    double target = 1.0;       // target utilization fraction, or pending node demand per node
    double tolerance = 0.10;   // no-op band around target
    double check_interval = 15.0;
    double stabilization_window = 60.0;  // downscale delay
    int min_size = 1;
    int max_size = 1;
};

struct MetricSample {
    SimTime at = 0;
    double current_utilization = 0;
    int pending_node_demand = 0;  // sum of nodes requested by pending jobs
    int queue_length = 0;
};

// The standard ratio rule: ceil(current * metric / target), clamped, with a
// dead band of `tolerance` around metric == target. The band comparison
// carries an epsilon so a ratio of exactly 1 + tolerance stays inside it.
inline int desired_replicas(int current, double metric, double target, double tolerance,
                            int min_size, int max_size) {
    double ratio = metric / target;
    if (std::abs(ratio - 1.0) <= tolerance + 1e-9) return current;
    int desired = static_cast<int>(std::ceil(static_cast<double>(current) * ratio));
    if (desired < min_size) desired = min_size;
    if (desired > max_size) desired = max_size;
    return desired;
}

// Periodic scale decisions. Upscales apply immediately; a downscale is
// issued only when every recommendation across the stabilization window
// stayed below the current size, and then only to the largest of them.
class Autoscaler {
  public:
    explicit Autoscaler(ScalePolicy policy) : policy_(policy) {}

    const ScalePolicy& policy() const { return policy_; }

    double metric_of(const MetricSample& sample, int current) const {
        if (policy_.mode == ScaleMode::utilization) return sample.current_utilization;
        return current > 0 ? static_cast<double>(sample.pending_node_demand) / current : 0.0;
    }

    // Returns the resize to request, if any.
    std::optional<int> decide(const MetricSample& sample, int current) {
        if (!policy_.enabled) return std::nullopt;
        double metric = metric_of(sample, current);
        int desired = desired_replicas(current, metric, policy_.target, policy_.tolerance,
                                       policy_.min_size, policy_.max_size);
        history_.push_back({sample.at, desired});
        SimTime cutoff = sample.at - policy_.stabilization_window;
        while (!history_.empty() && history_.front().at < cutoff) history_.pop_front();

        if (desired > current) {
            history_.clear();
            return desired;
        }
        if (desired >= current) return std::nullopt;

        // Downscale: need a full window of agreement.
        if (history_.front().at > cutoff + policy_.check_interval) return std::nullopt;
        int target = desired;
        for (const auto& d : history_) {
            if (d.desired >= current) return std::nullopt;
            target = std::max(target, d.desired);
        }
        history_.clear();
        return target;
    }

  private:
    struct Decision {
        SimTime at;
        int desired;
    };
    ScalePolicy policy_;
    std::deque<Decision> history_;
};

}  // namespace mcsim
