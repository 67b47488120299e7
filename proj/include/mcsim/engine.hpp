#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <ostream>
#include <queue>
#include <random>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcsim/core.hpp"

namespace mcsim {

using json = nlohmann::json;

enum class EventKind {
    reconcile,
    pod_creating,
    pod_created,
    pod_unschedulable,
    pod_terminating,
    pod_terminated,
    image_pull,
    node_crash,
    broker_connect_attempt,
    broker_connect_failed,
    broker_online,
    broker_down,
    secret_mismatch,
    cluster_full,
    job_submitted,
    job_started,
    job_finished,
    job_canceled,
    job_requeued,
    queue_paused,
    queue_resumed,
    archive_saved,
    archive_restored,
    resize_requested,
    resize_accepted,
    resize_rejected,
    scale_check,
    burst_check,
    burst_assigned,
    burst_unsatisfiable,
    burst_provisioning,
    burst_joined,
    burst_teardown,
    cluster_deleted,
    api_command,
    timer,
};

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::reconcile: return "reconcile";
        case EventKind::pod_creating: return "pod_creating";
        case EventKind::pod_created: return "pod_created";
        case EventKind::pod_unschedulable: return "pod_unschedulable";
        case EventKind::pod_terminating: return "pod_terminating";
        case EventKind::pod_terminated: return "pod_terminated";
        case EventKind::image_pull: return "image_pull";
        case EventKind::node_crash: return "node_crash";
        case EventKind::broker_connect_attempt: return "broker_connect_attempt";
        case EventKind::broker_connect_failed: return "broker_connect_failed";
        case EventKind::broker_online: return "broker_online";
        case EventKind::broker_down: return "broker_down";
        case EventKind::secret_mismatch: return "secret_mismatch";
        case EventKind::cluster_full: return "cluster_full";
        case EventKind::job_submitted: return "job_submitted";
        case EventKind::job_started: return "job_started";
        case EventKind::job_finished: return "job_finished";
        case EventKind::job_canceled: return "job_canceled";
        case EventKind::job_requeued: return "job_requeued";
        case EventKind::queue_paused: return "queue_paused";
        case EventKind::queue_resumed: return "queue_resumed";
        case EventKind::archive_saved: return "archive_saved";
        case EventKind::archive_restored: return "archive_restored";
        case EventKind::resize_requested: return "resize_requested";
        case EventKind::resize_accepted: return "resize_accepted";
        case EventKind::resize_rejected: return "resize_rejected";
        case EventKind::scale_check: return "scale_check";
        case EventKind::burst_check: return "burst_check";
        case EventKind::burst_assigned: return "burst_assigned";
        case EventKind::burst_unsatisfiable: return "burst_unsatisfiable";
        case EventKind::burst_provisioning: return "burst_provisioning";
        case EventKind::burst_joined: return "burst_joined";
        case EventKind::burst_teardown: return "burst_teardown";
        case EventKind::cluster_deleted: return "cluster_deleted";
        case EventKind::api_command: return "api_command";
        case EventKind::timer: return "timer";
    }
    return "?";
}

enum class Distribution { constant, uniform, normal_truncated };

// Stand-in for cloud variability. Sampling is done by the engine so that a
// single seeded generator drives the whole run.
struct LatencyModel {
    std::string name;
    double base = 0.0;
    double jitter = 0.0;
    Distribution distribution = Distribution::constant;

    static LatencyModel constant(double base, std::string name = "") {
        return LatencyModel{std::move(name), base, 0.0, Distribution::constant};
    }
};

struct LogRecord {
    SimTime t = 0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::timer;
    json payload;

    std::string to_line() const {
        json j;
        j["t"] = t;
        j["seq"] = seq;
        j["kind"] = to_string(kind);
        j["payload"] = payload;
        return j.dump();
    }
};

class PastDeadlineError : public std::logic_error {
  public:
    PastDeadlineError() : std::logic_error("past_deadline") {}
};

// Deterministic discrete-event core. Single-threaded: the loop owns all
// mutable simulation state. External threads may only post_command(); the
// loop drains those between events.
class SimEngine {
  public:
    using Ticket = std::uint64_t;
    using Action = std::function<void()>;
    static constexpr SimTime kNoDeadline = std::numeric_limits<SimTime>::infinity();

    explicit SimEngine(std::uint64_t seed) : rng_(seed), seed_(seed) {}

    SimTime now() const { return now_; }
    std::uint64_t seed() const { return seed_; }

    // Delivery order is (fire_at, sequence); sequence is assigned here, so
    // ties between equal timestamps resolve FIFO.
    Ticket schedule(SimTime fire_at, EventKind kind, json payload, Action action,
                    bool log_on_delivery = true) {
        if (fire_at < now_) throw PastDeadlineError();
        Ticket seq = next_seq_++;
        queue_.push(Scheduled{fire_at, seq, kind, std::move(payload), std::move(action),
                              log_on_delivery});
        ++pending_;
        return seq;
    }

    Ticket schedule_in(SimTime delay, EventKind kind, json payload, Action action,
                       bool log_on_delivery = true) {
        return schedule(now_ + delay, kind, std::move(payload), std::move(action),
                        log_on_delivery);
    }

    bool cancel(Ticket ticket) {
        if (ticket >= next_seq_) return false;
        auto [_, inserted] = canceled_.insert(ticket);
        return inserted;
    }

    // Appends a log-only record at the current clock; no delivery.
    void emit(EventKind kind, json payload) {
        log_.push_back(LogRecord{now_, next_seq_++, kind, std::move(payload)});
    }

    double sample(const LatencyModel& m) {
        double v = m.base;
        switch (m.distribution) {
            case Distribution::constant:
                break;
            case Distribution::uniform:
                v = m.base + (2.0 * rand_unit() - 1.0) * m.jitter;
                break;
            case Distribution::normal_truncated: {
                // Box-Muller; clamped at zero below.
                double u1 = rand_unit();
                double u2 = rand_unit();
                if (u1 < 1e-300) u1 = 1e-300;
                double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
                v = m.base + z * m.jitter;
                break;
            }
        }
        return v < 0.0 ? 0.0 : v;
    }

    std::uint64_t rand_u64() { return rng_(); }

    // Uniform in [0,1) with 53 bits; avoids stdlib distributions so traces
    // do not depend on the standard library implementation.
    double rand_unit() { return (rng_() >> 11) * 0x1.0p-53; }

    bool queue_empty() const { return pending_ == 0; }
    std::size_t pending_events() const { return pending_; }

    SimTime run_until_time(SimTime deadline) {
        return run([] { return false; }, deadline);
    }

    // Monotonic jump used by the interactive server: process everything due,
    // then move the clock even if the queue ran dry.
    SimTime advance_to(SimTime t) {
        run_until_time(t);
        if (t > now_) now_ = t;
        return now_;
    }

    SimTime run_until(const std::function<bool()>& predicate, SimTime deadline = kNoDeadline) {
        return run(predicate, deadline);
    }

    SimTime run_all(SimTime horizon = kNoDeadline) {
        return run([] { return false; }, horizon);
    }

    // Post-delivery hook, used by tests to assert invariants at every step.
    void set_observer(std::function<void(const LogRecord&)> fn) { observer_ = std::move(fn); }

    const std::vector<LogRecord>& log() const { return log_; }

    void write_log(std::ostream& os) const {
        for (const auto& rec : log_) os << rec.to_line() << '\n';
    }

    // Thread-safe bridge for external callers (tenancy API). Commands run on
    // the engine thread at event boundaries via drain_commands().
    void post_command(Action cmd) {
        std::lock_guard<std::mutex> lock(command_mutex_);
        commands_.push_back(std::move(cmd));
    }

    void drain_commands() {
        std::vector<Action> batch;
        {
            std::lock_guard<std::mutex> lock(command_mutex_);
            batch.swap(commands_);
        }
        for (auto& cmd : batch) cmd();
    }

  private:
    struct Scheduled {
        SimTime fire_at;
        Ticket seq;
        EventKind kind;
        json payload;
        Action action;
        bool log;
    };
    struct Later {
        bool operator()(const Scheduled& a, const Scheduled& b) const {
            if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
            return a.seq > b.seq;
        }
    };

    SimTime run(const std::function<bool()>& predicate, SimTime deadline) {
        if (predicate()) return now_;
        drain_commands();
        while (!queue_.empty()) {
            const Scheduled& top = queue_.top();
            if (top.fire_at > deadline) {
                if (deadline != kNoDeadline && deadline > now_) now_ = deadline;
                break;
            }
            if (canceled_.count(top.seq)) {
                canceled_.erase(top.seq);
                queue_.pop();
                --pending_;
                continue;
            }
            Scheduled ev = top;
            queue_.pop();
            --pending_;
            now_ = ev.fire_at;  // clock never decreases: fire_at >= now_ enforced at schedule
            if (ev.log) {
                log_.push_back(LogRecord{now_, ev.seq, ev.kind, ev.payload});
                if (observer_) observer_(log_.back());
            }
            if (ev.action) ev.action();
            drain_commands();
            if (predicate()) break;
        }
        return now_;
    }

    SimTime now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::size_t pending_ = 0;
    std::mt19937_64 rng_;
    std::uint64_t seed_;
    std::priority_queue<Scheduled, std::vector<Scheduled>, Later> queue_;
    std::unordered_set<Ticket> canceled_;
    std::vector<LogRecord> log_;
    std::function<void(const LogRecord&)> observer_;
    std::mutex command_mutex_;
    std::vector<Action> commands_;
};

}  // namespace mcsim
