#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcsim/core.hpp"

namespace mcsim {

enum class BrokerPhase { down, connecting, online, lost };

inline const char* to_string(BrokerPhase p) {
    switch (p) {
        case BrokerPhase::down: return "down";
        case BrokerPhase::connecting: return "connecting";
        case BrokerPhase::online: return "online";
        case BrokerPhase::lost: return "lost";
    }
    return "?";
}

// interval(n) = min(base * multiplier^n, cap), the exponential TCP-style
// backoff between connect attempts.
struct RetryPolicy {
    double base_interval = 0.1;
    double multiplier = 2.0;
    double cap = 30.0;
    int max_secret_attempts = 3;  // a mismatched secret stops retrying after this many

    double interval(int attempt) const {
        double v = base_interval * std::pow(multiplier, attempt);
        return v < cap ? v : cap;
    }
};

// Rooted tree of broker connections. fanout <= 0 means flat: every follower
// connects straight to rank 0.
struct Topology {
    int fanout = 0;

    std::optional<Rank> parent_of(Rank rank) const {
        if (rank <= 0) return std::nullopt;
        if (fanout <= 0) return 0;
        return (rank - 1) / fanout;
    }
};

struct BrokerState {
    Rank rank = 0;
    BrokerPhase phase = BrokerPhase::down;
    int retry_attempt = 0;
    SimTime next_retry_at = 0;
    std::optional<Rank> parent_rank;
    std::string secret;  // the secret this broker was handed, checked on admission
};

// Accepts both bare hostnames and burst-namespaced ones of the form
// "<namespace>/<hostname>".
inline std::optional<Rank> resolve_rank(std::string_view hostname, const ClusterConfig& config) {
    auto slash = hostname.rfind('/');
    if (slash != std::string_view::npos) hostname = hostname.substr(slash + 1);
    for (Rank r = 0; r < static_cast<Rank>(config.ranked_hosts.size()); ++r)
        if (config.ranked_hosts[r] == hostname) return r;
    return std::nullopt;
}

// Membership state machine for all ranks in [0, max_size). Engine-free: the
// cluster runtime schedules attempts and calls back in; this class only
// enforces the transition rules.
class BrokerOverlay {
  public:
    enum class Attempt { success, parent_unreachable, secret_mismatch, gave_up };

    BrokerOverlay() = default;
    BrokerOverlay(int max_size, ClusterConfig config, Topology topology, RetryPolicy policy)
        : config_(std::move(config)), topology_(topology), policy_(policy) {
        brokers_.resize(max_size);
        for (Rank r = 0; r < max_size; ++r) {
            brokers_[r].rank = r;
            brokers_[r].parent_rank = topology_.parent_of(r);
        }
    }

    const RetryPolicy& policy() const { return policy_; }
    const ClusterConfig& config() const { return config_; }
    const BrokerState& broker(Rank r) const { return brokers_.at(r); }
    int max_size() const { return static_cast<int>(brokers_.size()); }

    // Rank 0 listens; it never connects anywhere.
    void start_lead() {
        brokers_.at(0).phase = BrokerPhase::online;
        brokers_.at(0).secret = config_.secret;
    }

    void begin_bootstrap(Rank rank, std::string secret) {
        BrokerState& b = brokers_.at(rank);
        b.phase = BrokerPhase::connecting;
        b.retry_attempt = 0;
        b.secret = std::move(secret);
    }

    // One connect attempt: the parent must be online now and the secret must
    // match the lead's. Failed attempts advance the backoff schedule.
    Attempt attempt_connect(Rank rank, SimTime now) {
        BrokerState& b = brokers_.at(rank);
        Rank parent = b.parent_rank.value_or(0);
        if (brokers_.at(parent).phase != BrokerPhase::online) {
            b.next_retry_at = now + policy_.interval(b.retry_attempt);
            ++b.retry_attempt;
            return Attempt::parent_unreachable;
        }
        if (b.secret != config_.secret) {
            ++b.retry_attempt;
            if (b.retry_attempt >= policy_.max_secret_attempts) {
                b.phase = BrokerPhase::down;  // never admitted
                return Attempt::gave_up;
            }
            b.next_retry_at = now + policy_.interval(b.retry_attempt - 1);
            return Attempt::secret_mismatch;
        }
        return Attempt::success;
    }

    void mark_online(Rank rank) { brokers_.at(rank).phase = BrokerPhase::online; }

    void mark_lost(Rank rank) {
        BrokerState& b = brokers_.at(rank);
        if (b.phase == BrokerPhase::online || b.phase == BrokerPhase::connecting)
            b.phase = BrokerPhase::lost;
    }

    void mark_down(Rank rank) {
        BrokerState& b = brokers_.at(rank);
        b.phase = BrokerPhase::down;
        b.retry_attempt = 0;
    }

    bool online(Rank rank) const { return brokers_.at(rank).phase == BrokerPhase::online; }

    // The lead's view: every configured rank, online or not.
    std::map<Rank, BrokerPhase> membership() const {
        std::map<Rank, BrokerPhase> view;
        for (const auto& b : brokers_) view[b.rank] = b.phase;
        return view;
    }

    std::vector<Rank> online_ranks() const {
        std::vector<Rank> ranks;
        for (const auto& b : brokers_)
            if (b.phase == BrokerPhase::online) ranks.push_back(b.rank);
        return ranks;
    }

  private:
    std::vector<BrokerState> brokers_;
    ClusterConfig config_;
    Topology topology_;
    RetryPolicy policy_;
};

}  // namespace mcsim
