#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcsim/core.hpp"

namespace mcsim {

// T(R, N) = sf*T1 + (1-sf)*T1/R + alpha*log2(N). Strong scaling in the rank
// count R with a per-hop coordination penalty in the node count N.
inline double wall_time_model(const JobSpec& spec, int total_ranks, int node_count,
                              double alpha_per_hop) {
    double t1 = spec.work_units;
    double sf = spec.serial_fraction;
    double wall = sf * t1 + (1.0 - sf) * t1 / static_cast<double>(total_ranks);
    if (node_count > 1) wall += alpha_per_hop * std::log2(static_cast<double>(node_count));
    return wall;
}

// Decayed per-user usage in node-seconds; priority = weight / (1 + usage).
class FairShareLedger {
  public:
    explicit FairShareLedger(double half_life_seconds = 1000.0) : half_life_(half_life_seconds) {}

    void register_user(const std::string& user, double weight = 1.0) {
        users_.try_emplace(user, Entry{weight, 0.0, 0.0});
    }

    bool known(const std::string& user) const { return users_.count(user) > 0; }

    void charge(const std::string& user, double node_seconds, SimTime now) {
        register_user(user);
        Entry& e = users_.at(user);
        decay(e, now);
        e.usage += node_seconds;
    }

    std::optional<double> priority(const std::string& user, SimTime now) const {
        auto it = users_.find(user);
        if (it == users_.end()) return std::nullopt;
        Entry e = it->second;
        decay(e, now);
        return e.weight / (1.0 + e.usage);
    }

    double usage(const std::string& user, SimTime now) const {
        auto it = users_.find(user);
        if (it == users_.end()) return 0.0;
        Entry e = it->second;
        decay(e, now);
        return e.usage;
    }

  private:
    struct Entry {
        double weight = 1.0;
        double usage = 0.0;
        SimTime updated_at = 0.0;
    };

    void decay(Entry& e, SimTime now) const {
        if (now > e.updated_at && e.usage > 0.0)
            e.usage *= std::pow(0.5, (now - e.updated_at) / half_life_);
        e.updated_at = std::max(e.updated_at, now);
    }

    double half_life_;
    std::map<std::string, Entry> users_;
};

// A child scheduler granted a subgraph of its parent's ranks.
struct SubInstance {
    int instance_id = 0;
    std::optional<int> parent;  // nullopt for root
    std::set<Rank> granted;     // root: empty here, owns everything implicitly
    bool released = false;
};

enum class SubmitError { invalid_spec, instance_not_live };
enum class RestoreError { id_collision };
enum class CancelError { not_found, not_cancelable };
enum class SpawnError { slots_unavailable, instance_not_live };

// The lead broker's queue and scheduler. Engine-free: callers pass the
// current simulated time in and act on the returned transitions; all state
// lives in ordered containers so iteration order is reproducible.
class JobQueue {
  public:
    static constexpr int kRootInstance = 0;

    struct Options {
        double alpha_per_hop = 0.0;
        double fair_share_half_life = 1000.0;
        bool requeue_on_rank_loss = true;  // false: jobs on a lost rank fail
    };

    JobQueue() : JobQueue(Options()) {}
    explicit JobQueue(Options opts) : opts_(opts), ledger_(opts.fair_share_half_life) {
        instances_[kRootInstance] = SubInstance{kRootInstance, std::nullopt, {}, false};
    }

    const Options& options() const { return opts_; }

    // ---- capacity -------------------------------------------------------

    void add_rank(Rank rank, int node_id, const ResourceShape& shape) {
        RankCapacity cap;
        cap.node_id = node_id;
        cap.shape = shape;
        capacity_[rank] = cap;
    }

    // Jobs whose allocation spans the rank are requeued (remaining work
    // preserved) or canceled, per options. Returns the affected job ids.
    std::vector<JobId> remove_rank(Rank rank, SimTime now) {
        capacity_.erase(rank);
        std::vector<JobId> affected;
        for (auto& [id, job] : jobs_) {
            if (job.state != JobState::running && job.state != JobState::paused) continue;
            bool hit = false;
            for (const auto& slot : job.allocation)
                if (slot.rank == rank) hit = true;
            if (!hit) continue;
            affected.push_back(id);
            if (job.state == JobState::running) settle_progress(job, now);
            release_allocation(job);
            if (opts_.requeue_on_rank_loss) {
                job.state = JobState::pending;
            } else {
                job.state = JobState::canceled;
                job.end_time = now;
            }
        }
        return affected;
    }

    bool has_rank(Rank rank) const { return capacity_.count(rank) > 0; }
    int capacity_ranks() const { return static_cast<int>(capacity_.size()); }

    // ---- submission and lifecycle ---------------------------------------

    struct Submitted {
        JobId job_id = 0;
        std::optional<SubmitError> error;
    };

    Submitted submit(JobSpec spec, SimTime now, int instance = kRootInstance) {
        if (!spec.valid()) return {0, SubmitError::invalid_spec};
        auto it = instances_.find(instance);
        if (it == instances_.end() || it->second.released)
            return {0, SubmitError::instance_not_live};
        spec.job_id = next_job_id_++;
        ledger_.register_user(spec.user);
        JobRecord rec;
        rec.spec = spec;
        rec.state = JobState::pending;
        rec.submit_time = now;
        rec.instance = instance;
        jobs_[spec.job_id] = std::move(rec);
        return {spec.job_id, std::nullopt};
    }

    struct Start {
        JobId job_id = 0;
        double wall_time = 0;  // duration of this running segment
    };

    // Scans pending jobs in fair-share priority order (FIFO tie-break) and
    // starts each one whose whole-node request fits the free online ranks of
    // its instance. Started jobs need a finish event at now + wall_time.
    std::vector<Start> schedule_cycle(SimTime now) {
        std::vector<Start> started;
        if (paused_) return started;
        for (JobId id : pending_in_priority_order(now)) {
            JobRecord& job = jobs_.at(id);
            auto slots = try_place(job);
            if (!slots) continue;
            job.allocation = std::move(*slots);
            for (const auto& slot : job.allocation) rank_owner_[slot.rank] = id;
            if (job.start_time < 0) job.start_time = now;
            job.segment_start = now;
            job.state = JobState::running;
            double wall = job.remaining_fraction * modeled_wall(job);
            job.segment_wall = wall;
            started.push_back({id, wall});
        }
        return started;
    }

    void finish(JobId id, SimTime now) {
        JobRecord& job = jobs_.at(id);
        if (job.state != JobState::running) return;
        charge_segment(job, now);
        release_allocation(job);
        job.remaining_fraction = 0.0;
        job.state = JobState::completed;
        job.end_time = now;
    }

    std::optional<CancelError> cancel(JobId id, SimTime now) {
        auto it = jobs_.find(id);
        if (it == jobs_.end()) return CancelError::not_found;
        JobRecord& job = it->second;
        switch (job.state) {
            case JobState::pending:
                break;
            case JobState::running:
                settle_progress(job, now);
                release_allocation(job);
                break;
            case JobState::paused:
                release_allocation(job);
                break;
            default:
                return CancelError::not_cancelable;
        }
        job.state = JobState::canceled;
        job.end_time = now;
        return std::nullopt;
    }

    // ---- pause / archive -------------------------------------------------

    // Running jobs transition to paused with remaining work settled from
    // linear progress; allocations stay claimed.
    std::vector<JobId> pause_queue(SimTime now) {
        paused_ = true;
        std::vector<JobId> paused;
        for (auto& [id, job] : jobs_) {
            if (job.state != JobState::running) continue;
            settle_progress(job, now);
            job.state = JobState::paused;
            paused.push_back(id);
        }
        return paused;
    }

    // Paused jobs resume on their existing allocation with remaining work.
    std::vector<Start> resume_queue(SimTime now) {
        paused_ = false;
        std::vector<Start> resumed;
        for (auto& [id, job] : jobs_) {
            if (job.state != JobState::paused || job.allocation.empty()) continue;
            job.state = JobState::running;
            job.segment_start = now;
            double wall = job.remaining_fraction * modeled_wall(job);
            job.segment_wall = wall;
            resumed.push_back({id, wall});
        }
        return resumed;
    }

    bool paused() const { return paused_; }

    ArchiveSnapshot save_archive(SimTime now) const {
        if (!paused_) throw std::logic_error("save_archive: queue must be paused");
        ArchiveSnapshot snap;
        snap.saved_at = now;
        snap.next_job_id = next_job_id_;
        for (const auto& [id, job] : jobs_)
            if (job.state == JobState::pending || job.state == JobState::paused ||
                job.state == JobState::running)
                snap.jobs.push_back(job);
        return snap;
    }

    // Lossless: every job id and spec is preserved exactly. Previously
    // paused or running jobs come back pending with their remaining work.
    std::optional<RestoreError> restore_archive(const ArchiveSnapshot& snap, SimTime now) {
        for (const auto& job : snap.jobs)
            if (jobs_.count(job.spec.job_id)) return RestoreError::id_collision;
        for (const auto& job : snap.jobs) {
            JobRecord rec = job;
            rec.state = JobState::pending;
            rec.allocation.clear();
            rec.instance = kRootInstance;
            ledger_.register_user(rec.spec.user);
            jobs_[rec.spec.job_id] = std::move(rec);
        }
        next_job_id_ = std::max(next_job_id_, snap.next_job_id);
        (void)now;
        return std::nullopt;
    }

    // ---- fair share -------------------------------------------------------

    std::optional<double> fair_share_priority(const std::string& user, SimTime now) const {
        return ledger_.priority(user, now);
    }

    FairShareLedger& ledger() { return ledger_; }

    // ---- sub-instances ----------------------------------------------------

    struct Spawned {
        int instance_id = 0;
        std::optional<SpawnError> error;
    };

    // The child owns the ranks exclusively until released; grants nest and
    // siblings stay disjoint by construction.
    Spawned spawn_subinstance(int parent, const std::set<Rank>& ranks) {
        auto pit = instances_.find(parent);
        if (pit == instances_.end() || pit->second.released)
            return {0, SpawnError::instance_not_live};
        for (Rank r : ranks) {
            if (!capacity_.count(r)) return {0, SpawnError::slots_unavailable};
            if (rank_owner_.count(r)) return {0, SpawnError::slots_unavailable};
            if (!in_grant(pit->second, r)) return {0, SpawnError::slots_unavailable};
            if (granted_to_child(parent, r)) return {0, SpawnError::slots_unavailable};
        }
        int id = next_instance_id_++;
        instances_[id] = SubInstance{id, parent, ranks, false};
        return {id, std::nullopt};
    }

    // Slots return to the parent. Fails while jobs of the instance still
    // hold allocations or live children exist.
    bool release_subinstance(int instance) {
        auto it = instances_.find(instance);
        if (it == instances_.end() || instance == kRootInstance || it->second.released)
            return false;
        for (const auto& [id, child] : instances_)
            if (!child.released && child.parent == instance) return false;
        for (const auto& [id, job] : jobs_)
            if (job.instance == instance && !job.allocation.empty()) return false;
        it->second.released = true;
        return true;
    }

    const SubInstance& instance(int id) const { return instances_.at(id); }

    // ---- introspection ----------------------------------------------------

    const std::map<JobId, JobRecord>& jobs() const { return jobs_; }
    const JobRecord* find(JobId id) const {
        auto it = jobs_.find(id);
        return it == jobs_.end() ? nullptr : &it->second;
    }
    JobId peek_next_job_id() const { return next_job_id_; }

    int pending_node_demand() const {
        int demand = 0;
        for (const auto& [id, job] : jobs_)
            if (job.state == JobState::pending) demand += job.spec.nodes;
        return demand;
    }

    int queue_length() const {
        int n = 0;
        for (const auto& [id, job] : jobs_)
            if (job.state == JobState::pending) ++n;
        return n;
    }

    double utilization() const {
        long total = 0, used = 0;
        for (const auto& [rank, cap] : capacity_) total += cap.shape.total_cores();
        for (const auto& [id, job] : jobs_)
            if (job.state == JobState::running || job.state == JobState::paused)
                for (const auto& slot : job.allocation) used += slot.cores;
        return total == 0 ? 0.0 : static_cast<double>(used) / static_cast<double>(total);
    }

    double modeled_wall(const JobRecord& job) const {
        return wall_time_model(job.spec, job.spec.total_ranks(), job.spec.nodes,
                               opts_.alpha_per_hop);
    }

    // Per (node, socket) allocated cores must never exceed capacity. Returns
    // the violating (node_id, socket) pairs; expected empty with 1:1
    // pod-to-node placement, violable when co-location double-discovers.
    std::vector<std::pair<int, int>> oversubscribed_sockets() const {
        std::map<std::pair<int, int>, int> used;
        std::map<int, ResourceShape> node_shape;
        for (const auto& [rank, cap] : capacity_) node_shape[cap.node_id] = cap.shape;
        for (const auto& [id, job] : jobs_) {
            if (job.state != JobState::running && job.state != JobState::paused) continue;
            for (const auto& slot : job.allocation) used[{slot.node_id, slot.socket}] += slot.cores;
        }
        std::vector<std::pair<int, int>> bad;
        for (const auto& [key, cores] : used) {
            auto it = node_shape.find(key.first);
            if (it != node_shape.end() && cores > it->second.cores_per_socket)
                bad.push_back(key);
        }
        return bad;
    }

    // ---- archive serialization -------------------------------------------
    // Line-delimited: a header line, then one job per line with a fixed
    // field order so external tools can parse records positionally.

    void write_archive(const ArchiveSnapshot& snap, std::ostream& os) const {
        nlohmann::ordered_json header;
        header["format"] = "mcsim-archive-v1";
        header["saved_at"] = snap.saved_at;
        header["next_job_id"] = snap.next_job_id;
        os << header.dump() << '\n';
        for (const auto& job : snap.jobs) {
            nlohmann::ordered_json j;
            j["job_id"] = job.spec.job_id;
            j["user"] = job.spec.user;
            j["nodes"] = job.spec.nodes;
            j["tasks_per_node"] = job.spec.tasks_per_node;
            j["work_units"] = job.spec.work_units;
            j["serial_fraction"] = job.spec.serial_fraction;
            j["burstable"] = job.spec.burstable;
            j["state"] = to_string(job.state);
            j["submit_time"] = job.submit_time;
            j["remaining_fraction"] = job.remaining_fraction;
            os << j.dump() << '\n';
        }
    }

    static ArchiveSnapshot read_archive(std::istream& is) {
        std::string line;
        if (!std::getline(is, line)) throw std::runtime_error("archive: empty file");
        nlohmann::json header = nlohmann::json::parse(line);
        if (header.value("format", "") != "mcsim-archive-v1")
            throw std::runtime_error("archive: unknown format");
        ArchiveSnapshot snap;
        snap.saved_at = header.at("saved_at").get<double>();
        snap.next_job_id = header.at("next_job_id").get<JobId>();
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            JobRecord rec;
            rec.spec.job_id = j.at("job_id").get<JobId>();
            rec.spec.user = j.at("user").get<std::string>();
            rec.spec.nodes = j.at("nodes").get<int>();
            rec.spec.tasks_per_node = j.at("tasks_per_node").get<int>();
            rec.spec.work_units = j.at("work_units").get<double>();
            rec.spec.serial_fraction = j.at("serial_fraction").get<double>();
            rec.spec.burstable = j.at("burstable").get<bool>();
            std::string state = j.at("state").get<std::string>();
            rec.state = state == "paused"    ? JobState::paused
                        : state == "running" ? JobState::running
                                             : JobState::pending;
            rec.submit_time = j.at("submit_time").get<double>();
            rec.remaining_fraction = j.at("remaining_fraction").get<double>();
            snap.jobs.push_back(std::move(rec));
        }
        return snap;
    }

  private:
    struct RankCapacity {
        int node_id = -1;
        ResourceShape shape;
    };

    void settle_progress(mcsim::JobRecord& job, SimTime now) {
        charge_segment(job, now);
        if (job.segment_wall > 0) {
            double done = (now - job.segment_start) / job.segment_wall;
            done = std::clamp(done, 0.0, 1.0);
            job.remaining_fraction *= (1.0 - done);
        }
    }

    void charge_segment(const mcsim::JobRecord& job, SimTime now) {
        double elapsed = std::max(0.0, now - job.segment_start);
        ledger_.charge(job.spec.user, elapsed * job.spec.nodes, now);
    }

    void release_allocation(mcsim::JobRecord& job) {
        for (const auto& slot : job.allocation) rank_owner_.erase(slot.rank);
        job.allocation.clear();
    }

    bool in_grant(const SubInstance& inst, Rank r) const {
        if (inst.instance_id == kRootInstance) return true;
        return inst.granted.count(r) > 0;
    }

    bool granted_to_child(int parent, Rank r) const {
        for (const auto& [id, child] : instances_)
            if (!child.released && child.parent == parent && child.granted.count(r)) return true;
        return false;
    }

    std::vector<Rank> schedulable_ranks(int instance) const {
        std::vector<Rank> ranks;
        const SubInstance& inst = instances_.at(instance);
        for (const auto& [rank, cap] : capacity_) {
            if (!in_grant(inst, rank)) continue;
            if (granted_to_child(instance, rank)) continue;
            ranks.push_back(rank);
        }
        return ranks;
    }

    std::vector<JobId> pending_in_priority_order(SimTime now) const {
        struct Key {
            double priority;
            SimTime submit_time;
            JobId id;
        };
        std::vector<Key> keys;
        for (const auto& [id, job] : jobs_)
            if (job.state == JobState::pending)
                keys.push_back({ledger_.priority(job.spec.user, now).value_or(0.0),
                                job.submit_time, id});
        std::stable_sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
            if (a.priority != b.priority) return a.priority > b.priority;
            if (a.submit_time != b.submit_time) return a.submit_time < b.submit_time;
            return a.id < b.id;
        });
        std::vector<JobId> out;
        out.reserve(keys.size());
        for (const auto& k : keys) out.push_back(k.id);
        return out;
    }

    // Whole-node first fit: the job takes `nodes` free ranks of its
    // instance, ascending; task cores are spread across sockets greedily.
    std::optional<std::vector<AllocSlot>> try_place(const mcsim::JobRecord& job) const {
        std::vector<AllocSlot> slots;
        int found = 0;
        for (Rank rank : schedulable_ranks(job.instance)) {
            if (rank_owner_.count(rank)) continue;
            const RankCapacity& cap = capacity_.at(rank);
            if (cap.shape.total_cores() < job.spec.tasks_per_node) continue;
            int remaining = job.spec.tasks_per_node;
            for (int s = 0; s < cap.shape.sockets && remaining > 0; ++s) {
                int take = std::min(remaining, cap.shape.cores_per_socket);
                slots.push_back({rank, cap.node_id, s, take});
                remaining -= take;
            }
            if (++found == job.spec.nodes) return slots;
        }
        return std::nullopt;
    }

    Options opts_;
    bool paused_ = false;
    JobId next_job_id_ = 1;
    int next_instance_id_ = 1;
    std::map<JobId, mcsim::JobRecord> jobs_;
    std::map<Rank, RankCapacity> capacity_;
    std::map<Rank, JobId> rank_owner_;
    std::map<int, SubInstance> instances_;
    FairShareLedger ledger_;
};

}  // namespace mcsim
