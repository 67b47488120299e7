#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcsim/autoscaler.hpp"
#include "mcsim/burst.hpp"
#include "mcsim/core.hpp"
#include "mcsim/engine.hpp"
#include "mcsim/job_queue.hpp"
#include "mcsim/overlay.hpp"
#include "mcsim/reconciler.hpp"

namespace mcsim {

enum class ImagePullPolicy { cached, always };

struct ClusterOptions {
    MiniClusterSpec spec;
    std::vector<NodeSpec> catalog;
    RetryPolicy retry;
    Topology topology;
    JobQueue::Options queue;
    std::optional<ScalePolicy> scale;

    bool anti_affinity = true;
    int batch_width = 0;        // max pods in `creating` at once; <= 0 unlimited
    double lead_delay = 0.0;    // extra seconds before rank 0 starts listening
    bool launcher_mode = false; // rank 0 only coordinates; contributes no capacity

    LatencyModel pod_create = LatencyModel::constant(2.0, "pod_create");
    LatencyModel pod_terminate = LatencyModel::constant(1.0, "pod_terminate");
    LatencyModel connect = LatencyModel::constant(0.05, "connect");
    LatencyModel image_pull = LatencyModel::constant(10.0, "image_pull");
    bool image_pull_enabled = false;
    ImagePullPolicy image_pull_policy = ImagePullPolicy::cached;

    // Auto-submitted on cluster-full when entry_command is set and the
    // cluster is not interactive.
    std::optional<JobSpec> entry_job;
};

// One MiniCluster bound to a deterministic engine: the operator loop, the
// broker overlay, the lead's queue, and the optional autoscaler and burst
// plugins all advance through scheduled events.
class ClusterSim {
  public:
    ClusterSim(ClusterOptions opts, std::uint64_t seed)
        : opts_(std::move(opts)), engine_(seed) {
        auto errors = validate_spec(opts_.spec);
        if (!errors.empty()) {
            std::string msg = "invalid MiniClusterSpec:";
            for (auto e : errors) msg += std::string(" ") + to_string(e);
            throw std::invalid_argument(msg);
        }
        desired_.spec = opts_.spec;
        if (opts_.scale) {
            ScalePolicy p = *opts_.scale;
            p.max_size = opts_.spec.max_size;
            autoscaler_.emplace(p);
        }
    }

    SimEngine& engine() { return engine_; }
    const MiniClusterSpec& spec() const { return desired_.spec; }
    const DesiredState& desired() const { return desired_; }
    const ClusterConfig& config() const { return config_; }
    const LeadAdvertisement& lead_advertisement() const { return lead_ad_; }
    const BrokerOverlay& overlay() const { return overlay_; }
    JobQueue& queue() { return queue_; }
    const JobQueue& queue() const { return queue_; }
    BurstManager& bursts() { return bursts_; }
    const std::map<int, PodInstance>& pods() const { return pods_; }
    const ClusterOptions& options() const { return opts_; }

    // The controller generates the shared secret and distributes the ranked
    // configuration before any pod exists. The lead's externally reachable
    // address is advertised once and stays stable for the cluster's life.
    void start() {
        config_ = make_cluster_config(desired_.spec,
                                      to_hex(engine_.rand_u64()) + to_hex(engine_.rand_u64()));
        lead_ad_ = LeadAdvertisement{hostname_for_rank(desired_.spec.name, 0),
                                     desired_.spec.lead_port};
        overlay_ = BrokerOverlay(desired_.spec.max_size, config_, opts_.topology, opts_.retry);
        reconcile_started_at_ = engine_.now();
        trigger_reconcile();
        if (autoscaler_)
            engine_.schedule_in(autoscaler_->policy().check_interval, EventKind::scale_check,
                                json{}, [this] { on_scale_check(); }, false);
    }

    // ---- job intake -------------------------------------------------------

    JobQueue::Submitted submit_job(JobSpec spec, int instance = JobQueue::kRootInstance) {
        auto res = queue_.submit(std::move(spec), engine_.now(), instance);
        if (!res.error) {
            const JobRecord* rec = queue_.find(res.job_id);
            engine_.emit(EventKind::job_submitted,
                         {{"job_id", res.job_id},
                          {"user", rec->spec.user},
                          {"nodes", rec->spec.nodes},
                          {"tasks_per_node", rec->spec.tasks_per_node},
                          {"burstable", rec->spec.burstable}});
            kick_schedule();
        }
        return res;
    }

    std::optional<CancelError> cancel_job(JobId id) {
        cancel_finish_ticket(id);
        auto err = queue_.cancel(id, engine_.now());
        if (!err) {
            engine_.emit(EventKind::job_canceled, {{"job_id", id}});
            check_burst_teardowns();
            kick_schedule();
        }
        return err;
    }

    // Shared validation path for users, the API and the autoscaler.
    ResizeOutcome request_resize_cmd(int new_size, const std::string& source) {
        engine_.emit(EventKind::resize_requested, {{"size", new_size}, {"source", source}});
        ResizeOutcome out = request_resize(desired_, new_size);
        if (out.accepted) {
            engine_.emit(EventKind::resize_accepted,
                         {{"size", desired_.spec.size}, {"generation", out.generation}});
            trigger_reconcile();
        } else {
            engine_.emit(EventKind::resize_rejected,
                         {{"size", new_size}, {"error", "size_out_of_bounds"}});
        }
        return out;
    }

    void pause_cmd() {
        auto paused = queue_.pause_queue(engine_.now());
        for (JobId id : paused) cancel_finish_ticket(id);
        engine_.emit(EventKind::queue_paused, {{"paused_jobs", paused.size()}});
    }

    void resume_cmd() {
        auto resumed = queue_.resume_queue(engine_.now());
        for (const auto& st : resumed) schedule_finish(st);
        engine_.emit(EventKind::queue_resumed, {{"resumed_jobs", resumed.size()}});
        kick_schedule();
    }

    ArchiveSnapshot save_cmd() {
        ArchiveSnapshot snap = queue_.save_archive(engine_.now());
        engine_.emit(EventKind::archive_saved, {{"jobs", snap.jobs.size()}});
        return snap;
    }

    std::optional<RestoreError> restore_cmd(const ArchiveSnapshot& snap) {
        auto err = queue_.restore_archive(snap, engine_.now());
        if (!err) {
            engine_.emit(EventKind::archive_restored, {{"jobs", snap.jobs.size()}});
            kick_schedule();
        }
        return err;
    }

    // Simulated node failure: the pod vanishes without a terminating grace
    // period and reconciliation recreates the index.
    void crash_pod(int index) {
        auto it = pods_.find(index);
        if (it == pods_.end()) return;
        engine_.emit(EventKind::node_crash, {{"index", index}});
        finalize_pod_gone(index, /*crashed=*/true);
    }

    // Deleting the MiniCluster tears everything down, index 0 last.
    void delete_cluster() {
        if (deleted_) return;
        deleted_ = true;
        deletion_started_at_ = engine_.now();
        for (const auto& [id, rc] : bursts_.remotes())
            if (rc.live()) force_teardown(id);
        std::vector<int> indices;
        for (const auto& [index, pod] : pods_) indices.push_back(index);
        std::sort(indices.rbegin(), indices.rend());  // descending: index 0 cleaned up last
        for (int index : indices) begin_terminate(index);
        if (pods_.empty()) finish_deletion();
    }

    // ---- metrics ----------------------------------------------------------

    MetricSample metric_sample() const {
        MetricSample s;
        s.at = engine_.now();
        s.current_utilization = queue_.utilization();
        s.pending_node_demand = queue_.pending_node_demand();
        s.queue_length = queue_.queue_length();
        return s;
    }

    SimTime reconcile_started_at() const { return reconcile_started_at_; }
    std::optional<SimTime> cluster_full_time() const { return cluster_full_time_; }
    std::optional<JobId> entry_job_id() const { return entry_job_id_; }
    double node_seconds_billed() const { return node_seconds_; }
    int nodes_billed() const { return static_cast<int>(indices_created_.size()); }
    std::optional<SimTime> deletion_started_at() const { return deletion_started_at_; }
    std::optional<SimTime> deletion_finished_at() const { return deletion_finished_at_; }
    int one_time_provision_events() const { return one_time_provision_; }
    int repeated_provision_events() const { return repeated_provision_; }
    int one_time_pull_events() const { return one_time_pull_; }
    int repeated_pull_events() const { return repeated_pull_; }

    bool all_jobs_terminal() const {
        for (const auto& [id, job] : queue_.jobs())
            if (job.state != JobState::completed && job.state != JobState::canceled) return false;
        return true;
    }

    // Observed state matches the desired state: pods exactly at [0, size)
    // (burst-held ranks excepted), all running with their brokers online.
    bool steady() const {
        for (const auto& [index, pod] : pods_)
            if (index >= desired_.spec.size) return false;
        for (Rank r = 0; r < desired_.spec.size; ++r) {
            if (bursts_.rank_reserved(r)) continue;
            auto it = pods_.find(r);
            if (it == pods_.end() || it->second.phase != PodPhase::running) return false;
            if (!overlay_.online(r)) return false;
        }
        return true;
    }

    std::map<Rank, BrokerPhase> membership() const { return overlay_.membership(); }

  private:
    // ---- reconciliation ---------------------------------------------------

    void trigger_reconcile() {
        if (reconcile_pending_ || deleted_) return;
        reconcile_pending_ = true;
        engine_.schedule_in(0, EventKind::reconcile, json{},
                            [this] {
                                reconcile_pending_ = false;
                                run_reconcile();
                            },
                            false);
    }

    void run_reconcile() {
        if (deleted_) return;
        retry_unassigned_pods();
        auto actions =
            reconcile(pods_, desired_, opts_.batch_width, bursts_.reserved_ranks());
        for (const auto& action : actions) {
            if (action.kind == ReconcileAction::Kind::create)
                begin_create(action.index);
            else
                begin_terminate(action.index);
        }
    }

    void retry_unassigned_pods() {
        for (auto& [index, pod] : pods_) {
            if (pod.phase != PodPhase::pending) continue;
            if (try_assign_and_create(pod)) continue;
        }
    }

    void begin_create(int index) {
        if (pods_.count(index)) return;
        PodInstance pod;
        pod.index = index;
        pod.phase = PodPhase::pending;
        pods_[index] = pod;
        if (!try_assign_and_create(pods_[index]))
            engine_.emit(EventKind::pod_unschedulable, {{"index", index}});
    }

    bool try_assign_and_create(PodInstance& pod) {
        auto node = assign_node(opts_.catalog, pods_per_node_, opts_.anti_affinity);
        if (!node) return false;
        pod.node_id = *node;
        pod.phase = PodPhase::creating;
        pod.created_at = engine_.now();
        ++pods_per_node_[*node];
        std::uint64_t uid = ++pod_uid_counter_;
        pod_uid_[pod.index] = uid;

        bool initial = desired_.generation == 1;
        (initial ? one_time_provision_ : repeated_provision_)++;
        indices_created_.insert(pod.index);
        double delay = engine_.sample(opts_.pod_create);
        if (opts_.image_pull_enabled) {
            bool pull = opts_.image_pull_policy == ImagePullPolicy::always ||
                        !pulled_nodes_.count(*node);
            if (pull) {
                pulled_nodes_.insert(*node);
                (initial ? one_time_pull_ : repeated_pull_)++;
                delay += engine_.sample(opts_.image_pull);
                engine_.emit(EventKind::image_pull,
                             {{"index", pod.index},
                              {"node", *node},
                              {"cost", initial ? "one_time" : "repeated"}});
            }
        }
        engine_.emit(EventKind::pod_creating, {{"index", pod.index},
                                               {"node", *node},
                                               {"cost", initial ? "one_time" : "repeated"}});
        int index = pod.index;
        engine_.schedule_in(delay, EventKind::pod_created, json{},
                            [this, index, uid] { on_pod_created(index, uid); }, false);
        return true;
    }

    void on_pod_created(int index, std::uint64_t uid) {
        auto it = pods_.find(index);
        if (it == pods_.end() || pod_uid_[index] != uid) return;  // stale
        PodInstance& pod = it->second;
        if (pod.phase != PodPhase::creating) return;
        pod.phase = PodPhase::running;
        pod.ready_at = engine_.now();
        engine_.emit(EventKind::pod_created, {{"index", index}, {"node", *pod.node_id}});
        start_broker(index);
        trigger_reconcile();
    }

    void begin_terminate(int index) {
        auto it = pods_.find(index);
        if (it == pods_.end()) return;
        PodInstance& pod = it->second;
        if (pod.phase == PodPhase::terminating || pod.phase == PodPhase::gone) return;
        if (pod.phase == PodPhase::pending) {  // never scheduled; vanishes at once
            pods_.erase(it);
            if (deleted_ && pods_.empty()) finish_deletion();
            return;
        }
        pod.phase = PodPhase::terminating;
        overlay_.mark_lost(index);
        engine_.emit(EventKind::pod_terminating, {{"index", index}});
        std::uint64_t uid = pod_uid_[index];
        engine_.schedule_in(engine_.sample(opts_.pod_terminate), EventKind::pod_terminated,
                            {{"index", index}},
                            [this, index, uid] {
                                auto pit = pods_.find(index);
                                if (pit == pods_.end() || pod_uid_[index] != uid) return;
                                finalize_pod_gone(index, false);
                            },
                            false);
    }

    void finalize_pod_gone(int index, bool crashed) {
        auto it = pods_.find(index);
        if (it == pods_.end()) return;
        PodInstance& pod = it->second;
        if (pod.node_id) {
            auto nit = pods_per_node_.find(*pod.node_id);
            if (nit != pods_per_node_.end() && --nit->second <= 0) pods_per_node_.erase(nit);
        }
        if (pod.created_at >= 0) node_seconds_ += engine_.now() - pod.created_at;
        pods_.erase(it);
        ++boot_epoch_[index];  // invalidates in-flight connect attempts
        engine_.emit(EventKind::pod_terminated, {{"index", index}, {"crashed", crashed}});
        broker_went_down(index);
        if (deleted_) {
            if (pods_.empty()) finish_deletion();
            return;
        }
        trigger_reconcile();
    }

    void finish_deletion() {
        if (deletion_finished_at_) return;
        deletion_finished_at_ = engine_.now();
        engine_.emit(EventKind::cluster_deleted, {{"at", *deletion_finished_at_}});
    }

    void broker_went_down(Rank rank) {
        bool was_online = overlay_.online(rank);
        overlay_.mark_down(rank);
        if (rank == 0) lead_active_ = false;
        if (was_online) engine_.emit(EventKind::broker_down, {{"rank", rank}});
        if (queue_.has_rank(rank)) {
            auto affected = queue_.remove_rank(rank, engine_.now());
            for (JobId id : affected) {
                cancel_finish_ticket(id);
                const JobRecord* rec = queue_.find(id);
                engine_.emit(rec && rec->state == JobState::pending ? EventKind::job_requeued
                                                                    : EventKind::job_canceled,
                             {{"job_id", id}, {"rank", rank}});
            }
        }
        kick_schedule();
    }

    // ---- overlay bootstrap --------------------------------------------------

    void start_broker(Rank rank) {
        int epoch = ++boot_epoch_[rank];
        if (rank == 0) {
            engine_.schedule_in(opts_.lead_delay, EventKind::broker_online, json{},
                                [this, epoch] {
                                    if (boot_epoch_[0] != epoch || !pods_.count(0)) return;
                                    overlay_.start_lead();
                                    lead_active_ = true;
                                    engine_.emit(EventKind::broker_online, {{"rank", 0}});
                                    if (!opts_.launcher_mode) add_rank_capacity(0);
                                    on_rank_online(0);
                                },
                                false);
            return;
        }
        overlay_.begin_bootstrap(rank, config_.secret);
        schedule_attempt(rank, engine_.now(), epoch);
    }

    bool rank_backed(Rank rank) const {
        auto it = pods_.find(rank);
        return it != pods_.end() &&
               (it->second.phase == PodPhase::running || it->second.phase == PodPhase::creating);
    }

    void schedule_attempt(Rank rank, SimTime at, int epoch) {
        engine_.schedule(at, EventKind::broker_connect_attempt, json{},
                         [this, rank, epoch] { on_connect_attempt(rank, epoch); }, false);
    }

    void on_connect_attempt(Rank rank, int epoch) {
        if (boot_epoch_[rank] != epoch) return;  // backing pod changed
        bool remote = remote_of_rank(rank) != nullptr;
        if (!remote && !rank_backed(rank)) return;
        engine_.emit(EventKind::broker_connect_attempt,
                     {{"rank", rank}, {"attempt", overlay_.broker(rank).retry_attempt}});
        auto outcome = overlay_.attempt_connect(rank, engine_.now());
        switch (outcome) {
            case BrokerOverlay::Attempt::success: {
                engine_.schedule_in(engine_.sample(opts_.connect), EventKind::broker_online,
                                    json{},
                                    [this, rank, epoch] {
                                        if (boot_epoch_[rank] != epoch) return;
                                        overlay_.mark_online(rank);
                                        engine_.emit(EventKind::broker_online, {{"rank", rank}});
                                        add_rank_capacity(rank);
                                        on_rank_online(rank);
                                    },
                                    false);
                break;
            }
            case BrokerOverlay::Attempt::parent_unreachable:
                schedule_attempt(rank, overlay_.broker(rank).next_retry_at, epoch);
                break;
            case BrokerOverlay::Attempt::secret_mismatch:
                engine_.emit(EventKind::secret_mismatch,
                             {{"rank", rank}, {"attempt", overlay_.broker(rank).retry_attempt}});
                schedule_attempt(rank, overlay_.broker(rank).next_retry_at, epoch);
                break;
            case BrokerOverlay::Attempt::gave_up:
                engine_.emit(EventKind::secret_mismatch, {{"rank", rank}, {"gave_up", true}});
                break;
        }
    }

    void add_rank_capacity(Rank rank) {
        const RemoteCluster* rc = remote_of_rank(rank);
        if (rc) {
            // synthetic node ids keep remote ranks distinct in the audit
            queue_.add_rank(rank, 1000000 + rank, rc->shape);
            return;
        }
        auto it = pods_.find(rank);
        if (it == pods_.end() || !it->second.node_id) return;
        queue_.add_rank(rank, *it->second.node_id, discover_resources(it->second, opts_.catalog));
    }

    void on_rank_online(Rank rank) {
        maybe_mark_burst_joined(rank);
        maybe_cluster_full();
        // followers that were waiting for this parent re-attempt on their own
        // schedule; nothing to do here for them
        kick_schedule();
    }

    void maybe_cluster_full() {
        if (cluster_full_time_) return;
        for (Rank r = 0; r < desired_.spec.size; ++r)
            if (!overlay_.online(r)) return;
        cluster_full_time_ = engine_.now();
        engine_.emit(EventKind::cluster_full,
                     {{"size", desired_.spec.size}, {"at", *cluster_full_time_}});
        if (opts_.entry_job && !desired_.spec.entry_command.empty() &&
            !desired_.spec.interactive) {
            auto res = submit_job(*opts_.entry_job);
            if (!res.error) entry_job_id_ = res.job_id;
        }
    }

    // ---- queue wiring -------------------------------------------------------

    void kick_schedule() {
        if (!lead_active_ || deleted_ || schedule_pending_) return;
        schedule_pending_ = true;
        engine_.schedule_in(0, EventKind::timer, json{},
                            [this] {
                                schedule_pending_ = false;
                                run_schedule_cycle();
                            },
                            false);
    }

    void run_schedule_cycle() {
        if (!lead_active_ || deleted_) return;
        auto started = queue_.schedule_cycle(engine_.now());
        for (const auto& st : started) schedule_finish(st);
        maybe_trigger_burst_check();
    }

    void schedule_finish(const JobQueue::Start& st) {
        const JobRecord* rec = queue_.find(st.job_id);
        json ranks = json::array();
        std::set<Rank> seen;
        for (const auto& slot : rec->allocation)
            if (seen.insert(slot.rank).second) ranks.push_back(slot.rank);
        engine_.emit(EventKind::job_started,
                     {{"job_id", st.job_id}, {"wall_time", st.wall_time}, {"ranks", ranks}});
        JobId id = st.job_id;
        finish_tickets_[id] = engine_.schedule_in(
            st.wall_time, EventKind::job_finished, {{"job_id", id}},
            [this, id] { on_job_finished(id); });
    }

    void on_job_finished(JobId id) {
        finish_tickets_.erase(id);
        queue_.finish(id, engine_.now());
        check_burst_teardowns();
        kick_schedule();
    }

    void cancel_finish_ticket(JobId id) {
        auto it = finish_tickets_.find(id);
        if (it != finish_tickets_.end()) {
            engine_.cancel(it->second);
            finish_tickets_.erase(it);
        }
    }

    // ---- autoscaling ----------------------------------------------------------

    void on_scale_check() {
        if (deleted_ || !autoscaler_) return;
        MetricSample sample = metric_sample();
        engine_.emit(EventKind::scale_check,
                     {{"utilization", sample.current_utilization},
                      {"pending_node_demand", sample.pending_node_demand},
                      {"queue_length", sample.queue_length}});
        if (lead_active_) {
            auto decision = autoscaler_->decide(sample, desired_.spec.size);
            if (decision) request_resize_cmd(*decision, "autoscaler");
        }
        engine_.schedule_in(autoscaler_->policy().check_interval, EventKind::scale_check,
                            json{}, [this] { on_scale_check(); }, false);
    }

    // ---- bursting ---------------------------------------------------------------

    int local_capacity_bound() const {
        return desired_.spec.size - (opts_.launcher_mode ? 1 : 0);
    }

    bool locally_unsatisfiable(const JobSpec& job) const {
        if (job.nodes > local_capacity_bound()) return true;
        return job.tasks_per_node > desired_.spec.pod_resources.total_cores();
    }

    void maybe_trigger_burst_check() {
        if (bursts_.empty() || burst_check_pending_ || deleted_) return;
        bool candidate = false;
        for (const auto& [id, job] : queue_.jobs())
            if (job.state == JobState::pending && job.spec.burstable &&
                !burst_assignment_.count(id) && locally_unsatisfiable(job.spec))
                candidate = true;
        if (!candidate) return;
        burst_check_pending_ = true;
        engine_.schedule_in(0, EventKind::burst_check, json{},
                            [this] {
                                burst_check_pending_ = false;
                                run_burst_check();
                            });
    }

    void run_burst_check() {
        if (deleted_) return;
        for (const auto& [id, job] : queue_.jobs()) {
            if (job.state != JobState::pending || !job.spec.burstable) continue;
            if (burst_assignment_.count(id)) continue;
            if (!locally_unsatisfiable(job.spec)) continue;
            int needed = job.spec.nodes - local_capacity_bound();
            if (job.spec.tasks_per_node > desired_.spec.pod_resources.total_cores())
                needed = job.spec.nodes;  // local nodes too small to help
            BurstPlugin* plugin = bursts_.select_plugin(job.spec, needed);
            if (!plugin) {
                if (burst_notified_.insert(id).second)
                    engine_.emit(EventKind::burst_unsatisfiable,
                                 {{"job_id", id}, {"error", "no_plugin_satisfiable"}});
                continue;
            }
            auto base = bursts_.allocate_base_rank(needed, desired_.spec.size,
                                                   desired_.spec.max_size);
            if (!base) {
                if (burst_notified_.insert(id).second)
                    engine_.emit(EventKind::burst_unsatisfiable,
                                 {{"job_id", id}, {"error", "insufficient_phantom_ranks"}});
                continue;
            }
            ProvisionPlan plan = plugin->provision(needed, config_, lead_ad_);
            RemoteCluster& rc =
                bursts_.create_remote(plugin->name(), *base, needed, desired_.spec.name, plan);
            rc.assigned_jobs.insert(id);
            burst_assignment_[id] = rc.burst_id;
            engine_.emit(EventKind::burst_assigned, {{"job_id", id},
                                                     {"plugin", plugin->name()},
                                                     {"base_rank", rc.base_rank},
                                                     {"count", rc.count}});
            engine_.emit(EventKind::burst_provisioning,
                         {{"burst_id", rc.burst_id}, {"plugin", plugin->name()}});
            int burst_id = rc.burst_id;
            engine_.schedule_in(engine_.sample(plan.latency), EventKind::timer, json{},
                                [this, burst_id] { on_remote_up(burst_id); }, false);
        }
    }

    void on_remote_up(int burst_id) {
        RemoteCluster* rc = bursts_.find(burst_id);
        if (!rc || !rc->live()) return;
        // remote followers walk the exact same bootstrap path as local ones
        for (Rank r = rc->base_rank; r < rc->base_rank + rc->count; ++r) {
            int epoch = ++boot_epoch_[r];
            overlay_.begin_bootstrap(r, rc->secret);
            schedule_attempt(r, engine_.now(), epoch);
        }
    }

    const RemoteCluster* remote_of_rank(Rank rank) const {
        for (const auto& [id, rc] : bursts_.remotes())
            if (rc.live() && rc.holds(rank)) return &rc;
        return nullptr;
    }

    void maybe_mark_burst_joined(Rank rank) {
        for (auto& [id, rc] : bursts_.remotes_mut()) {
            if (!rc.live() || !rc.holds(rank)) continue;
            if (rc.state != RemoteCluster::State::provisioning) return;
            for (Rank r = rc.base_rank; r < rc.base_rank + rc.count; ++r)
                if (!overlay_.online(r)) return;
            rc.state = RemoteCluster::State::joined;
            engine_.emit(EventKind::burst_joined,
                         {{"burst_id", rc.burst_id},
                          {"base_rank", rc.base_rank},
                          {"count", rc.count}});
            return;
        }
    }

    bool remote_ranks_busy(const RemoteCluster& rc) const {
        for (const auto& [id, job] : queue_.jobs()) {
            if (job.state != JobState::running && job.state != JobState::paused) continue;
            for (const auto& slot : job.allocation)
                if (rc.holds(slot.rank)) return true;
        }
        return false;
    }

    void check_burst_teardowns() {
        for (const auto& [id, rc] : bursts_.remotes()) {
            if (!rc.live() || rc.state != RemoteCluster::State::joined) continue;
            bool assigned_done = true;
            for (JobId jid : rc.assigned_jobs) {
                const JobRecord* rec = queue_.find(jid);
                if (rec && rec->state != JobState::completed && rec->state != JobState::canceled)
                    assigned_done = false;
            }
            if (assigned_done && !remote_ranks_busy(rc)) teardown_remote(id);
        }
    }

  public:
    // Explicit teardown; busy_ranks while a running allocation spans the
    // remote, a warning no-op when already gone.
    std::optional<TeardownError> teardown_remote(int burst_id) {
        RemoteCluster* rc = bursts_.find(burst_id);
        if (!rc) return TeardownError::unknown;
        if (rc->state == RemoteCluster::State::torn_down) {
            engine_.emit(EventKind::burst_teardown,
                         {{"burst_id", burst_id}, {"warning", "already_torn_down"}});
            return TeardownError::already_torn_down;
        }
        if (remote_ranks_busy(*rc)) return TeardownError::busy_ranks;
        for (Rank r = rc->base_rank; r < rc->base_rank + rc->count; ++r) {
            ++boot_epoch_[r];
            bool was_online = overlay_.online(r);
            overlay_.mark_down(r);
            if (was_online) engine_.emit(EventKind::broker_down, {{"rank", r}});
            if (queue_.has_rank(r)) queue_.remove_rank(r, engine_.now());
        }
        bursts_.teardown(burst_id);
        engine_.emit(EventKind::burst_teardown,
                     {{"burst_id", burst_id}, {"base_rank", rc->base_rank}, {"count", rc->count}});
        kick_schedule();
        return std::nullopt;
    }

  private:
    void force_teardown(int burst_id) {
        RemoteCluster* rc = bursts_.find(burst_id);
        if (!rc || !rc->live()) return;
        for (const auto& [id, job] : queue_.jobs())
            if ((job.state == JobState::running || job.state == JobState::paused))
                for (const auto& slot : job.allocation)
                    if (rc->holds(slot.rank)) {
                        cancel_finish_ticket(id);
                        queue_.cancel(id, engine_.now());
                        break;
                    }
        teardown_remote(burst_id);
    }

    ClusterOptions opts_;
    SimEngine engine_;
    DesiredState desired_;
    ClusterConfig config_;
    LeadAdvertisement lead_ad_;
    BrokerOverlay overlay_;
    JobQueue queue_;
    std::optional<Autoscaler> autoscaler_;
    BurstManager bursts_;

    std::map<int, PodInstance> pods_;
    std::map<int, int> pods_per_node_;
    std::map<int, std::uint64_t> pod_uid_;
    std::map<Rank, int> boot_epoch_;
    std::map<JobId, SimEngine::Ticket> finish_tickets_;
    std::map<JobId, int> burst_assignment_;
    std::set<JobId> burst_notified_;
    std::set<int> indices_created_;
    std::set<int> pulled_nodes_;

    bool reconcile_pending_ = false;
    bool schedule_pending_ = false;
    bool burst_check_pending_ = false;
    bool lead_active_ = false;
    bool deleted_ = false;
    std::uint64_t pod_uid_counter_ = 0;

    SimTime reconcile_started_at_ = 0;
    std::optional<SimTime> cluster_full_time_;
    std::optional<SimTime> deletion_started_at_;
    std::optional<SimTime> deletion_finished_at_;
    std::optional<JobId> entry_job_id_;
    double node_seconds_ = 0;
    int one_time_provision_ = 0;
    int repeated_provision_ = 0;
    int one_time_pull_ = 0;
    int repeated_pull_ = 0;
};

}  // namespace mcsim
