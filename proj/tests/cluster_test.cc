#include "mcsim/cluster.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "mcsim/job_queue.hpp"

using namespace mcsim;

namespace {

ClusterOptions options_of(int size, int max_size, int catalog_nodes,
                          ResourceShape shape = {2, 4, 4096}) {
    ClusterOptions opts;
    opts.spec.name = "mc";
    opts.spec.size = size;
    opts.spec.max_size = max_size;
    opts.spec.pod_resources = shape;
    for (int i = 0; i < catalog_nodes; ++i)
        opts.catalog.push_back({i, "node-" + std::to_string(i), shape});
    opts.pod_create = LatencyModel::constant(1.0);
    opts.pod_terminate = LatencyModel::constant(0.5);
    opts.connect = LatencyModel::constant(0.05);
    return opts;
}

SimTime run_to_full(ClusterSim& sim, SimTime deadline = 10000.0) {
    sim.engine().run_until([&] { return sim.cluster_full_time().has_value(); }, deadline);
    return sim.cluster_full_time().value_or(-1.0);
}

// Lead up first: cluster-full is creation plus one connect latency.
TEST(Bootstrap, LeadFirstFullTimeIsCreatePlusConnect) {
    ClusterSim sim(options_of(4, 8, 4), 42);
    sim.start();
    EXPECT_NEAR(run_to_full(sim), 1.0 + 0.05, 1e-9);
}

// Hand-rolled geometric series: follower attempts at offsets 0, 0.1, 0.3,
// 0.7, 1.5, ... after its pod is ready; a lead delayed by D is found at the
// first attempt at offset >= D.
TEST(Bootstrap, DelayedLeadCostsTheRetrySchedule) {
    struct Case {
        double lead_delay;
        double expected_offset;
    };
    for (const auto& c : std::initializer_list<Case>{
             {0.0, 0.0}, {0.5, 0.7}, {1.0, 1.5}, {2.0, 3.1}, {10.0, 12.7}}) {
        ClusterOptions opts = options_of(4, 8, 4);
        opts.lead_delay = c.lead_delay;
        ClusterSim sim(opts, 42);
        sim.start();
        double expected = 1.0 + c.expected_offset + 0.05;
        EXPECT_NEAR(run_to_full(sim), expected, 1e-9) << "D=" << c.lead_delay;
    }
}

TEST(Bootstrap, FanoutTreeComesUpThroughParents) {
    ClusterOptions opts = options_of(7, 8, 7);
    opts.topology.fanout = 2;
    ClusterSim sim(opts, 42);
    sim.start();
    EXPECT_GT(run_to_full(sim), 0.0);
    for (Rank r = 0; r < 7; ++r) EXPECT_TRUE(sim.overlay().online(r));
}

TEST(Elasticity, MembershipTracksResizes) {
    ClusterOptions opts = options_of(2, 4, 4);
    ClusterSim sim(opts, 7);
    sim.start();
    run_to_full(sim);
    auto view = sim.membership();
    EXPECT_EQ(view.at(0), BrokerPhase::online);
    EXPECT_EQ(view.at(1), BrokerPhase::online);
    EXPECT_EQ(view.at(2), BrokerPhase::down);  // phantom ranks are simply down
    EXPECT_EQ(view.at(3), BrokerPhase::down);

    // grow 2 -> 4: the new ranks come online, nobody restarts
    sim.request_resize_cmd(4, "test");
    sim.engine().run_until_time(sim.engine().now() + 30.0);
    view = sim.membership();
    for (Rank r = 0; r < 4; ++r) EXPECT_EQ(view.at(r), BrokerPhase::online) << r;

    // shrink 4 -> 1: ranks 1..3 terminate, 0 is unaffected
    sim.request_resize_cmd(1, "test");
    sim.engine().run_until_time(sim.engine().now() + 30.0);
    view = sim.membership();
    EXPECT_EQ(view.at(0), BrokerPhase::online);
    for (Rank r = 1; r < 4; ++r) EXPECT_EQ(view.at(r), BrokerPhase::down) << r;
}

TEST(Elasticity, ResizeToZeroRejected) {
    ClusterSim sim(options_of(2, 4, 4), 7);
    sim.start();
    run_to_full(sim);
    auto out = sim.request_resize_cmd(0, "test");
    EXPECT_FALSE(out.accepted);
    EXPECT_EQ(sim.spec().size, 2);
}

TEST(Elasticity, DownscaleTerminatesLargerIndicesFirst) {
    ClusterSim sim(options_of(6, 8, 6), 7);
    sim.start();
    run_to_full(sim);
    sim.request_resize_cmd(2, "test");
    sim.engine().run_until_time(sim.engine().now() + 30.0);
    std::vector<int> terminating_order;
    for (const auto& rec : sim.engine().log())
        if (rec.kind == EventKind::pod_terminating)
            terminating_order.push_back(rec.payload.at("index").get<int>());
    ASSERT_EQ(terminating_order, (std::vector<int>{5, 4, 3, 2}));
}

TEST(Elasticity, CrashRecoveryRecreatesTheIndex) {
    ClusterSim sim(options_of(4, 8, 4), 7);
    sim.start();
    run_to_full(sim);
    sim.crash_pod(3);
    EXPECT_EQ(sim.membership().at(3), BrokerPhase::down);
    sim.engine().run_until_time(sim.engine().now() + 30.0);
    EXPECT_EQ(sim.membership().at(3), BrokerPhase::online);
    EXPECT_TRUE(sim.pods().count(3));
}

TEST(Scheduling, EntryJobSubmittedAtClusterFull) {
    ClusterOptions opts = options_of(4, 8, 4);
    opts.spec.entry_command = "lmp -in in.reaxc";
    JobSpec entry;
    entry.user = "default";
    entry.nodes = 4;
    entry.tasks_per_node = 8;
    entry.work_units = 320.0;
    opts.entry_job = entry;
    ClusterSim sim(opts, 9);
    sim.start();
    SimTime full = run_to_full(sim);
    ASSERT_TRUE(sim.entry_job_id().has_value());
    const JobRecord* rec = sim.queue().find(*sim.entry_job_id());
    EXPECT_DOUBLE_EQ(rec->submit_time, full);
    sim.engine().run_until([&] { return sim.all_jobs_terminal(); }, 1000.0);
    rec = sim.queue().find(*sim.entry_job_id());
    EXPECT_EQ(rec->state, JobState::completed);
    EXPECT_NEAR(rec->end_time - rec->start_time, 320.0 / 32.0, 1e-9);
}

TEST(Scheduling, InteractiveClusterSubmitsNothing) {
    ClusterOptions opts = options_of(2, 4, 2);
    opts.spec.entry_command = "sleep inf";
    opts.spec.interactive = true;
    JobSpec entry;
    entry.nodes = 2;
    opts.entry_job = entry;
    ClusterSim sim(opts, 9);
    sim.start();
    run_to_full(sim);
    EXPECT_FALSE(sim.entry_job_id().has_value());
    EXPECT_TRUE(sim.queue().jobs().empty());
}

TEST(Scheduling, HwlocDoubleCountWithoutAntiAffinity) {
    // two pods share the single 96-core node and each discovers the whole
    // host: the scheduler believes it owns 192 cores
    ClusterOptions opts = options_of(2, 4, 1, {2, 48, 256000});
    opts.anti_affinity = false;
    ClusterSim sim(opts, 11);
    sim.start();
    run_to_full(sim);
    int discovered = 0;
    for (const auto& [index, pod] : sim.pods())
        discovered += discover_resources(pod, opts.catalog).total_cores();
    EXPECT_EQ(discovered, 192);
    EXPECT_EQ(opts.catalog[0].shape.total_cores(), 96);

    // and the double-counted capacity is oversubscribable for real
    auto a = sim.submit_job([] {
        JobSpec s;
        s.nodes = 2;
        s.tasks_per_node = 96;
        s.work_units = 100.0;
        return s;
    }());
    sim.engine().run_until(
        [&] { return sim.queue().find(a.job_id)->state == JobState::running; }, 100.0);
    EXPECT_FALSE(sim.queue().oversubscribed_sockets().empty());
}

TEST(Scheduling, AntiAffinityKeepsSocketsWithinCapacity) {
    ClusterOptions opts = options_of(4, 8, 4);
    ClusterSim sim(opts, 11);
    sim.start();
    run_to_full(sim);
    for (int i = 0; i < 6; ++i) {
        JobSpec s;
        s.nodes = 1 + i % 3;
        s.tasks_per_node = 1 + i;
        s.work_units = 10.0 + i;
        sim.submit_job(s);
    }
    sim.engine().set_observer(
        [&](const LogRecord&) { ASSERT_TRUE(sim.queue().oversubscribed_sockets().empty()); });
    sim.engine().run_until([&] { return sim.all_jobs_terminal(); }, 1000.0);
    EXPECT_TRUE(sim.all_jobs_terminal());
}

TEST(Launcher, ExternalLauncherBillsOneExtraNode) {
    for (int workers : {4, 8}) {
        // embedded: the lead does work; external: rank 0 only coordinates
        ClusterOptions embedded = options_of(workers, workers + 1, workers + 1);
        ClusterOptions external = options_of(workers + 1, workers + 1, workers + 1);
        external.launcher_mode = true;
        JobSpec entry;
        entry.nodes = workers;
        entry.tasks_per_node = 8;
        entry.work_units = 800.0;
        embedded.spec.entry_command = external.spec.entry_command = "work";
        embedded.entry_job = external.entry_job = entry;

        ClusterSim a(embedded, 21), b(external, 21);
        a.start();
        b.start();
        a.engine().run_until(
            [&] { return a.entry_job_id().has_value() && a.all_jobs_terminal(); }, 1000.0);
        b.engine().run_until(
            [&] { return b.entry_job_id().has_value() && b.all_jobs_terminal(); }, 1000.0);
        a.delete_cluster();
        b.delete_cluster();
        a.engine().run_until([&] { return a.deletion_finished_at().has_value(); }, 100.0);
        b.engine().run_until([&] { return b.deletion_finished_at().has_value(); }, 100.0);

        EXPECT_EQ(a.nodes_billed(), workers);
        EXPECT_EQ(b.nodes_billed(), workers + 1);
        const JobRecord* ja = a.queue().find(*a.entry_job_id());
        const JobRecord* jb = b.queue().find(*b.entry_job_id());
        // identical workload, identical wall time
        EXPECT_NEAR(ja->end_time - ja->start_time, jb->end_time - jb->start_time, 1e-9);
        EXPECT_GT(b.node_seconds_billed(), a.node_seconds_billed());
    }
}

TEST(Deletion, IndexZeroCleanedUpLast) {
    ClusterSim sim(options_of(4, 8, 4), 5);
    sim.start();
    run_to_full(sim);
    sim.delete_cluster();
    sim.engine().run_until([&] { return sim.deletion_finished_at().has_value(); }, 100.0);
    std::vector<int> order;
    for (const auto& rec : sim.engine().log())
        if (rec.kind == EventKind::pod_terminating) order.push_back(rec.payload.at("index"));
    ASSERT_EQ(order, (std::vector<int>{3, 2, 1, 0}));
    EXPECT_TRUE(sim.pods().empty());
}

TEST(SaveRestore, QueueMovesAcrossSimulations) {
    // run jobs on a 4-node cluster, pause mid-flight, archive, and load the
    // archive into a separate 8-node simulation
    ClusterOptions small = options_of(4, 8, 4);
    ClusterSim a(small, 31);
    a.start();
    run_to_full(a);
    std::vector<JobId> ids;
    for (int i = 0; i < 5; ++i) {
        JobSpec s;
        s.nodes = 2;
        s.tasks_per_node = 4;
        s.work_units = 400.0;
        ids.push_back(a.submit_job(s).job_id);
    }
    a.engine().run_until_time(a.engine().now() + 10.0);
    a.pause_cmd();
    ArchiveSnapshot snap = a.save_cmd();
    EXPECT_EQ(snap.jobs.size(), 5u);

    std::stringstream archive;
    a.queue().write_archive(snap, archive);
    ArchiveSnapshot loaded = JobQueue::read_archive(archive);

    ClusterOptions big = options_of(8, 8, 8);
    ClusterSim b(big, 32);
    b.start();
    b.engine().run_until([&] { return b.cluster_full_time().has_value(); }, 100.0);
    ASSERT_FALSE(b.restore_cmd(loaded).has_value());
    for (JobId id : ids) ASSERT_NE(b.queue().find(id), nullptr) << "job " << id;
    b.engine().run_until([&] { return b.all_jobs_terminal(); }, 10000.0);
    for (JobId id : ids) EXPECT_EQ(b.queue().find(id)->state, JobState::completed);
}

// The scale loop feeds request_resize: sustained pending demand walks the
// cluster up to max_size through the same validation path as manual resizes.
TEST(Autoscaling, ScaleLoopGrowsClusterUntilDemandIsMet) {
    ClusterOptions opts = options_of(2, 16, 16);
    ScalePolicy policy;
    policy.mode = ScaleMode::queue_depth;
    policy.target = 1.0;
    policy.check_interval = 15.0;
    policy.stabilization_window = 60.0;
    opts.scale = policy;
    ClusterSim sim(opts, 77);
    sim.start();
    run_to_full(sim);
    for (int i = 0; i < 4; ++i) {
        JobSpec spec;
        spec.nodes = 4;
        spec.tasks_per_node = 4;
        spec.work_units = 10000.0;
        sim.submit_job(spec);
    }
    sim.engine().run_until([&] { return sim.queue().pending_node_demand() == 0; }, 600.0);
    EXPECT_EQ(sim.queue().pending_node_demand(), 0);
    EXPECT_EQ(sim.spec().size, 16);  // grew stepwise to fit 4 x 4 nodes
    bool autoscaler_requested = false;
    for (const auto& rec : sim.engine().log())
        if (rec.kind == EventKind::resize_requested &&
            rec.payload.value("source", "") == "autoscaler")
            autoscaler_requested = true;
    EXPECT_TRUE(autoscaler_requested);
}

TEST(Determinism, SameSeedSameEventLog) {
    auto trace = [](std::uint64_t seed) {
        ClusterOptions opts = options_of(4, 8, 4);
        opts.pod_create = LatencyModel{"pod_create", 1.0, 0.3, Distribution::uniform};
        opts.spec.entry_command = "work";
        JobSpec entry;
        entry.nodes = 4;
        entry.tasks_per_node = 4;
        entry.work_units = 100.0;
        opts.entry_job = entry;
        ClusterSim sim(opts, seed);
        sim.start();
        sim.engine().run_until(
            [&] { return sim.entry_job_id().has_value() && sim.all_jobs_terminal(); }, 1000.0);
        sim.delete_cluster();
        sim.engine().run_until([&] { return sim.deletion_finished_at().has_value(); }, 100.0);
        std::ostringstream os;
        sim.engine().write_log(os);
        return os.str();
    };
    EXPECT_EQ(trace(1234), trace(1234));
    EXPECT_NE(trace(1234), trace(1235));
}

}  // namespace
