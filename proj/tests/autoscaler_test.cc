#include "mcsim/autoscaler.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mcsim;

namespace {

TEST(DesiredReplicas, RatioRuleMatchesDirectArithmetic) {
    // ceil(4 * 1.0/0.5) = 8
    EXPECT_EQ(desired_replicas(4, 1.0, 0.5, 0.1, 1, 64), 8);
    // ceil(8 * (16/8)/1.0) = 16
    EXPECT_EQ(desired_replicas(8, 2.0, 1.0, 0.1, 1, 64), 16);
}

TEST(DesiredReplicas, WithinToleranceBandReturnsCurrent) {
    for (double ratio : {0.9, 0.95, 1.0, 1.05, 1.1})
        EXPECT_EQ(desired_replicas(10, ratio, 1.0, 0.1, 1, 64), 10) << ratio;
}

TEST(DesiredReplicas, ClampsToBounds) {
    EXPECT_EQ(desired_replicas(64, 10.0, 1.0, 0.1, 1, 64), 64);
    EXPECT_EQ(desired_replicas(4, 0.0, 1.0, 0.1, 1, 64), 1);
}

TEST(DesiredReplicas, ExhaustiveGridAgainstFormula) {
    for (int current = 1; current <= 64; ++current) {
        for (double ratio : {0.5, 0.9, 1.0, 1.1, 2.0}) {
            int got = desired_replicas(current, ratio, 1.0, 0.1, 1, 64);
            int want;
            if (std::abs(ratio - 1.0) <= 0.1 + 1e-9) {
                want = current;
            } else {
                want = static_cast<int>(std::ceil(current * ratio));
                want = std::min(64, std::max(1, want));
            }
            ASSERT_EQ(got, want) << "current=" << current << " ratio=" << ratio;
        }
    }
}

ScalePolicy queue_policy() {
    ScalePolicy p;
    p.mode = ScaleMode::queue_depth;
    p.target = 1.0;
    p.tolerance = 0.1;
    p.check_interval = 15.0;
    p.stabilization_window = 60.0;
    p.min_size = 1;
    p.max_size = 64;
    return p;
}

MetricSample sample_at(SimTime t, int demand, double util = 0.0) {
    MetricSample s;
    s.at = t;
    s.pending_node_demand = demand;
    s.current_utilization = util;
    s.queue_length = demand;
    return s;
}

TEST(Autoscaler, UpscaleAppliesImmediately) {
    Autoscaler scaler(queue_policy());
    auto decision = scaler.decide(sample_at(15.0, 16), 8);
    ASSERT_TRUE(decision.has_value());
    EXPECT_EQ(*decision, 16);  // ceil(8 * (16/8)/1.0)
}

TEST(Autoscaler, DownscaleWaitsForTheFullWindow) {
    Autoscaler scaler(queue_policy());
    // empty queue: the recommendation is the floor, but it only fires once
    // agreeing decisions span the stabilization window
    EXPECT_FALSE(scaler.decide(sample_at(15.0, 0), 8).has_value());
    EXPECT_FALSE(scaler.decide(sample_at(30.0, 0), 8).has_value());
    EXPECT_FALSE(scaler.decide(sample_at(45.0, 0), 8).has_value());
    auto decision = scaler.decide(sample_at(60.0, 0), 8);
    ASSERT_TRUE(decision.has_value());
    EXPECT_EQ(*decision, 1);
}

// A transient spike inside the window resets agreement: no flapping.
// Windowed-agreement oracle: the spike decision at t=45 sits inside the
// 60 s lookback for every check through t=105, so the first legal
// downscale is at t=120.
TEST(Autoscaler, TransientSpikeBlocksDownscale) {
    Autoscaler scaler(queue_policy());
    EXPECT_FALSE(scaler.decide(sample_at(15.0, 0), 8).has_value());
    EXPECT_FALSE(scaler.decide(sample_at(30.0, 0), 8).has_value());
    // spike: demand equal to current size is within tolerance -> desired = 8
    EXPECT_FALSE(scaler.decide(sample_at(45.0, 8), 8).has_value());
    for (double t : {60.0, 75.0, 90.0, 105.0})
        EXPECT_FALSE(scaler.decide(sample_at(t, 0), 8).has_value()) << t;
    auto decision = scaler.decide(sample_at(120.0, 0), 8);
    ASSERT_TRUE(decision.has_value());
    EXPECT_EQ(*decision, 1);
}

TEST(Autoscaler, DownscaleUsesLargestRecommendationInWindow) {
    Autoscaler scaler(queue_policy());
    EXPECT_FALSE(scaler.decide(sample_at(15.0, 4), 16).has_value());  // -> ceil(16*4/16)=4
    EXPECT_FALSE(scaler.decide(sample_at(30.0, 8), 16).has_value());  // -> 8
    EXPECT_FALSE(scaler.decide(sample_at(45.0, 4), 16).has_value());
    auto decision = scaler.decide(sample_at(60.0, 4), 16);
    ASSERT_TRUE(decision.has_value());
    EXPECT_EQ(*decision, 8);  // conservative: max over the window
}

TEST(Autoscaler, DisabledPolicyNeverRequests) {
    ScalePolicy p = queue_policy();
    p.enabled = false;
    Autoscaler scaler(p);
    for (int i = 1; i <= 20; ++i)
        EXPECT_FALSE(scaler.decide(sample_at(15.0 * i, 100), 8).has_value());
}

TEST(Autoscaler, QueueDepthMetricIsDemandPerNode) {
    Autoscaler scaler(queue_policy());
    EXPECT_DOUBLE_EQ(scaler.metric_of(sample_at(0.0, 6), 3), 2.0);  // 3 jobs x 2 nodes on 3
    EXPECT_DOUBLE_EQ(scaler.metric_of(sample_at(0.0, 0), 8), 0.0);
}

TEST(Autoscaler, UtilizationModeReadsUtilization) {
    ScalePolicy p = queue_policy();
    p.mode = ScaleMode::utilization;
    p.target = 0.5;
    Autoscaler scaler(p);
    auto decision = scaler.decide(sample_at(15.0, 0, 1.0), 4);
    ASSERT_TRUE(decision.has_value());
    EXPECT_EQ(*decision, 8);  // ceil(4 * 1.0/0.5)
}

// Sustained demand doubles the size every check until max_size: the
// geometric growth sequence under a constant metric/target ratio.
TEST(Autoscaler, SustainedDemandGrowsGeometricallyToMax) {
    Autoscaler scaler(queue_policy());
    int current = 4;
    std::vector<int> sizes;
    for (int step = 1; step <= 8; ++step) {
        // demand always twice the current size
        auto decision = scaler.decide(sample_at(15.0 * step, 2 * current), current);
        if (decision) current = *decision;
        sizes.push_back(current);
    }
    EXPECT_EQ(sizes, (std::vector<int>{8, 16, 32, 64, 64, 64, 64, 64}));
}

}  // namespace
