#include "mcsim/core.hpp"

#include <gtest/gtest.h>

using namespace mcsim;

namespace {

MiniClusterSpec basic_spec(int size, int max_size) {
    MiniClusterSpec spec;
    spec.name = "mc";
    spec.size = size;
    spec.max_size = max_size;
    spec.pod_resources = {2, 48, 256000};
    return spec;
}

TEST(ValidateSpec, AcceptsExperimentSizes) {
    EXPECT_TRUE(validate_spec(basic_spec(8, 64)).empty());
    EXPECT_TRUE(validate_spec(basic_spec(16, 64)).empty());
    EXPECT_TRUE(validate_spec(basic_spec(32, 64)).empty());
    EXPECT_TRUE(validate_spec(basic_spec(64, 64)).empty());
}

TEST(ValidateSpec, AcceptsMinimalLeadOnlyCluster) {
    EXPECT_TRUE(validate_spec(basic_spec(1, 1)).empty());
}

TEST(ValidateSpec, RejectsSizeZero) {
    auto errors = validate_spec(basic_spec(0, 4));
    ASSERT_EQ(errors.size(), 1u);
    EXPECT_EQ(errors[0], SpecError::size_out_of_bounds);
}

TEST(ValidateSpec, RejectsSizeAboveMax) {
    auto errors = validate_spec(basic_spec(5, 4));
    ASSERT_EQ(errors.size(), 1u);
    EXPECT_EQ(errors[0], SpecError::size_out_of_bounds);
}

TEST(ValidateSpec, NamesEveryViolatedInvariant) {
    MiniClusterSpec spec = basic_spec(0, 4);
    spec.name = "";
    spec.auth_mode = AuthMode::multi_user;
    auto errors = validate_spec(spec);
    ASSERT_EQ(errors.size(), 3u);
    EXPECT_EQ(errors[0], SpecError::size_out_of_bounds);
    EXPECT_EQ(errors[1], SpecError::empty_name);
    EXPECT_EQ(errors[2], SpecError::missing_users);
}

TEST(ValidateSpec, MultiUserNeedsUsers) {
    MiniClusterSpec spec = basic_spec(2, 4);
    spec.auth_mode = AuthMode::multi_user;
    auto errors = validate_spec(spec);
    ASSERT_EQ(errors.size(), 1u);
    EXPECT_EQ(errors[0], SpecError::missing_users);
    spec.users.push_back(UserCredential::make("alice", "pw"));
    EXPECT_TRUE(validate_spec(spec).empty());
}

TEST(ClusterConfig, RankedHostsAlwaysMaxSizeLong) {
    for (int size : {1, 3, 8}) {
        auto cfg = make_cluster_config(basic_spec(size, 64), "s3cret");
        EXPECT_EQ(cfg.ranked_hosts.size(), 64u) << "size " << size;
    }
}

TEST(ClusterConfig, HostnameTemplate) {
    auto cfg = make_cluster_config(basic_spec(2, 4), "s");
    EXPECT_EQ(cfg.ranked_hosts[0], "mc-0");  // rank 0 is the lead
    EXPECT_EQ(cfg.ranked_hosts[3], "mc-3");
    EXPECT_EQ(hostname_for_rank("lammps", 17), "lammps-17");
}

TEST(UserCredential, SaltedHashRoundTrip) {
    auto cred = UserCredential::make("alice", "hunter2");
    EXPECT_TRUE(cred.check("hunter2"));
    EXPECT_FALSE(cred.check("hunter3"));
    EXPECT_NE(cred.password_hash, "hunter2");  // never stored in the clear
}

TEST(JobSpec, Validity) {
    JobSpec spec;
    spec.nodes = 8;
    spec.tasks_per_node = 94;
    spec.work_units = 1000;
    EXPECT_TRUE(spec.valid());
    EXPECT_EQ(spec.total_ranks(), 752);

    spec.nodes = 0;
    EXPECT_FALSE(spec.valid());
    spec.nodes = 1;
    spec.serial_fraction = 1.5;
    EXPECT_FALSE(spec.valid());
    spec.serial_fraction = 0.5;
    spec.work_units = 0;
    EXPECT_FALSE(spec.valid());
}

TEST(ResourceShape, TotalCores) {
    ResourceShape shape{2, 48, 256000};
    EXPECT_EQ(shape.total_cores(), 96);
    EXPECT_TRUE(shape.valid());
    ResourceShape degenerate{0, 4, 1};
    EXPECT_FALSE(degenerate.valid());
}

TEST(Base64, RoundTripAndBasicAuthShape) {
    EXPECT_EQ(base64_encode("alice:hunter2"), "YWxpY2U6aHVudGVyMg==");
    EXPECT_EQ(base64_decode("YWxpY2U6aHVudGVyMg=="), "alice:hunter2");
    for (const std::string s : {"", "a", "ab", "abc", "abcd"})
        EXPECT_EQ(base64_decode(base64_encode(s)), s);
}

}  // namespace
