#include "mcsim/api.hpp"

#include <gtest/gtest.h>

#include "mcsim/api_server.hpp"

using namespace mcsim;

namespace {

ClusterOptions tenant_cluster() {
    ClusterOptions opts;
    opts.spec.name = "mc";
    opts.spec.size = 4;
    opts.spec.max_size = 8;
    opts.spec.pod_resources = {2, 4, 4096};
    opts.spec.auth_mode = AuthMode::multi_user;
    opts.spec.users.push_back(UserCredential::make("alice", "wonderland"));
    opts.spec.users.push_back(UserCredential::make("bob", "builder"));
    for (int i = 0; i < 8; ++i) opts.catalog.push_back({i, "node-" + std::to_string(i), {2, 4, 4096}});
    return opts;
}

ApiRequest basic_auth(const std::string& user, const std::string& password) {
    ApiRequest req;
    req.method = "POST";
    req.path = "/v1/auth/token";
    req.headers["Authorization"] = "Basic " + base64_encode(user + ":" + password);
    return req;
}

ApiRequest with_token(const std::string& method, const std::string& path,
                      const std::string& token, const std::string& body = "") {
    ApiRequest req;
    req.method = method;
    req.path = path;
    req.headers["Authorization"] = "Bearer " + token;
    req.body = body;
    return req;
}

struct ApiFixture : ::testing::Test {
    ApiFixture() : sim(tenant_cluster(), 77), api(sim) {
        sim.start();
        sim.engine().run_until([&] { return sim.cluster_full_time().has_value(); }, 100.0);
    }

    std::string token_for(const std::string& user, const std::string& password) {
        auto res = api.handle(basic_auth(user, password));
        EXPECT_EQ(res.status, 200);
        return res.body.value("token", "");
    }

    ClusterSim sim;
    ApiHandler api;
};

TEST_F(ApiFixture, ValidCredentialsYieldExpiringToken) {
    auto res = api.handle(basic_auth("alice", "wonderland"));
    ASSERT_EQ(res.status, 200);
    EXPECT_FALSE(res.body.value("token", "").empty());
    EXPECT_DOUBLE_EQ(res.body.value("expires_at", 0.0), sim.engine().now() + 3600.0);
}

TEST_F(ApiFixture, WrongPasswordRejected) {
    EXPECT_EQ(api.handle(basic_auth("alice", "nope")).status, 401);
    EXPECT_EQ(api.handle(basic_auth("mallory", "x")).status, 401);
}

TEST_F(ApiFixture, ExpiredTokenMustReauthenticate) {
    std::string token = token_for("alice", "wonderland");
    auto ok = api.handle(with_token("POST", "/v1/jobs", token,
                                    R"({"nodes":1,"tasks_per_node":1})"));
    EXPECT_EQ(ok.status, 201);
    // advance the simulated clock past the TTL and replay
    sim.engine().advance_to(sim.engine().now() + 3601.0);
    auto replay = api.handle(with_token("POST", "/v1/jobs", token,
                                        R"({"nodes":1,"tasks_per_node":1})"));
    EXPECT_EQ(replay.status, 401);
}

TEST_F(ApiFixture, SubmitPaperGeometryJob) {
    std::string token = token_for("alice", "wonderland");
    auto res = api.handle(with_token("POST", "/v1/jobs", token,
                                     R"({"nodes":8,"tasks_per_node":94,"work_units":1000})"));
    ASSERT_EQ(res.status, 201);
    JobId id = res.body.at("job_id").get<JobId>();
    auto info = api.handle(with_token("GET", "/v1/jobs/" + std::to_string(id), token));
    ASSERT_EQ(info.status, 200);
    EXPECT_EQ(info.body.at("nodes").get<int>(), 8);
    EXPECT_EQ(info.body.at("user").get<std::string>(), "alice");
}

TEST_F(ApiFixture, CancelOwnRunningJob) {
    std::string token = token_for("alice", "wonderland");
    auto res = api.handle(with_token("POST", "/v1/jobs", token,
                                     R"({"nodes":2,"tasks_per_node":2,"work_units":1000})"));
    JobId id = res.body.at("job_id").get<JobId>();
    sim.engine().run_until(
        [&] { return sim.queue().find(id)->state == JobState::running; }, 100.0);
    auto del = api.handle(with_token("DELETE", "/v1/jobs/" + std::to_string(id), token));
    EXPECT_EQ(del.status, 200);
    EXPECT_EQ(sim.queue().find(id)->state, JobState::canceled);
}

TEST_F(ApiFixture, CrossUserCancelForbidden) {
    std::string alice = token_for("alice", "wonderland");
    std::string bob = token_for("bob", "builder");
    auto res = api.handle(with_token("POST", "/v1/jobs", alice,
                                     R"({"nodes":1,"tasks_per_node":1})"));
    JobId id = res.body.at("job_id").get<JobId>();
    auto del = api.handle(with_token("DELETE", "/v1/jobs/" + std::to_string(id), bob));
    EXPECT_EQ(del.status, 403);  // shared queue, but not bob's job
    EXPECT_NE(sim.queue().find(id)->state, JobState::canceled);
}

TEST_F(ApiFixture, UnknownJobIs404) {
    std::string token = token_for("alice", "wonderland");
    EXPECT_EQ(api.handle(with_token("GET", "/v1/jobs/999", token)).status, 404);
    EXPECT_EQ(api.handle(with_token("DELETE", "/v1/jobs/999", token)).status, 404);
}

TEST_F(ApiFixture, ResizeSharesTheValidationPathWithDirectRequests) {
    std::string token = token_for("alice", "wonderland");
    // shared test vector: API PATCH and the direct resize path must agree
    for (int size : {-1, 0, 1, 3, 8, 9, 200}) {
        ClusterSim probe(tenant_cluster(), 78);
        probe.start();
        bool direct_ok = probe.request_resize_cmd(size, "cli").accepted;
        auto patch = api.handle(with_token("PATCH", "/v1/cluster/size", token,
                                           json{{"size", size}}.dump()));
        EXPECT_EQ(patch.status == 200, direct_ok) << "size " << size;
        if (patch.status != 200) EXPECT_EQ(patch.status, 409);
    }
}

TEST_F(ApiFixture, ResizeToZeroIs409) {
    std::string token = token_for("alice", "wonderland");
    auto res = api.handle(with_token("PATCH", "/v1/cluster/size", token, R"({"size":0})"));
    EXPECT_EQ(res.status, 409);
}

TEST_F(ApiFixture, MetricsEndpointNeedsNoToken) {
    ApiRequest req;
    req.method = "GET";
    req.path = "/v1/metrics";
    auto res = api.handle(req);
    ASSERT_EQ(res.status, 200);
    EXPECT_TRUE(res.body.contains("current_utilization"));
    EXPECT_TRUE(res.body.contains("pending_node_demand"));
    EXPECT_TRUE(res.body.contains("queue_length"));
    EXPECT_TRUE(res.body.contains("at"));
}

TEST_F(ApiFixture, MutationWithoutTokenRejected) {
    ApiRequest req;
    req.method = "POST";
    req.path = "/v1/jobs";
    req.body = R"({"nodes":1,"tasks_per_node":1})";
    EXPECT_EQ(api.handle(req).status, 401);
}

TEST(ApiAuthDisabled, TokenEndpointIsMisuse) {
    ClusterOptions opts = tenant_cluster();
    opts.spec.auth_mode = AuthMode::single_user;
    opts.spec.users.clear();  // auth disabled entirely
    ClusterSim sim(opts, 5);
    sim.start();
    ApiHandler api(sim);
    ApiRequest req;
    req.method = "POST";
    req.path = "/v1/auth/token";
    EXPECT_EQ(api.handle(req).status, 403);
    EXPECT_EQ(api.handle(req).body.value("error", ""), "auth_disabled_misuse");
}

TEST(ApiSingleUser, OnlyTheConfiguredIdentityWorks) {
    ClusterOptions opts = tenant_cluster();
    opts.spec.auth_mode = AuthMode::single_user;
    ClusterSim sim(opts, 5);
    sim.start();
    ApiHandler api(sim);
    EXPECT_EQ(api.handle(basic_auth("alice", "wonderland")).status, 200);
    EXPECT_EQ(api.handle(basic_auth("bob", "builder")).status, 401);  // not the single user
}

// Socket smoke test: the same handler behind a real local server.
TEST(ApiServerSocket, EndToEndOverLoopback) {
    ClusterSim sim(tenant_cluster(), 99);
    sim.start();
    sim.engine().run_until([&] { return sim.cluster_full_time().has_value(); }, 100.0);
    ApiServer server(sim, 18722, /*time_scale=*/0.0);
    ASSERT_TRUE(server.start());
    std::thread loop([&] { server.loop(); });

    httplib::Client client("127.0.0.1", 18722);
    client.set_read_timeout(5, 0);
    auto metrics = client.Get("/v1/metrics");
    ASSERT_TRUE(metrics);
    EXPECT_EQ(metrics->status, 200);

    httplib::Headers auth{{"Authorization", "Basic " + base64_encode("alice:wonderland")}};
    auto token_res = client.Post("/v1/auth/token", auth, "", "application/json");
    ASSERT_TRUE(token_res);
    ASSERT_EQ(token_res->status, 200);
    std::string token = json::parse(token_res->body).at("token");

    httplib::Headers bearer{{"Authorization", "Bearer " + token}};
    auto submit = client.Post("/v1/jobs", bearer, R"({"nodes":1,"tasks_per_node":1})",
                              "application/json");
    ASSERT_TRUE(submit);
    EXPECT_EQ(submit->status, 201);

    auto list = client.Get("/v1/jobs", bearer);
    ASSERT_TRUE(list);
    EXPECT_EQ(json::parse(list->body).at("jobs").size(), 1u);

    server.stop();
    loop.join();
}

}  // namespace
