#pragma once

#include <atomic>
#include <chrono>
#include <future>
#include <memory>
#include <thread>

#include <httplib.h>

#include "mcsim/api.hpp"

namespace mcsim {

// Demo-mode socket server. HTTP worker threads never touch engine state:
// each request is posted as a command and answered once the engine loop has
// applied it. The loop maps wall time onto the simulated clock so tokens can
// expire and periodic events fire while serving.
class ApiServer {
  public:
    ApiServer(ClusterSim& sim, int port, double time_scale = 1.0)
        : sim_(sim), handler_(sim), port_(port), time_scale_(time_scale) {
        auto forward = [this](const httplib::Request& req, httplib::Response& res) {
            ApiRequest api;
            api.method = req.method;
            api.path = req.path;
            if (req.has_header("Authorization"))
                api.headers["Authorization"] = req.get_header_value("Authorization");
            api.body = req.body;
            auto promise = std::make_shared<std::promise<ApiResponse>>();
            auto future = promise->get_future();
            sim_.engine().post_command([this, api, promise] {
                promise->set_value(handler_.handle(api));
            });
            ApiResponse out = future.get();
            res.status = out.status;
            res.set_content(out.body.dump(), "application/json");
        };
        server_.Post(R"(/v1/.*)", forward);
        server_.Get(R"(/v1/.*)", forward);
        server_.Delete(R"(/v1/.*)", forward);
        server_.Patch(R"(/v1/.*)", forward);
    }

    bool start() {
        if (!server_.bind_to_port("127.0.0.1", port_)) return false;
        listener_ = std::thread([this] { server_.listen_after_bind(); });
        return true;
    }

    // Blocking engine loop; call stop() from another thread to exit.
    void loop() {
        auto t0 = std::chrono::steady_clock::now();
        SimTime sim0 = sim_.engine().now();
        while (!stop_.load()) {
            double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            sim_.engine().advance_to(sim0 + elapsed * time_scale_);
            sim_.engine().drain_commands();
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }

    void stop() {
        stop_.store(true);
        server_.stop();
        if (listener_.joinable()) listener_.join();
    }

    ~ApiServer() {
        if (!stop_.load()) stop();
    }

  private:
    ClusterSim& sim_;
    ApiHandler handler_;
    httplib::Server server_;
    std::thread listener_;
    std::atomic<bool> stop_{false};
    int port_;
    double time_scale_;
};

}  // namespace mcsim
