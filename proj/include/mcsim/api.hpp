#pragma once

#include <map>
#include <optional>
#include <string>

#include "mcsim/cluster.hpp"
#include "mcsim/core.hpp"
#include "mcsim/util.hpp"

namespace mcsim {

struct AuthToken {
    std::string token;
    std::string user;
    SimTime issued_at = 0;
    SimTime expires_at = 0;  // accepted only while now < expires_at
};

struct ApiRequest {
    std::string method;  // GET, POST, DELETE, PATCH
    std::string path;
    std::map<std::string, std::string> headers;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    json body;
};

// The lead broker's RESTful surface. One handler serves both the in-process
// harness and the socket server; every mutation lands on the engine thread,
// so the API-visible queue state always equals the engine state.
class ApiHandler {
  public:
    explicit ApiHandler(ClusterSim& sim, double token_ttl_seconds = 3600.0)
        : sim_(sim), ttl_(token_ttl_seconds) {}

    bool auth_enabled() const { return !sim_.spec().users.empty(); }

    ApiResponse handle(const ApiRequest& req) {
        if (req.method == "POST" && req.path == "/v1/auth/token") return auth_token(req);
        if (req.path == "/v1/metrics" && req.method == "GET") return metrics();

        std::optional<std::string> user;
        if (auth_enabled()) {
            user = user_for_token(bearer_of(req));
            if (!user) return error(401, "invalid_or_expired_token");
        } else {
            user = "default";
        }

        if (req.method == "POST" && req.path == "/v1/jobs") return submit(req, *user);
        if (req.method == "GET" && req.path == "/v1/jobs") return list_jobs();
        if (req.method == "PATCH" && req.path == "/v1/cluster/size") return patch_size(req);
        if (req.path.rfind("/v1/jobs/", 0) == 0) {
            JobId id = 0;
            try {
                id = std::stoull(req.path.substr(9));
            } catch (...) {
                return error(400, "bad_job_id");
            }
            if (req.method == "GET") return job_info(id);
            if (req.method == "DELETE") return cancel(id, *user);
        }
        return error(404, "unknown_endpoint");
    }

  private:
    ApiResponse auth_token(const ApiRequest& req) {
        if (!auth_enabled()) return error(403, "auth_disabled_misuse");
        auto it = req.headers.find("Authorization");
        if (it == req.headers.end() || it->second.rfind("Basic ", 0) != 0)
            return error(401, "invalid_credentials");
        std::string decoded = base64_decode(it->second.substr(6));
        auto colon = decoded.find(':');
        if (colon == std::string::npos) return error(401, "invalid_credentials");
        std::string username = decoded.substr(0, colon);
        std::string password = decoded.substr(colon + 1);

        const UserCredential* cred = nullptr;
        const auto& users = sim_.spec().users;
        if (sim_.spec().auth_mode == AuthMode::single_user) {
            // single-user mode accepts exactly the one configured identity
            if (!users.empty() && users.front().username == username) cred = &users.front();
        } else {
            for (const auto& u : users)
                if (u.username == username) cred = &u;
        }
        if (!cred || !cred->check(password)) return error(401, "invalid_credentials");

        AuthToken tok;
        tok.token = to_hex(sim_.engine().rand_u64()) + to_hex(sim_.engine().rand_u64());
        tok.user = username;
        tok.issued_at = sim_.engine().now();
        tok.expires_at = tok.issued_at + ttl_;
        tokens_[tok.token] = tok;
        return {200,
                {{"token", tok.token}, {"user", tok.user}, {"expires_at", tok.expires_at}}};
    }

    std::string bearer_of(const ApiRequest& req) const {
        auto it = req.headers.find("Authorization");
        if (it == req.headers.end() || it->second.rfind("Bearer ", 0) != 0) return {};
        return it->second.substr(7);
    }

    std::optional<std::string> user_for_token(const std::string& token) {
        auto it = tokens_.find(token);
        if (it == tokens_.end()) return std::nullopt;
        if (sim_.engine().now() >= it->second.expires_at) return std::nullopt;
        return it->second.user;
    }

    ApiResponse submit(const ApiRequest& req, const std::string& user) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (...) {
            return error(400, "invalid_body");
        }
        if (!body.contains("nodes") || !body.contains("tasks_per_node"))
            return error(400, "invalid_body");
        JobSpec spec;
        spec.user = user;  // ownership comes from the token, not the body
        spec.nodes = body.value("nodes", 0);
        spec.tasks_per_node = body.value("tasks_per_node", 0);
        spec.work_units = body.value("work_units", 1.0);
        spec.serial_fraction = body.value("serial_fraction", 0.0);
        spec.burstable = body.value("burstable", false);
        auto res = sim_.submit_job(spec);
        if (res.error) return error(400, "invalid_spec");
        return {201, {{"job_id", res.job_id}}};
    }

    ApiResponse list_jobs() const {
        json jobs = json::array();
        for (const auto& [id, job] : sim_.queue().jobs()) jobs.push_back(job_json(job));
        return {200, {{"jobs", jobs}}};
    }

    ApiResponse job_info(JobId id) const {
        const JobRecord* rec = sim_.queue().find(id);
        if (!rec) return error(404, "unknown_job");
        return {200, job_json(*rec)};
    }

    ApiResponse cancel(JobId id, const std::string& user) {
        const JobRecord* rec = sim_.queue().find(id);
        if (!rec) return error(404, "unknown_job");
        // shared queue, but users only own their jobs
        if (auth_enabled() && rec->spec.user != user) return error(403, "not_job_owner");
        auto err = sim_.cancel_job(id);
        if (err == CancelError::not_found) return error(404, "unknown_job");
        if (err == CancelError::not_cancelable) return error(409, "not_cancelable");
        return {200, {{"job_id", id}, {"state", "canceled"}}};
    }

    ApiResponse patch_size(const ApiRequest& req) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (...) {
            return error(400, "invalid_body");
        }
        if (!body.contains("size") || !body["size"].is_number_integer())
            return error(400, "invalid_body");
        auto out = sim_.request_resize_cmd(body["size"].get<int>(), "api");
        if (!out.accepted) return error(409, "size_out_of_bounds");
        return {200, {{"size", sim_.spec().size}, {"generation", out.generation}}};
    }

    ApiResponse metrics() const {
        MetricSample s = sim_.metric_sample();
        return {200,
                {{"at", s.at},
                 {"current_utilization", s.current_utilization},
                 {"pending_node_demand", s.pending_node_demand},
                 {"queue_length", s.queue_length}}};
    }

    static ApiResponse error(int status, const std::string& what) {
        return {status, {{"error", what}}};
    }

    static json job_json(const JobRecord& job) {
        return {{"job_id", job.spec.job_id},
                {"user", job.spec.user},
                {"nodes", job.spec.nodes},
                {"tasks_per_node", job.spec.tasks_per_node},
                {"burstable", job.spec.burstable},
                {"state", to_string(job.state)},
                {"submit_time", job.submit_time},
                {"remaining_fraction", job.remaining_fraction}};
    }

    ClusterSim& sim_;
    double ttl_;
    std::map<std::string, AuthToken> tokens_;
};

}  // namespace mcsim
