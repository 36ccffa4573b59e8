#include "rcache/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "rcache/errors.hpp"

namespace rcache {

using nlohmann::json;

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)), limiter_(config_.max_in_flight) {
    config_.validate();
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("base_url needs a scheme: " + config_.base_url);
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        origin_ = config_.base_url;
    } else {
        origin_ = config_.base_url.substr(0, path_start);
        path_prefix_ = config_.base_url.substr(path_start);
    }
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

namespace {

bool retryable_status(int status) { return status == 429 || status >= 500; }

bool names_max_tokens(const std::string& body) {
    return body.find("max_tokens") != std::string::npos || body.find("max_completion_tokens") != std::string::npos;
}

}  // namespace

CompletionResult HttpBackend::complete(const CompletionRequest& request) {
    request.validate();
    InFlightLimiter::Slot slot(limiter_);

    const std::string body = to_wire_json(request, config_.model_name).dump();
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env_var.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    httplib::Client client(origin_);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config_.timeout_seconds));
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                  timeout.count() % 1000000);
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                            timeout.count() % 1000000);
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                             timeout.count() % 1000000);

    std::string last_failure;
    for (int attempt = 0; attempt <= config_.retry_limit; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config_.backoff_base * (1LL << (attempt - 1)));

        const auto started = std::chrono::steady_clock::now();
        auto response = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
        if (!response) {
            last_failure = "network error: " + httplib::to_string(response.error());
            continue;
        }
        if (retryable_status(response->status)) {
            last_failure = "status " + std::to_string(response->status) + ": " + response->body;
            continue;
        }
        if (response->status < 200 || response->status >= 300) {
            if ((response->status == 400 || response->status == 422) && names_max_tokens(response->body)) {
                throw BudgetRejected("server refused max_tokens=" + std::to_string(request.params.max_tokens) + ": " +
                                     response->body);
            }
            throw BackendRejected(response->status, response->body);
        }
        try {
            CompletionResult result = from_wire_json(json::parse(response->body));
            result.latency_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
            return result;
        } catch (const json::exception& e) {
            throw BackendRejected(response->status, std::string("malformed response: ") + e.what());
        }
    }
    throw BackendUnreachable("giving up after " + std::to_string(config_.retry_limit + 1) +
                             " attempts; last failure: " + last_failure);
}

}  // namespace rcache
