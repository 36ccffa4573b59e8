#pragma once

#include <string>

#include "rcache/backend.hpp"

namespace rcache {

// Production client for OpenAI-style chat-completion servers.
//
// Retries network errors, 5xx and 429 up to retry_limit times with
// exponential backoff; other 4xx responses fail immediately. A 400/422 whose
// body names max_tokens is reported as BudgetRejected.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(BackendConfig config);

    CompletionResult complete(const CompletionRequest& request) override;

    [[nodiscard]] bool supports_assistant_prefix() const override { return config_.assistant_prefix_continuation; }
    [[nodiscard]] const BackendConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::size_t peak_in_flight() const { return limiter_.peak(); }

private:
    BackendConfig config_;
    std::string origin_;       // scheme://host[:port]
    std::string path_prefix_;  // e.g. "/v1"
    InFlightLimiter limiter_;
};

}  // namespace rcache
