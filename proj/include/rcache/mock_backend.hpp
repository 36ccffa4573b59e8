#pragma once

// Deterministic scripted backend for tests and offline runs.
//
// Each call to complete() scans the script in order and uses the first rule
// whose matcher is a substring of the request's concatenated message contents
// and which has not been consumed. Ordinary rules are consumed once; `repeat`
// rules stay available. Token counts use the whitespace fake tokenizer, so
// fixtures of exact lengths are easy to write.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "rcache/backend.hpp"

namespace rcache {

struct MockRule {
    std::string matcher;  // empty matches every request
    std::string content;
    // When nonempty, content = choices[seed mod size] (seed 0 when unset).
    std::vector<std::string> choices;
    // When set, content is computed from the request.
    std::function<std::string(const CompletionRequest&)> responder;
    bool repeat = false;
};

struct MockOptions {
    std::size_t max_in_flight = 64;
    bool assistant_prefix_continuation = true;
    std::chrono::milliseconds latency{0};
};

class MockBackend final : public Backend {
public:
    explicit MockBackend(std::vector<MockRule> script, MockOptions options = {});

    CompletionResult complete(const CompletionRequest& request) override;

    [[nodiscard]] bool supports_assistant_prefix() const override { return options_.assistant_prefix_continuation; }

    // Every request received, in arrival order.
    [[nodiscard]] std::vector<CompletionRequest> request_log() const;
    [[nodiscard]] std::size_t call_count() const;
    [[nodiscard]] std::size_t peak_in_flight() const { return limiter_.peak(); }
    [[nodiscard]] std::size_t remaining_rules() const;

private:
    std::vector<MockRule> script_;
    std::vector<bool> consumed_;
    MockOptions options_;
    InFlightLimiter limiter_;
    mutable std::mutex mutex_;
    std::vector<CompletionRequest> log_;
};

MockBackend mock_script(std::vector<std::pair<std::string, std::string>> responses, MockOptions options = {});

// Script file: JSONL of {"match": str?, "content": str | "choices": [str], "repeat": bool?}.
std::vector<MockRule> load_mock_script(const std::filesystem::path& path);

}  // namespace rcache
