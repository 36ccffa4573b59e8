#pragma once

// Chat-completion backend abstraction.
//
// Wire format (POST {base_url}/chat/completions):
//   request:  {model, messages:[{role, content}], max_tokens, temperature, top_p, seed?, stop?}
//   response: choices[0].message.content, choices[0].finish_reason, usage.completion_tokens
// Only these fields are read or written; everything else is ignored.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rcache/core.hpp"

namespace rcache {

struct CompletionRequest {
    std::vector<ChatTurnMessage> messages;
    GenerationParams params;
    std::vector<std::string> stop_sequences;

    // Messages nonempty, first is the system message, params valid.
    void validate() const;

    // Concatenated message contents, the text mock matchers run against.
    [[nodiscard]] std::string joined_contents() const;

    // True when the last message is an assistant prefix to be continued.
    [[nodiscard]] bool continues_assistant() const {
        return !messages.empty() && messages.back().role == Role::assistant;
    }

    friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason);
FinishReason finish_reason_from_string(std::string_view text);

struct CompletionResult {
    std::string content;
    TokenCount completion_tokens = 0;
    FinishReason finish_reason = FinishReason::stop;
    std::optional<double> latency_ms;
};

struct BackendConfig {
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model_name = "default";
    std::string api_key_env_var = "OPENAI_API_KEY";
    std::size_t max_in_flight = 8;
    int retry_limit = 3;
    double timeout_seconds = 600.0;
    std::chrono::milliseconds backoff_base{200};
    // Whether the server continues a trailing assistant message. The minimal
    // wire format has no explicit flag for it, so it is opt-in.
    bool assistant_prefix_continuation = false;

    void validate() const;
};

class Backend {
public:
    virtual ~Backend() = default;

    virtual CompletionResult complete(const CompletionRequest& request) = 0;

    [[nodiscard]] virtual bool supports_assistant_prefix() const { return false; }
};

// Counting semaphore with instrumentation: tracks the peak number of
// concurrently held slots.
class InFlightLimiter {
public:
    explicit InFlightLimiter(std::size_t limit);

    class Slot {
    public:
        explicit Slot(InFlightLimiter& owner) : owner_(&owner) { owner_->acquire(); }
        ~Slot() { owner_->release(); }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        InFlightLimiter* owner_;
    };

    [[nodiscard]] std::size_t limit() const noexcept { return limit_; }
    [[nodiscard]] std::size_t peak() const;
    [[nodiscard]] std::size_t current() const;

private:
    void acquire();
    void release();

    std::size_t limit_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
    std::size_t peak_ = 0;
};

// The mock's documented fake tokenizer: maximal runs of non-whitespace.
struct TokenSpan {
    std::size_t begin;
    std::size_t end;
};

std::vector<TokenSpan> whitespace_token_spans(std::string_view text);
TokenCount whitespace_token_count(std::string_view text);

// First `n` tokens of text, preserving the original spacing between them.
std::string whitespace_token_prefix(std::string_view text, TokenCount n);

// Text from the start of the n-th-from-last token to the end.
std::string whitespace_token_suffix(std::string_view text, TokenCount n);

// Wire encoding.
nlohmann::json to_wire_json(const CompletionRequest& request, const std::string& model);
CompletionResult from_wire_json(const nlohmann::json& response);

// Stable hash of the request's semantic content (messages, params, stops):
// hex SHA-256 of its canonical JSON.
std::string request_hash(const CompletionRequest& request);

std::string sha256_hex(std::string_view data);

}  // namespace rcache
