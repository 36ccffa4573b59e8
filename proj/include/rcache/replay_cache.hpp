#pragma once

#include <filesystem>
#include <mutex>
#include <string>
#include <unordered_map>

#include "rcache/backend.hpp"

namespace rcache {

enum class CacheMode {
    record,  // always call through, append results
    replay,  // serve from cache only; a miss is an error
    auto_,   // serve hits, record misses
};

// Record/replay wrapper keyed by request_hash(). Cache file is JSONL of
// {request_hash, content, completion_tokens, finish_reason}; the first
// record for a hash wins.
class RecordReplayBackend final : public Backend {
public:
    RecordReplayBackend(Backend* inner, std::filesystem::path cache_path, CacheMode mode);

    CompletionResult complete(const CompletionRequest& request) override;

    [[nodiscard]] bool supports_assistant_prefix() const override {
        return inner_ != nullptr ? inner_->supports_assistant_prefix() : true;
    }
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::size_t hits() const;

private:
    struct Cached {
        std::string content;
        TokenCount completion_tokens;
        FinishReason finish_reason;
    };

    Backend* inner_;
    std::filesystem::path path_;
    CacheMode mode_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, Cached> entries_;
    std::size_t hits_ = 0;
};

}  // namespace rcache
