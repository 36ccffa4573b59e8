#include "rcache/replay_cache.hpp"

#include <fstream>

#include "rcache/errors.hpp"

namespace rcache {

using nlohmann::json;

RecordReplayBackend::RecordReplayBackend(Backend* inner, std::filesystem::path cache_path, CacheMode mode)
    : inner_(inner), path_(std::move(cache_path)), mode_(mode) {
    if (mode_ != CacheMode::replay && inner_ == nullptr) {
        throw InvalidArgument("record mode needs an inner backend");
    }
    std::ifstream in(path_);
    if (!in) {
        if (mode_ == CacheMode::replay) throw IoError("replay cache not found: " + path_.string());
        return;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            Cached entry{j.at("content").get<std::string>(), j.at("completion_tokens").get<TokenCount>(),
                         finish_reason_from_string(j.at("finish_reason").get<std::string>())};
            entries_.try_emplace(j.at("request_hash").get<std::string>(), std::move(entry));
        } catch (const json::exception& e) {
            throw IoError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

CompletionResult RecordReplayBackend::complete(const CompletionRequest& request) {
    const std::string hash = request_hash(request);
    if (mode_ != CacheMode::record) {
        std::lock_guard lock(mutex_);
        if (auto it = entries_.find(hash); it != entries_.end()) {
            ++hits_;
            return CompletionResult{it->second.content, it->second.completion_tokens, it->second.finish_reason, {}};
        }
        if (mode_ == CacheMode::replay) throw ReplayMiss(hash);
    }

    CompletionResult result = inner_->complete(request);

    std::lock_guard lock(mutex_);
    if (entries_.try_emplace(hash, Cached{result.content, result.completion_tokens, result.finish_reason}).second) {
        std::ofstream out(path_, std::ios::app);
        if (!out) throw IoError("cannot append to replay cache " + path_.string());
        out << json{{"request_hash", hash},
                    {"content", result.content},
                    {"completion_tokens", result.completion_tokens},
                    {"finish_reason", to_string(result.finish_reason)}}
                   .dump()
            << '\n';
    }
    return result;
}

std::size_t RecordReplayBackend::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::size_t RecordReplayBackend::hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
}

}  // namespace rcache
