#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "rcache/backend.hpp"
#include "rcache/mock_backend.hpp"
#include "rcache/templates.hpp"

namespace rcache::testing {

inline constexpr const char* kSummaryMarker = "Write an updated summary";

inline bool is_summary_request(const CompletionRequest& r) {
    return r.messages.front().content.find(kSummaryMarker) != std::string::npos;
}

// n distinct whitespace tokens with a recognisable prefix.
inline std::string words(const std::string& prefix, int n) {
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += prefix + std::to_string(i);
    }
    return out;
}

// Every reply is unique: the counter makes summaries and traces distinct
// strings, so dedup never collapses them.
struct Counter {
    std::atomic<int> next{0};
    int operator()() { return next.fetch_add(1); }
};

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() /
               ("rcache-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

}  // namespace rcache::testing
