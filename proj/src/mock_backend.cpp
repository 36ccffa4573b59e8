#include "rcache/mock_backend.hpp"

#include <fstream>
#include <thread>

#include "rcache/errors.hpp"

namespace rcache {

using nlohmann::json;

MockBackend::MockBackend(std::vector<MockRule> script, MockOptions options)
    : script_(std::move(script)),
      consumed_(script_.size(), false),
      options_(options),
      limiter_(options.max_in_flight) {}

namespace {

std::string apply_stop_sequences(std::string content, const std::vector<std::string>& stops) {
    std::size_t cut = content.size();
    for (const auto& stop : stops) {
        if (stop.empty()) continue;
        if (auto pos = content.find(stop); pos != std::string::npos) cut = std::min(cut, pos);
    }
    content.resize(cut);
    return content;
}

}  // namespace

CompletionResult MockBackend::complete(const CompletionRequest& request) {
    request.validate();
    InFlightLimiter::Slot slot(limiter_);
    if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);

    std::string content;
    {
        std::lock_guard lock(mutex_);
        log_.push_back(request);
        if (request.continues_assistant() && !options_.assistant_prefix_continuation) {
            throw BackendRejected(400, "assistant-prefix continuation is not supported");
        }
        const std::string haystack = request.joined_contents();
        std::size_t chosen = script_.size();
        for (std::size_t i = 0; i < script_.size(); ++i) {
            if (consumed_[i]) continue;
            if (haystack.find(script_[i].matcher) != std::string::npos) {
                chosen = i;
                break;
            }
        }
        if (chosen == script_.size()) {
            throw ScriptExhausted("no unconsumed mock rule matches request #" + std::to_string(log_.size()));
        }
        const MockRule& rule = script_[chosen];
        if (!rule.repeat) consumed_[chosen] = true;
        if (rule.responder) {
            content = rule.responder(request);
        } else if (!rule.choices.empty()) {
            const std::uint64_t seed = request.params.seed.value_or(0);
            content = rule.choices[seed % rule.choices.size()];
        } else {
            content = rule.content;
        }
    }

    content = apply_stop_sequences(std::move(content), request.stop_sequences);
    CompletionResult result;
    const TokenCount available = whitespace_token_count(content);
    const TokenCount max_tokens = request.params.max_tokens;
    if (available >= max_tokens) {
        result.content = whitespace_token_prefix(content, max_tokens);
        result.completion_tokens = max_tokens;
        result.finish_reason = FinishReason::length;
    } else {
        result.content = std::move(content);
        result.completion_tokens = available;
        result.finish_reason = FinishReason::stop;
    }
    return result;
}

std::vector<CompletionRequest> MockBackend::request_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::size_t MockBackend::call_count() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

std::size_t MockBackend::remaining_rules() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (std::size_t i = 0; i < script_.size(); ++i) {
        if (!consumed_[i]) ++n;
    }
    return n;
}

MockBackend mock_script(std::vector<std::pair<std::string, std::string>> responses, MockOptions options) {
    std::vector<MockRule> rules;
    rules.reserve(responses.size());
    for (auto& [matcher, content] : responses) {
        MockRule rule;
        rule.matcher = std::move(matcher);
        rule.content = std::move(content);
        rules.push_back(std::move(rule));
    }
    return MockBackend(std::move(rules), options);
}

std::vector<MockRule> load_mock_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mock script " + path.string());
    std::vector<MockRule> rules;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            MockRule rule;
            rule.matcher = j.value("match", std::string{});
            rule.repeat = j.value("repeat", false);
            if (auto it = j.find("choices"); it != j.end()) {
                rule.choices = it->get<std::vector<std::string>>();
                if (rule.choices.empty()) throw InvalidArgument("empty choices");
            } else {
                rule.content = j.at("content").get<std::string>();
            }
            rules.push_back(std::move(rule));
        } catch (const json::exception& e) {
            throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rules;
}

}  // namespace rcache
