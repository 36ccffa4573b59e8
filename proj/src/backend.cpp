#include "rcache/backend.hpp"

#include <cctype>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "rcache/errors.hpp"

namespace rcache {

using nlohmann::json;

void CompletionRequest::validate() const {
    if (messages.empty()) throw InvalidArgument("completion request has no messages");
    if (messages.front().role != Role::system) {
        throw InvalidArgument("completion request must start with a system message");
    }
    params.validate();
}

std::string CompletionRequest::joined_contents() const {
    std::string joined;
    for (const auto& m : messages) {
        if (!joined.empty()) joined += '\n';
        joined += m.content;
    }
    return joined;
}

std::string_view to_string(FinishReason reason) {
    switch (reason) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

FinishReason finish_reason_from_string(std::string_view text) {
    if (text == "stop" || text == "eos" || text == "stop_sequence") return FinishReason::stop;
    if (text == "length" || text == "max_tokens") return FinishReason::length;
    return FinishReason::error;
}

void BackendConfig::validate() const {
    if (max_in_flight < 1) throw InvalidArgument("max_in_flight must be >= 1");
    if (retry_limit < 0) throw InvalidArgument("retry_limit must be >= 0");
    if (timeout_seconds <= 0) throw InvalidArgument("timeout_seconds must be positive");
}

InFlightLimiter::InFlightLimiter(std::size_t limit) : limit_(limit) {
    if (limit_ < 1) throw InvalidArgument("in-flight limit must be >= 1");
}

void InFlightLimiter::acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
}

void InFlightLimiter::release() {
    {
        std::lock_guard lock(mutex_);
        --in_flight_;
    }
    cv_.notify_one();
}

std::size_t InFlightLimiter::peak() const {
    std::lock_guard lock(mutex_);
    return peak_;
}

std::size_t InFlightLimiter::current() const {
    std::lock_guard lock(mutex_);
    return in_flight_;
}

std::vector<TokenSpan> whitespace_token_spans(std::string_view text) {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        const std::size_t begin = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        spans.push_back({begin, i});
    }
    return spans;
}

TokenCount whitespace_token_count(std::string_view text) {
    return static_cast<TokenCount>(whitespace_token_spans(text).size());
}

std::string whitespace_token_prefix(std::string_view text, TokenCount n) {
    const auto spans = whitespace_token_spans(text);
    if (n <= 0) return {};
    if (static_cast<std::size_t>(n) >= spans.size()) return std::string(text);
    return std::string(text.substr(0, spans[static_cast<std::size_t>(n) - 1].end));
}

std::string whitespace_token_suffix(std::string_view text, TokenCount n) {
    const auto spans = whitespace_token_spans(text);
    if (n <= 0 || spans.empty()) return {};
    const std::size_t take = std::min(spans.size(), static_cast<std::size_t>(n));
    return std::string(text.substr(spans[spans.size() - take].begin));
}

json to_wire_json(const CompletionRequest& request, const std::string& model) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    json body{{"model", model},
              {"messages", std::move(messages)},
              {"max_tokens", request.params.max_tokens},
              {"temperature", request.params.temperature},
              {"top_p", request.params.top_p}};
    if (request.params.seed) body["seed"] = *request.params.seed;
    if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
    return body;
}

CompletionResult from_wire_json(const json& response) {
    const auto& choice = response.at("choices").at(0);
    CompletionResult result;
    const auto& content = choice.at("message").at("content");
    result.content = content.is_null() ? std::string{} : content.get<std::string>();
    const auto& finish = choice.at("finish_reason");
    result.finish_reason = finish.is_null() ? FinishReason::error : finish_reason_from_string(finish.get<std::string>());
    result.completion_tokens = response.at("usage").at("completion_tokens").get<TokenCount>();
    return result;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error("HashFailure", "SHA-256 digest failed");
    }
    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < length; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
    return out.str();
}

std::string request_hash(const CompletionRequest& request) {
    // Model name is excluded: a cache is tied to one backend configuration.
    return sha256_hex(to_wire_json(request, "").dump());
}

}  // namespace rcache
