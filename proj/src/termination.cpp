#include "rcache/termination.hpp"

#include "rcache/text_util.hpp"

namespace rcache {

namespace {

constexpr std::string_view kBoxed = "\\boxed";

// Index one past the brace that closes the '{' at `open`, or npos.
std::size_t matching_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size() && (s[i + 1] == '{' || s[i + 1] == '}')) {
            ++i;  // escaped brace
            continue;
        }
        if (s[i] == '{') {
            ++depth;
        } else if (s[i] == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

}  // namespace

Termination detect_termination(std::string_view trace) {
    Termination result;
    std::size_t pos = 0;
    while ((pos = trace.find(kBoxed, pos)) != std::string_view::npos) {
        std::size_t open = pos + kBoxed.size();
        while (open < trace.size() && (trace[open] == ' ' || trace[open] == '\t')) ++open;
        if (open >= trace.size() || trace[open] != '{') {
            pos += kBoxed.size();
            continue;
        }
        const std::size_t close = matching_brace(trace, open);
        if (close == std::string_view::npos) {
            pos += kBoxed.size();
            continue;
        }
        result.terminated = true;
        result.answer = std::string(trim(trace.substr(open + 1, close - open - 2)));
        pos = close;
    }
    return result;
}

}  // namespace rcache
