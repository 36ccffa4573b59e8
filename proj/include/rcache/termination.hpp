#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace rcache {

struct Termination {
    bool terminated = false;
    std::optional<std::string> answer;
};

// A trace has terminated once it contains a brace-balanced \boxed{...}. The
// answer is the trimmed content of the last top-level occurrence; a \boxed
// nested inside another belongs to the outer answer. Unbalanced openings are
// ignored.
Termination detect_termination(std::string_view trace);

}  // namespace rcache
