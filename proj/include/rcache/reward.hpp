#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

namespace rcache {

enum class RewardReason { correct, wrong, no_answer };

std::string_view to_string(RewardReason reason);

struct RewardOutcome {
    double reward = 0.0;
    std::optional<std::string> extracted;
    bool terminated = false;
    RewardReason reason = RewardReason::no_answer;
};

// Canonical spelling of a final answer: trims, strips math delimiters and
// spacing macros, rewrites \dfrac/\frac/sqrt spellings, removes thousands
// separators and insignificant whitespace. Idempotent.
std::string normalize_answer(std::string_view answer);

// Exact rational value of a normalized answer ("3", "-0.25", "1/2",
// "(3)/(4)"), if it is one.
std::optional<boost::multiprecision::cpp_rational> parse_rational(std::string_view normalized);

// Equality ladder: normalized string equality, then exact rational equality.
bool answers_equivalent(std::string_view a, std::string_view b);

// Outcome reward r(y, z): 1.0 iff the last boxed answer in the trace matches y.
RewardOutcome score(std::string_view trace, std::string_view answer);

}  // namespace rcache
