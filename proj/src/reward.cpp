#include "rcache/reward.hpp"

#include <array>
#include <cctype>
#include <regex>

#include "rcache/errors.hpp"
#include "rcache/termination.hpp"
#include "rcache/text_util.hpp"

namespace rcache {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

std::string_view to_string(RewardReason reason) {
    switch (reason) {
        case RewardReason::correct: return "correct";
        case RewardReason::wrong: return "wrong";
        case RewardReason::no_answer: return "no_answer";
    }
    return "no_answer";
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    if (from.empty()) return;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Position one past the '}' matching the '{' at `open`, or npos.
std::size_t close_of(const std::string& s, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        if (s[i] == '}' && --depth == 0) return i + 1;
    }
    return std::string::npos;
}

bool is_simple(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!is_alnum(c) && c != '.') return false;
    }
    return true;
}

std::string parenthesize(std::string_view s) {
    return is_simple(s) ? std::string(s) : "(" + std::string(s) + ")";
}

// \text{X}, \mathrm{X}, \textbf{X}, \mbox{X} -> X
void unwrap_text_macros(std::string& s) {
    for (std::string_view macro : {"\\text", "\\mathrm", "\\textbf", "\\mbox", "\\mathbf"}) {
        std::size_t pos = 0;
        while ((pos = s.find(macro, pos)) != std::string::npos) {
            const std::size_t open = pos + macro.size();
            if (open >= s.size() || s[open] != '{') {
                pos = open;
                continue;
            }
            const std::size_t close = close_of(s, open);
            if (close == std::string::npos) break;
            s = s.substr(0, pos) + s.substr(open + 1, close - open - 2) + s.substr(close);
        }
    }
}

// \frac{a}{b} -> a/b (parenthesized when compound); \frac12 -> 1/2.
void rewrite_fractions(std::string& s) {
    constexpr std::string_view macro = "\\frac";
    std::size_t pos = 0;
    while ((pos = s.find(macro, pos)) != std::string::npos) {
        std::size_t i = pos + macro.size();
        auto take_arg = [&](std::size_t& at) -> std::optional<std::string> {
            if (at >= s.size()) return std::nullopt;
            if (s[at] == '{') {
                const std::size_t close = close_of(s, at);
                if (close == std::string::npos) return std::nullopt;
                std::string arg = s.substr(at + 1, close - at - 2);
                at = close;
                return arg;
            }
            if (std::isdigit(static_cast<unsigned char>(s[at])) || std::isalpha(static_cast<unsigned char>(s[at]))) {
                return std::string(1, s[at++]);
            }
            return std::nullopt;
        };
        std::size_t at = i;
        auto num = take_arg(at);
        auto den = num ? take_arg(at) : std::nullopt;
        if (!num || !den) {
            pos = i;
            continue;
        }
        const std::string replacement = parenthesize(*num) + "/" + parenthesize(*den);
        s.replace(pos, at - pos, replacement);
        pos += replacement.size();
    }
}

// \sqrt3 / \sqrt 3 -> \sqrt{3}; sqrt(x) -> \sqrt{x}
void rewrite_radicals(std::string& s) {
    static const std::regex bare_macro(R"(\\sqrt\s*([0-9]+|[A-Za-z]))");
    s = std::regex_replace(s, bare_macro, "\\sqrt{$1}");
    static const std::regex function_form(R"((^|[^\\A-Za-z])sqrt\(([^()]*)\))");
    s = std::regex_replace(s, function_form, "$1\\sqrt{$2}");
}

void remove_thousands_separators(std::string& s) {
    replace_all(s, "{,}", "");
    static const std::regex grouped(R"((^|[^0-9.])([0-9]{1,3})((?:,[0-9]{3})+)(?![0-9]))");
    std::smatch m;
    std::string out;
    auto begin = s.cbegin();
    while (std::regex_search(begin, s.cend(), m, grouped)) {
        out.append(begin, m[0].first);
        out += m[1].str();
        out += m[2].str();
        std::string groups = m[3].str();
        std::erase(groups, ',');
        out += groups;
        begin = m[0].second;
    }
    out.append(begin, s.cend());
    s = std::move(out);
}

// Collapse whitespace, then keep a single space only between two
// alphanumeric characters.
void squeeze_whitespace(std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isspace(static_cast<unsigned char>(s[i]))) {
            out += s[i];
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (!out.empty() && j < s.size() && is_alnum(out.back()) && is_alnum(s[j])) out += ' ';
        i = j - 1;
    }
    s = std::move(out);
}

std::string normalize_once(std::string s) {
    s = std::string(trim(s));
    // Math delimiters around the whole answer.
    for (;;) {
        const std::string before = s;
        if (s.size() >= 2 && s.front() == '$' && s.back() == '$') s = s.substr(1, s.size() - 2);
        if (s.size() >= 4 && (s.starts_with("\\(") && s.ends_with("\\)"))) s = s.substr(2, s.size() - 4);
        if (s.size() >= 4 && (s.starts_with("\\[") && s.ends_with("\\]"))) s = s.substr(2, s.size() - 4);
        s = std::string(trim(s));
        if (s == before) break;
    }
    for (std::string_view noise : {"\\left", "\\right", "\\displaystyle", "\\!", "\\,", "\\;", "\\:", "^{\\circ}",
                                   "^\\circ", "\\%"}) {
        replace_all(s, noise, "");
    }
    replace_all(s, "\\dfrac", "\\frac");
    replace_all(s, "\\tfrac", "\\frac");
    unwrap_text_macros(s);
    squeeze_whitespace(s);
    rewrite_fractions(s);
    rewrite_radicals(s);
    remove_thousands_separators(s);
    while (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

std::optional<cpp_rational> parse_decimal(std::string_view s) {
    bool negative = false;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
        negative = s.front() == '-';
        s.remove_prefix(1);
    }
    if (s.empty()) return std::nullopt;
    cpp_int digits = 0;
    cpp_int scale = 1;
    bool seen_point = false;
    bool seen_digit = false;
    for (char c : s) {
        if (c == '.') {
            if (seen_point) return std::nullopt;
            seen_point = true;
            continue;
        }
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        seen_digit = true;
        digits = digits * 10 + (c - '0');
        if (seen_point) scale *= 10;
    }
    if (!seen_digit) return std::nullopt;
    cpp_rational value(digits, scale);
    return negative ? -value : value;
}

std::string_view strip_parens(std::string_view s) {
    if (s.size() >= 2 && s.front() == '(' && s.back() == ')') return s.substr(1, s.size() - 2);
    return s;
}

}  // namespace

std::string normalize_answer(std::string_view answer) {
    std::string current(answer);
    for (int i = 0; i < 16; ++i) {
        std::string next = normalize_once(current);
        if (next == current) break;
        current = std::move(next);
    }
    return current;
}

std::optional<cpp_rational> parse_rational(std::string_view normalized) {
    const auto slash = normalized.find('/');
    if (slash == std::string_view::npos) return parse_decimal(strip_parens(normalized));
    if (normalized.find('/', slash + 1) != std::string_view::npos) return std::nullopt;
    std::string_view numerator = normalized.substr(0, slash);
    bool negate = false;
    if (numerator.starts_with("-(")) {
        negate = true;
        numerator.remove_prefix(1);
    }
    auto num = parse_decimal(strip_parens(numerator));
    auto den = parse_decimal(strip_parens(normalized.substr(slash + 1)));
    if (!num || !den || *den == 0) return std::nullopt;
    cpp_rational value = *num / *den;
    return negate ? -value : value;
}

bool answers_equivalent(std::string_view a, std::string_view b) {
    const std::string na = normalize_answer(a);
    const std::string nb = normalize_answer(b);
    if (na == nb) return true;
    const auto ra = parse_rational(na);
    const auto rb = parse_rational(nb);
    return ra && rb && *ra == *rb;
}

RewardOutcome score(std::string_view trace, std::string_view answer) {
    if (trim(answer).empty()) throw InvalidArgument("reference answer must be nonempty");
    RewardOutcome outcome;
    const Termination t = detect_termination(trace);
    outcome.terminated = t.terminated;
    outcome.extracted = t.answer;
    if (!t.terminated) {
        outcome.reason = RewardReason::no_answer;
        return outcome;
    }
    if (answers_equivalent(*t.answer, answer)) {
        outcome.reward = 1.0;
        outcome.reason = RewardReason::correct;
    } else {
        outcome.reason = RewardReason::wrong;
    }
    return outcome;
}

}  // namespace rcache
