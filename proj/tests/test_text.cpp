#include <doctest.h>

#include <fstream>
#include <random>

#include "rcache/errors.hpp"
#include "rcache/reward.hpp"
#include "rcache/templates.hpp"
#include "rcache/termination.hpp"
#include "support.hpp"

using namespace rcache;

// ---- templates ----

TEST_CASE("template placeholders and conditional sections") {
    CHECK(render_template("a {x} b", {{"x", "1"}}) == "a 1 b");
    CHECK(render_template("{?s}[S] {s}{/s}done", {{"s", ""}}) == "done");
    CHECK(render_template("{?s}[S] {s}{/s}done", {{"s", "yo"}}) == "[S] yodone");
    CHECK(render_template("{?s}[S]{/s}done", {}) == "done");
    CHECK(render_template("keep {unknown}", {}) == "keep {unknown}");
    // substituted values are not re-scanned
    CHECK(render_template("{a}", {{"a", "{b}"}, {"b", "no"}}) == "{b}");
}

TEST_CASE("summary detail instructions differ per level") {
    std::set<std::string> seen;
    for (auto d : {SummaryDetail::answer_only, SummaryDetail::one_paragraph, SummaryDetail::two_paragraphs,
                   SummaryDetail::multi_paragraph}) {
        seen.insert(std::string(summary_detail_instruction(d)));
        CHECK(summary_detail_from_string(to_string(d)) == d);
    }
    CHECK(seen.size() == 4);
    CHECK_THROWS_AS(summary_detail_from_string("haiku"), InvalidArgument);
}

TEST_CASE("prompt library loads overrides from a directory") {
    testing::TempDir dir("prompts");
    std::ofstream(dir.path / "refine_instruction.txt") << "REFINE!";
    std::ofstream(dir.path / "summary_detail.txt") << "answer_only\n";
    const auto lib = PromptLibrary::load(dir.path);
    CHECK(lib.refine_instruction == "REFINE!");
    CHECK(lib.rc.summary_detail == SummaryDetail::answer_only);
    CHECK(lib.verify_instruction == PromptLibrary::defaults().verify_instruction);
    const auto fields = lib.fields();
    CHECK(fields.at("refine_instruction") == "REFINE!");
    CHECK(fields.count("reasoning_instruction") == 1);
}

// ---- termination ----

TEST_CASE("termination takes the last boxed answer") {
    auto t = detect_termination("so the result is \\boxed{42}");
    CHECK(t.terminated);
    CHECK(t.answer == std::optional<std::string>("42"));

    t = detect_termination("no final answer here");
    CHECK_FALSE(t.terminated);
    CHECK_FALSE(t.answer.has_value());

    t = detect_termination("\\boxed{\\sqrt{3} - 1} then later \\boxed{7}");
    CHECK(t.answer == std::optional<std::string>("7"));

    CHECK(detect_termination("\\boxed{\\frac{1}{2}}").answer == std::optional<std::string>("\\frac{1}{2}"));
    CHECK(detect_termination("\\boxed {5}").answer == std::optional<std::string>("5"));
    CHECK_FALSE(detect_termination("\\boxed{unclosed").terminated);
}

// Independent scan: every balanced \boxed{...} in order; the oracle takes the last.
std::optional<std::string> boxed_oracle(const std::string& s) {
    std::optional<std::string> last;
    const std::string key = "\\boxed{";
    for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + 1)) {
        int depth = 1;
        std::size_t i = pos + key.size();
        for (; i < s.size() && depth > 0; ++i) {
            if (s[i] == '{') ++depth;
            if (s[i] == '}') --depth;
        }
        if (depth == 0) last = s.substr(pos + key.size(), i - 1 - (pos + key.size()));
    }
    return last;
}

TEST_CASE("termination agrees with a scanning oracle on random traces") {
    std::mt19937_64 rng(11);
    // Complete boxes never nest here, so the oracle's last box is the answer.
    const std::vector<std::string> pieces{"x ", "1", "a+b", " ", "\\frac{1}{2}", "\\boxed{3}", "\\boxed{a + b}",
                                          "\\boxed{\\frac{1}{2}}", "\\boxed{", "then "};
    for (int n = 0; n < 2000; ++n) {
        std::string s;
        const int len = static_cast<int>(rng() % 10);
        for (int i = 0; i < len; ++i) s += pieces[rng() % pieces.size()];
        const auto oracle = boxed_oracle(s);
        const auto got = detect_termination(s);
        CHECK_MESSAGE(got.answer == oracle, "trace: " << s);
        CHECK(got.terminated == oracle.has_value());
    }
}

// ---- reward ----

TEST_CASE("score examples") {
    auto r = score("thus \\boxed{\\sqrt{3} - 1}", "\\sqrt{3}-1");
    CHECK(r.reward == 1.0);
    r = score("no box", "7");
    CHECK(r.reward == 0.0);
    CHECK(r.reason == RewardReason::no_answer);
    r = score("\\boxed{1/2}", "0.5");
    CHECK(r.reward == 1.0);
    r = score("\\boxed{3}", "4");
    CHECK(r.reward == 0.0);
    CHECK(r.reason == RewardReason::wrong);
    CHECK_THROWS_AS(score("\\boxed{3}", ""), InvalidArgument);
}

TEST_CASE("normalization handles common latex forms") {
    CHECK(answers_equivalent("\\dfrac{3}{4}", "3/4"));
    CHECK(answers_equivalent("$\\frac{3}{4}$", "0.75"));
    CHECK(answers_equivalent("1,000", "1000"));
    CHECK(answers_equivalent("\\text{ 12 }", "12"));
    CHECK(answers_equivalent("45^\\circ", "45"));
    CHECK(answers_equivalent("\\left( 1, 2 \\right)", "(1,2)"));
    CHECK(answers_equivalent("2.50", "5/2"));
    CHECK_FALSE(answers_equivalent("1/3", "0.33"));
    CHECK_FALSE(answers_equivalent("x+1", "x+2"));
}

TEST_CASE("rational parsing") {
    CHECK(parse_rational("3/4") == boost::multiprecision::cpp_rational(3, 4));
    CHECK(parse_rational("-0.125") == boost::multiprecision::cpp_rational(-1, 8));
    CHECK(parse_rational("7") == boost::multiprecision::cpp_rational(7));
    CHECK_FALSE(parse_rational("x").has_value());
    CHECK_FALSE(parse_rational("1/0").has_value());
}

namespace {

std::string random_answer(std::mt19937_64& rng) {
    static const std::vector<std::string> atoms{"1",      "23",  "x",       "\\frac{1}{2}", "\\sqrt{3}", " ",
                                                "+",      "-",   "\\left(", "\\right)",     ",",         "1,000",
                                                "\\pi",   "$",   "\\dfrac{a}{b}", "^\\circ", "\\text{m}", "0.5",
                                                "{",      "}",   "\\!",     "."};
    std::string s;
    const int len = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < len; ++i) s += atoms[rng() % atoms.size()];
    return s;
}

bool balanced(const std::string& s) {
    int depth = 0;
    for (char c : s) {
        if (c == '{') ++depth;
        if (c == '}' && --depth < 0) return false;
    }
    return depth == 0;
}

}  // namespace

TEST_CASE("normalization is idempotent") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 5000; ++i) {
        const std::string s = random_answer(rng);
        const std::string once = normalize_answer(s);
        CHECK_MESSAGE(normalize_answer(once) == once, "input: " << s);
    }
}

TEST_CASE("scoring is reflexive and binary") {
    std::mt19937_64 rng(5);
    int checked = 0;
    for (int i = 0; i < 5000; ++i) {
        const std::string y = random_answer(rng);
        if (!balanced(y) || y.find_first_not_of(" $") == std::string::npos) continue;
        const auto r = score("work \\boxed{" + y + "}", y);
        CHECK_MESSAGE(r.reward == 1.0, "answer: " << y);
        const auto wrong = score("\\boxed{zzz}", y);
        CHECK((wrong.reward == 0.0 || wrong.reward == 1.0));
        ++checked;
    }
    CHECK(checked > 1000);
}
