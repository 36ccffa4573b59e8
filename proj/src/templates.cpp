#include "rcache/templates.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "rcache/errors.hpp"

namespace rcache {

namespace {

bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Length of an identifier starting at pos, 0 if none.
std::size_t name_length(std::string_view s, std::size_t pos) {
    std::size_t n = 0;
    while (pos + n < s.size() && is_name_char(s[pos + n])) ++n;
    return n;
}

}  // namespace

std::string render_template(std::string_view tmpl, const TemplateVars& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] != '{') {
            out += tmpl[i++];
            continue;
        }
        // {?name}...{/name}
        if (i + 1 < tmpl.size() && tmpl[i + 1] == '?') {
            const std::size_t len = name_length(tmpl, i + 2);
            if (len > 0 && i + 2 + len < tmpl.size() && tmpl[i + 2 + len] == '}') {
                const std::string name(tmpl.substr(i + 2, len));
                const std::string close = "{/" + name + "}";
                const std::size_t body_begin = i + 3 + len;
                const std::size_t body_end = tmpl.find(close, body_begin);
                if (body_end != std::string_view::npos) {
                    auto it = vars.find(name);
                    if (it != vars.end() && !it->second.empty()) {
                        out += render_template(tmpl.substr(body_begin, body_end - body_begin), vars);
                    }
                    i = body_end + close.size();
                    continue;
                }
            }
        }
        // {name}
        const std::size_t len = name_length(tmpl, i + 1);
        if (len > 0 && i + 1 + len < tmpl.size() && tmpl[i + 1 + len] == '}') {
            auto it = vars.find(tmpl.substr(i + 1, len));
            if (it != vars.end()) {
                out += it->second;
                i += len + 2;
                continue;
            }
        }
        out += tmpl[i++];
    }
    return out;
}

std::string_view to_string(SummaryDetail detail) {
    switch (detail) {
        case SummaryDetail::answer_only: return "answer_only";
        case SummaryDetail::one_paragraph: return "one_paragraph";
        case SummaryDetail::two_paragraphs: return "two_paragraphs";
        case SummaryDetail::multi_paragraph: return "multi_paragraph";
    }
    return "two_paragraphs";
}

SummaryDetail summary_detail_from_string(std::string_view text) {
    if (text == "answer_only" || text == "answer-only") return SummaryDetail::answer_only;
    if (text == "one_paragraph" || text == "one-paragraph") return SummaryDetail::one_paragraph;
    if (text == "two_paragraphs" || text == "two-paragraphs") return SummaryDetail::two_paragraphs;
    if (text == "multi_paragraph" || text == "multi-paragraph") return SummaryDetail::multi_paragraph;
    throw InvalidArgument("unknown summary detail '" + std::string(text) + "'");
}

std::string_view summary_detail_instruction(SummaryDetail detail) {
    switch (detail) {
        case SummaryDetail::answer_only:
            return "Report only the current candidate final answer, with no explanation.";
        case SummaryDetail::one_paragraph:
            return "Write the summary as a single paragraph.";
        case SummaryDetail::two_paragraphs:
            return "Write the summary in at most two paragraphs.";
        case SummaryDetail::multi_paragraph:
            return "Write a detailed summary spanning multiple paragraphs, keeping every intermediate result.";
    }
    return {};
}

void RcPromptSet::validate() const {
    if (reasoning_instruction.empty()) throw InvalidArgument("reasoning instruction must be nonempty");
    if (summarize_instruction.empty()) throw InvalidArgument("summarization instruction must be nonempty");
}

PromptLibrary PromptLibrary::defaults() {
    PromptLibrary lib;
    lib.rc.reasoning_instruction =
        "You are solving a competition math problem. You may be given a summary of your earlier work on this "
        "problem. Use it as a starting point: check the results it reports, pursue promising directions it "
        "mentions, or try a different approach if it looks stuck. Reason step by step and put your final answer "
        "in \\boxed{}.";
    lib.rc.summarize_instruction =
        "You are given a problem, your latest reasoning on it, and possibly a summary of earlier attempts. Write "
        "an updated summary of all progress so far in the first person: the approaches tried, the intermediate "
        "results obtained, any candidate final answer, and what remains uncertain. Do not solve the problem "
        "further.";
    lib.rc.summary_detail = SummaryDetail::two_paragraphs;
    lib.rc.reasoning_user = "[PROBLEM]\n{problem}\n{?summary}\n[SUMMARY]\n{summary}\n{/summary}";
    lib.rc.summary_user = "[PROBLEM]\n{problem}\n\n[REASONING]\n{reasoning}\n{?summary}\n[SUMMARY]\n{summary}\n{/summary}";

    lib.refine_instruction =
        "You are given a problem and your previous reasoning on it. Improve upon that reasoning: fix any errors, "
        "fill in gaps, and produce a complete solution. Put your final answer in \\boxed{}.";
    lib.verify_instruction =
        "You are given a problem and your previous reasoning on it. Verify whether that reasoning is correct. If "
        "it is not, provide a corrected solution. Put your final answer in \\boxed{}.";
    lib.previous_trace_user = "[PROBLEM]\n{problem}\n\n[REASONING]\n{reasoning}\n";
    lib.delethink_user = "[PROBLEM]\n{problem}\n\n[REASONING]\n{reasoning}\n";
    lib.continue_frame_user =
        "[PROBLEM]\n{problem}\n\n[REASONING]\n{reasoning}\n\nContinue the reasoning above exactly where it stops.";

    lib.aggregate_instruction =
        "You are given a problem and several candidate solutions. Some may be wrong. Aggregate them into a single "
        "improved solution, keeping correct steps and discarding mistakes. Put your final answer in \\boxed{}.";
    lib.aggregate_user = "[PROBLEM]\n{problem}\n\n{candidates}";
    lib.candidate_block = "[CANDIDATE {index}]\n{solution}\n\n";

    lib.dsm_verify_instruction =
        "You are given a problem and a proposed solution. Check the solution carefully. Describe any issues you "
        "find, then end with exactly one line of the form SCORE: 1.0 if it is correct, SCORE: 0.5 if it has only "
        "minor issues, or SCORE: 0.0 if it has major errors.";
    lib.dsm_verify_user = "[PROBLEM]\n{problem}\n\n[SOLUTION]\n{solution}\n";
    lib.dsm_refine_instruction =
        "You are given a problem, a proposed solution and a reviewer's feedback on it. Write a corrected, "
        "complete solution that addresses the feedback. Put your final answer in \\boxed{}.";
    lib.dsm_refine_user = "[PROBLEM]\n{problem}\n\n[SOLUTION]\n{solution}\n\n[FEEDBACK]\n{feedback}\n";

    lib.annotator_instruction =
        "You are given a summary of earlier reasoning on a problem and the reasoning that followed it. Classify "
        "what the new reasoning does with the summary: verification (checks results stated in the summary), "
        "exploration (tries a different approach), refinement (builds on and improves the summarized approach), "
        "or none. Answer with a final line LABEL: <verification|exploration|refinement|none>.";
    lib.annotator_user = "[PROBLEM]\n{problem}\n\n[SUMMARY]\n{summary}\n\n[REASONING]\n{reasoning}\n";
    return lib;
}

namespace {

struct FieldRef {
    const char* name;
    std::string PromptLibrary::*member;
};

template <typename Lib>
auto* rc_field(Lib& lib, std::string_view name) {
    using Ptr = decltype(&lib.rc.reasoning_instruction);
    if (name == "reasoning_instruction") return &lib.rc.reasoning_instruction;
    if (name == "summarize_instruction") return &lib.rc.summarize_instruction;
    if (name == "reasoning_user") return &lib.rc.reasoning_user;
    if (name == "summary_user") return &lib.rc.summary_user;
    return Ptr{nullptr};
}

constexpr FieldRef kFields[] = {
    {"refine_instruction", &PromptLibrary::refine_instruction},
    {"verify_instruction", &PromptLibrary::verify_instruction},
    {"previous_trace_user", &PromptLibrary::previous_trace_user},
    {"delethink_user", &PromptLibrary::delethink_user},
    {"continue_frame_user", &PromptLibrary::continue_frame_user},
    {"aggregate_instruction", &PromptLibrary::aggregate_instruction},
    {"aggregate_user", &PromptLibrary::aggregate_user},
    {"candidate_block", &PromptLibrary::candidate_block},
    {"dsm_verify_instruction", &PromptLibrary::dsm_verify_instruction},
    {"dsm_verify_user", &PromptLibrary::dsm_verify_user},
    {"dsm_refine_instruction", &PromptLibrary::dsm_refine_instruction},
    {"dsm_refine_user", &PromptLibrary::dsm_refine_user},
    {"annotator_instruction", &PromptLibrary::annotator_instruction},
    {"annotator_user", &PromptLibrary::annotator_user},
};

constexpr const char* kRcFields[] = {"reasoning_instruction", "summarize_instruction", "reasoning_user",
                                     "summary_user"};

}  // namespace

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("template directory not found: " + dir.string());
    PromptLibrary lib = defaults();
    auto read = [&](const char* name, std::string& target) {
        const auto path = dir / (std::string(name) + ".txt");
        if (!std::filesystem::exists(path)) return;
        std::ifstream in(path);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        target = buffer.str();
    };
    for (const char* name : kRcFields) read(name, *rc_field(lib, name));
    for (const auto& f : kFields) read(f.name, lib.*(f.member));
    if (const auto detail = dir / "summary_detail.txt"; std::filesystem::exists(detail)) {
        std::ifstream in(detail);
        std::string word;
        in >> word;
        lib.rc.summary_detail = summary_detail_from_string(word);
    }
    lib.rc.validate();
    return lib;
}

std::map<std::string, std::string> PromptLibrary::fields() const {
    std::map<std::string, std::string> out;
    for (const char* name : kRcFields) out[name] = *rc_field(*this, name);
    for (const auto& f : kFields) out[f.name] = this->*(f.member);
    out["summary_detail"] = std::string(to_string(rc.summary_detail));
    return out;
}

}  // namespace rcache
