#pragma once

// Plain-text prompt templates.
//
// Placeholders are written {name}. A conditional section
//   {?name}...{/name}
// is rendered only when variable `name` is bound to a nonempty string, so a
// template can drop a whole labeled block (for instance the summary block on
// the first turn). Unknown placeholders are left verbatim.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace rcache {

using TemplateVars = std::map<std::string, std::string, std::less<>>;

std::string render_template(std::string_view tmpl, const TemplateVars& vars);

enum class SummaryDetail { answer_only, one_paragraph, two_paragraphs, multi_paragraph };

std::string_view to_string(SummaryDetail detail);
SummaryDetail summary_detail_from_string(std::string_view text);

// The detail-level sentence appended to the summarization instruction.
std::string_view summary_detail_instruction(SummaryDetail detail);

// Instructions and user-message templates for RC decoding.
struct RcPromptSet {
    std::string reasoning_instruction;  // I_R
    std::string summarize_instruction;  // I_S
    SummaryDetail summary_detail = SummaryDetail::two_paragraphs;
    std::string reasoning_user;  // {problem}, optional {summary}
    std::string summary_user;    // {problem}, {reasoning}, optional {summary}

    void validate() const;
};

// Everything else the baselines, scaffolds and annotator prompt with.
struct PromptLibrary {
    RcPromptSet rc;
    std::string refine_instruction;       // I_refine
    std::string verify_instruction;       // I_verify
    std::string previous_trace_user;      // {problem}, {reasoning}
    std::string delethink_user;           // {problem}, {reasoning}: user-frame carryover
    std::string continue_frame_user;      // {problem}, {reasoning}: budget forcing without prefix support
    std::string aggregate_instruction;
    std::string aggregate_user;           // {problem}, {candidates}
    std::string candidate_block;          // {index}, {solution}
    std::string dsm_verify_instruction;
    std::string dsm_verify_user;          // {problem}, {solution}
    std::string dsm_refine_instruction;
    std::string dsm_refine_user;          // {problem}, {solution}, {feedback}
    std::string annotator_instruction;
    std::string annotator_user;           // {problem}, {summary}, {reasoning}

    static PromptLibrary defaults();

    // Files named <field>.txt in `dir` override the matching default.
    static PromptLibrary load(const std::filesystem::path& dir);

    // Field name -> template text, in a stable order (used for hashing).
    [[nodiscard]] std::map<std::string, std::string> fields() const;
};

}  // namespace rcache
