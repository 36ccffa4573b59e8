#pragma once

// Comparison iterative decoders that act on the raw reasoning trace instead
// of a summary.

#include <string>

#include "rcache/backend.hpp"
#include "rcache/core.hpp"
#include "rcache/templates.hpp"

namespace rcache {

enum class BaselineType { self_refine, self_verify, budget_force, delethink };

std::string_view to_string(BaselineType type);
BaselineType baseline_type_from_string(std::string_view text);

inline constexpr std::string_view kDefaultForcePhrase = "Wait, let me continue thinking";

struct BaselineKind {
    BaselineType type = BaselineType::self_refine;
    TokenCount chunk_tokens = 0;  // delethink; 0 means H_R / 2
    std::string force_phrase{kDefaultForcePhrase};

    // Resolved H_chunk for a budget; throws unless 0 < H_chunk <= H_R.
    [[nodiscard]] TokenCount resolved_chunk(const BudgetSpec& budget) const;
};

// Self-refine / self-verify. Turn 1 is the plain RC first turn; turn t > 1
// conditions on the full z_R(t-1) with I_refine or I_verify. No summaries.
RcTrajectory run_iterative_baseline(const BaselineKind& kind, const ProblemInstance& problem,
                                    const PromptLibrary& prompts, const BudgetSpec& budget,
                                    const GenerationParams& params, Backend& backend);

// One growing transcript. After each terminated reply the force phrase is
// appended and generation continues, at most T times; the total stays below
// H_test before every call. Each generation call is one turn record.
RcTrajectory run_budget_force(const ProblemInstance& problem, const PromptLibrary& prompts,
                              const BudgetSpec& budget, const GenerationParams& params, Backend& backend,
                              std::string_view force_phrase = kDefaultForcePhrase);

// Each turn conditions on x and the trailing H_chunk tokens of z_R(t-1);
// stops on a natural end of sequence (finish_reason=stop) or after T turns.
RcTrajectory run_delethink(const ProblemInstance& problem, const PromptLibrary& prompts, const BudgetSpec& budget,
                           TokenCount chunk_tokens, const GenerationParams& params, Backend& backend);

// Dispatch on kind.type.
RcTrajectory run_baseline(const BaselineKind& kind, const ProblemInstance& problem, const PromptLibrary& prompts,
                          const BudgetSpec& budget, const GenerationParams& params, Backend& backend);

// Request for a trace-conditioned turn (self-refine/self-verify and the
// trace-conditioned training variant).
CompletionRequest build_trace_request(const PromptLibrary& prompts, BaselineType type, std::string_view problem,
                                      std::string_view previous_trace, const BudgetSpec& budget,
                                      const GenerationParams& params);

}  // namespace rcache
