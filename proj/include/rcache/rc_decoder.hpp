#pragma once

// Reasoning Cache decoding: alternate bounded reasoning and summarization.
//
//   turn t:  z_R(t) ~ pi(. | I_R, x, z_S(t-1))              (max_tokens = H_R)
//            z_S(t) ~ pi(. | I_S, x, z_R(t), z_S(t-1))       (max_tokens = H_S)
//
// z_S(0) is empty (or injected by a caller such as RSA or the replay buffer).
// Each reasoning request sees only the previous summary, never the previous
// trace. The final output is z_R(T).

#include <optional>
#include <string>
#include <string_view>

#include "rcache/backend.hpp"
#include "rcache/core.hpp"
#include "rcache/templates.hpp"
#include "rcache/termination.hpp"

namespace rcache {

CompletionRequest build_reasoning_request(const RcPromptSet& prompts, std::string_view problem,
                                          std::string_view prev_summary, const BudgetSpec& budget,
                                          const GenerationParams& params);

CompletionRequest build_summary_request(const RcPromptSet& prompts, std::string_view problem,
                                        std::string_view reasoning, std::string_view prev_summary,
                                        const BudgetSpec& budget, const GenerationParams& params);

struct RcOptions {
    // Seed for z_S(0).
    std::string initial_summary;
    // Also summarize the last turn (its summary is otherwise unused).
    bool summarize_final_turn = false;
    // Stop once the same extracted answer has appeared in k consecutive turns.
    std::optional<int> stop_on_stable_answer;
};

// Per-call seeds are derived from params.seed (when set) and the turn, so a
// seeded run is reproducible request by request.
RcTrajectory run_rc(const ProblemInstance& problem, const RcPromptSet& prompts, const BudgetSpec& budget,
                    const GenerationParams& params, Backend& backend, const RcOptions& options = {});

// Seed for a given call within a decoder run.
std::optional<std::uint64_t> call_seed(const GenerationParams& params, std::string_view role, int turn);

}  // namespace rcache
