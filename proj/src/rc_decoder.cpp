#include "rcache/rc_decoder.hpp"

#include "rcache/errors.hpp"

namespace rcache {

CompletionRequest build_reasoning_request(const RcPromptSet& prompts, std::string_view problem,
                                          std::string_view prev_summary, const BudgetSpec& budget,
                                          const GenerationParams& params) {
    CompletionRequest request;
    request.messages.push_back({Role::system, prompts.reasoning_instruction});
    request.messages.push_back(
        {Role::user, render_template(prompts.reasoning_user,
                                     {{"problem", std::string(problem)}, {"summary", std::string(prev_summary)}})});
    request.params = params.with(budget.reasoning_tokens(), params.seed);
    return request;
}

CompletionRequest build_summary_request(const RcPromptSet& prompts, std::string_view problem,
                                        std::string_view reasoning, std::string_view prev_summary,
                                        const BudgetSpec& budget, const GenerationParams& params) {
    CompletionRequest request;
    std::string instruction = prompts.summarize_instruction;
    instruction += ' ';
    instruction += summary_detail_instruction(prompts.summary_detail);
    request.messages.push_back({Role::system, std::move(instruction)});
    request.messages.push_back({Role::user, render_template(prompts.summary_user,
                                                            {{"problem", std::string(problem)},
                                                             {"reasoning", std::string(reasoning)},
                                                             {"summary", std::string(prev_summary)}})});
    request.params = params.with(budget.summary_tokens(), params.seed);
    return request;
}

std::optional<std::uint64_t> call_seed(const GenerationParams& params, std::string_view role, int turn) {
    if (!params.seed) return std::nullopt;
    return derive_seed(*params.seed, role, static_cast<std::uint64_t>(turn));
}

namespace {

template <typename Fn>
CompletionResult call_at_turn(int turn, Fn&& fn) {
    try {
        return fn();
    } catch (const TurnFailed&) {
        throw;
    } catch (const Error& e) {
        throw TurnFailed(turn, e);
    }
}

}  // namespace

RcTrajectory run_rc(const ProblemInstance& problem, const RcPromptSet& prompts, const BudgetSpec& budget,
                    const GenerationParams& params, Backend& backend, const RcOptions& options) {
    problem.validate();
    prompts.validate();
    if (options.stop_on_stable_answer && *options.stop_on_stable_answer < 1) {
        throw InvalidArgument("stop_on_stable_answer must be >= 1");
    }

    RcTrajectory trajectory;
    trajectory.problem_id = problem.id;
    trajectory.decoder = "rc";
    trajectory.budget = budget;
    if (!options.initial_summary.empty()) trajectory.metadata["initial_summary"] = "injected";

    std::string summary = options.initial_summary;
    std::optional<std::string> stable_answer;
    int stable_run = 0;

    for (int turn = 1; turn <= budget.turns(); ++turn) {
        RcTurnRecord record;
        record.turn_index = turn;

        const auto reasoning_request = build_reasoning_request(
            prompts, problem.prompt, summary, budget, params.with(params.max_tokens, call_seed(params, "reason", turn)));
        const auto reasoning = call_at_turn(turn, [&] { return backend.complete(reasoning_request); });
        record.reasoning = reasoning.content;
        record.reasoning_tokens = reasoning.completion_tokens;
        record.reasoning_truncated = reasoning.finish_reason == FinishReason::length;
        const Termination termination = detect_termination(record.reasoning);
        record.terminated = termination.terminated;
        record.extracted_answer = termination.answer;

        if (record.extracted_answer && record.extracted_answer == stable_answer) {
            ++stable_run;
        } else {
            stable_answer = record.extracted_answer;
            stable_run = record.extracted_answer ? 1 : 0;
        }
        const bool stable_stop = options.stop_on_stable_answer && stable_run >= *options.stop_on_stable_answer;
        const bool last_turn = turn == budget.turns() || stable_stop;

        if (!last_turn || options.summarize_final_turn) {
            const auto summary_request =
                build_summary_request(prompts, problem.prompt, record.reasoning, summary, budget,
                                      params.with(params.max_tokens, call_seed(params, "summarize", turn)));
            const auto summarized = call_at_turn(turn, [&] { return backend.complete(summary_request); });
            record.summary = summarized.content;
            record.summary_tokens = summarized.completion_tokens;
            record.summary_truncated = summarized.finish_reason == FinishReason::length;
            summary = record.summary;
        }

        trajectory.push_turn(std::move(record));
        if (stable_stop) {
            trajectory.metadata["stopped_early"] = "stable_answer";
            break;
        }
    }
    return trajectory;
}

}  // namespace rcache
