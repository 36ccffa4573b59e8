#include "rcache/baselines.hpp"

#include "rcache/errors.hpp"
#include "rcache/rc_decoder.hpp"
#include "rcache/termination.hpp"

namespace rcache {

std::string_view to_string(BaselineType type) {
    switch (type) {
        case BaselineType::self_refine: return "self_refine";
        case BaselineType::self_verify: return "self_verify";
        case BaselineType::budget_force: return "budget_force";
        case BaselineType::delethink: return "delethink";
    }
    return "self_refine";
}

BaselineType baseline_type_from_string(std::string_view text) {
    if (text == "self_refine" || text == "self-refine") return BaselineType::self_refine;
    if (text == "self_verify" || text == "self-verify") return BaselineType::self_verify;
    if (text == "budget_force" || text == "budget-force") return BaselineType::budget_force;
    if (text == "delethink") return BaselineType::delethink;
    throw InvalidArgument("unknown baseline '" + std::string(text) + "'");
}

TokenCount BaselineKind::resolved_chunk(const BudgetSpec& budget) const {
    const TokenCount chunk = chunk_tokens == 0 ? budget.reasoning_tokens() / 2 : chunk_tokens;
    if (chunk <= 0 || chunk > budget.reasoning_tokens()) {
        throw InvalidArgument("delethink chunk must satisfy 0 < H_chunk <= H_R");
    }
    return chunk;
}

namespace {

template <typename Fn>
CompletionResult at_turn(int turn, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw TurnFailed(turn, e);
    }
}

RcTurnRecord record_from(int turn, const CompletionResult& result) {
    RcTurnRecord record;
    record.turn_index = turn;
    record.reasoning = result.content;
    record.reasoning_tokens = result.completion_tokens;
    record.reasoning_truncated = result.finish_reason == FinishReason::length;
    const Termination t = detect_termination(result.content);
    record.terminated = t.terminated;
    record.extracted_answer = t.answer;
    return record;
}

CompletionRequest first_turn_request(const PromptLibrary& prompts, const ProblemInstance& problem,
                                     const BudgetSpec& budget, const GenerationParams& params, int turn) {
    return build_reasoning_request(prompts.rc, problem.prompt, "", budget,
                                   params.with(params.max_tokens, call_seed(params, "reason", turn)));
}

}  // namespace

CompletionRequest build_trace_request(const PromptLibrary& prompts, BaselineType type, std::string_view problem,
                                      std::string_view previous_trace, const BudgetSpec& budget,
                                      const GenerationParams& params) {
    if (type != BaselineType::self_refine && type != BaselineType::self_verify) {
        throw InvalidArgument("trace-conditioned requests are for self_refine / self_verify");
    }
    CompletionRequest request;
    request.messages.push_back(
        {Role::system, type == BaselineType::self_refine ? prompts.refine_instruction : prompts.verify_instruction});
    request.messages.push_back({Role::user, render_template(prompts.previous_trace_user,
                                                            {{"problem", std::string(problem)},
                                                             {"reasoning", std::string(previous_trace)}})});
    request.params = params.with(budget.reasoning_tokens(), params.seed);
    return request;
}

RcTrajectory run_iterative_baseline(const BaselineKind& kind, const ProblemInstance& problem,
                                    const PromptLibrary& prompts, const BudgetSpec& budget,
                                    const GenerationParams& params, Backend& backend) {
    if (kind.type != BaselineType::self_refine && kind.type != BaselineType::self_verify) {
        throw InvalidArgument("run_iterative_baseline handles self_refine and self_verify only");
    }
    problem.validate();
    RcTrajectory trajectory;
    trajectory.problem_id = problem.id;
    trajectory.decoder = std::string(to_string(kind.type));
    trajectory.budget = budget;

    std::string previous;
    for (int turn = 1; turn <= budget.turns(); ++turn) {
        const CompletionRequest request =
            turn == 1 ? first_turn_request(prompts, problem, budget, params, turn)
                      : build_trace_request(prompts, kind.type, problem.prompt, previous, budget,
                                            params.with(params.max_tokens, call_seed(params, "reason", turn)));
        const auto result = at_turn(turn, [&] { return backend.complete(request); });
        previous = result.content;
        trajectory.push_turn(record_from(turn, result));
    }
    return trajectory;
}

RcTrajectory run_budget_force(const ProblemInstance& problem, const PromptLibrary& prompts,
                              const BudgetSpec& budget, const GenerationParams& params, Backend& backend,
                              std::string_view force_phrase) {
    problem.validate();
    if (force_phrase.empty()) throw InvalidArgument("force phrase must be nonempty");
    RcTrajectory trajectory;
    trajectory.problem_id = problem.id;
    trajectory.decoder = "budget_force";
    trajectory.budget = budget;

    const bool prefix = backend.supports_assistant_prefix();
    trajectory.metadata["continuation_mode"] = prefix ? "assistant_prefix" : "user_frame";

    const std::string phrase = "\n\n" + std::string(force_phrase) + "\n\n";
    const TokenCount phrase_tokens = whitespace_token_count(force_phrase);
    const TokenCount h_test = budget.effective();

    std::string transcript;
    TokenCount total = 0;
    TokenCount phrase_total = 0;
    int appends = 0;

    for (int call = 1;; ++call) {
        CompletionRequest request = first_turn_request(prompts, problem, budget, params, call);
        if (!transcript.empty()) {
            if (prefix) {
                request.messages.push_back({Role::assistant, transcript});
            } else {
                request.messages[1].content = render_template(
                    prompts.continue_frame_user, {{"problem", problem.prompt}, {"reasoning", transcript}});
            }
        }
        CompletionResult result;
        try {
            result = backend.complete(request);
        } catch (const BackendRejected& e) {
            if (prefix && !transcript.empty()) throw BackendNoContinuationSupport(e.what());
            throw TurnFailed(call, e);
        } catch (const Error& e) {
            throw TurnFailed(call, e);
        }

        transcript += result.content;
        total += result.completion_tokens;
        RcTurnRecord record = record_from(call, result);
        const bool terminated = record.terminated;
        trajectory.push_turn(std::move(record));

        if (total >= h_test) break;
        if (terminated) {
            if (appends == budget.turns() || total + phrase_tokens >= h_test) break;
            transcript += phrase;
            total += phrase_tokens;
            phrase_total += phrase_tokens;
            ++appends;
        } else if (result.finish_reason != FinishReason::length) {
            break;  // ended without an answer
        }
    }

    trajectory.metadata["transcript"] = transcript;
    trajectory.metadata["force_phrases"] = std::to_string(appends);
    trajectory.metadata["force_phrase_tokens"] = std::to_string(phrase_total);
    trajectory.metadata["transcript_tokens"] = std::to_string(total);
    return trajectory;
}

RcTrajectory run_delethink(const ProblemInstance& problem, const PromptLibrary& prompts, const BudgetSpec& budget,
                           TokenCount chunk_tokens, const GenerationParams& params, Backend& backend) {
    problem.validate();
    BaselineKind kind{BaselineType::delethink, chunk_tokens, std::string(kDefaultForcePhrase)};
    const TokenCount chunk = kind.resolved_chunk(budget);

    RcTrajectory trajectory;
    trajectory.problem_id = problem.id;
    trajectory.decoder = "delethink";
    trajectory.budget = budget;
    const bool prefix = backend.supports_assistant_prefix();
    trajectory.metadata["carryover_mode"] = prefix ? "assistant_prefix" : "user_frame";
    trajectory.metadata["carryover_token_space"] = "whitespace";
    trajectory.metadata["chunk_tokens"] = std::to_string(chunk);

    std::string carryover;
    for (int turn = 1; turn <= budget.turns(); ++turn) {
        CompletionRequest request = first_turn_request(prompts, problem, budget, params, turn);
        if (!carryover.empty()) {
            if (prefix) {
                request.messages.push_back({Role::assistant, carryover});
            } else {
                request.messages[1].content =
                    render_template(prompts.delethink_user, {{"problem", problem.prompt}, {"reasoning", carryover}});
            }
        }
        const auto result = at_turn(turn, [&] { return backend.complete(request); });
        trajectory.push_turn(record_from(turn, result));
        if (result.finish_reason == FinishReason::stop) break;
        carryover = whitespace_token_suffix(result.content, chunk);
    }
    return trajectory;
}

RcTrajectory run_baseline(const BaselineKind& kind, const ProblemInstance& problem, const PromptLibrary& prompts,
                          const BudgetSpec& budget, const GenerationParams& params, Backend& backend) {
    switch (kind.type) {
        case BaselineType::self_refine:
        case BaselineType::self_verify:
            return run_iterative_baseline(kind, problem, prompts, budget, params, backend);
        case BaselineType::budget_force:
            return run_budget_force(problem, prompts, budget, params, backend, kind.force_phrase);
        case BaselineType::delethink:
            return run_delethink(problem, prompts, budget, kind.chunk_tokens, params, backend);
    }
    throw InvalidArgument("unknown baseline");
}

}  // namespace rcache
