#include "rcache/scaffolds.hpp"

#include <random>
#include <regex>

#include "rcache/errors.hpp"
#include "rcache/parallel.hpp"
#include "rcache/rc_decoder.hpp"

namespace rcache {

using nlohmann::json;

void RsaConfig::validate() const {
    if (pool_size < 1 || sample_size < 1 || rounds < 1) throw InvalidArgument("RSA counts must be >= 1");
    if (sample_size > pool_size) throw InvalidArgument("RSA requires k <= M");
}

void DsmConfig::validate() const {
    if (generations < 1 || verifications < 1 || rounds < 1) throw InvalidArgument("DSM counts must be >= 1");
}

void to_json(json& j, const TranscriptEvent& e) {
    j = json{{"stage", e.stage}, {"round", e.round}, {"slot", e.slot}, {"text", e.text}, {"tokens", e.tokens}};
    if (!e.inputs.empty()) j["inputs"] = e.inputs;
    if (e.score) j["score"] = *e.score;
    if (e.flagged) j["flagged"] = true;
}

std::optional<double> parse_verdict(std::string_view text) {
    static const std::regex line(R"(SCORE:\s*([0-9.]+)\s*$)", std::regex::icase);
    std::optional<double> verdict;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string current(text.substr(start, end - start));
        if (!current.empty() && current.back() == '\r') current.pop_back();
        std::smatch m;
        if (std::regex_search(current, m, line)) {
            const std::string value = m[1].str();
            if (value == "0" || value == "0.0") {
                verdict = 0.0;
            } else if (value == "0.5") {
                verdict = 0.5;
            } else if (value == "1" || value == "1.0") {
                verdict = 1.0;
            } else {
                verdict.reset();  // a malformed last line overrides earlier ones
            }
        }
        start = end + 1;
    }
    return verdict;
}

CompletionRequest build_aggregation_request(const PromptLibrary& prompts, std::string_view problem,
                                            const std::vector<std::string>& candidates,
                                            const GenerationParams& params) {
    std::string blocks;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        blocks += render_template(prompts.candidate_block,
                                  {{"index", std::to_string(i + 1)}, {"solution", candidates[i]}});
    }
    CompletionRequest request;
    request.messages.push_back({Role::system, prompts.aggregate_instruction});
    request.messages.push_back(
        {Role::user, render_template(prompts.aggregate_user, {{"problem", std::string(problem)}, {"candidates", blocks}})});
    request.params = params;
    return request;
}

namespace {

struct Solved {
    std::string text;
    TokenCount tokens = 0;
};

TokenCount reasoning_cap(const InnerSolver& inner, const GenerationParams& params) {
    return inner.rc ? inner.rc->reasoning_tokens() : params.max_tokens;
}

GenerationParams seeded(const GenerationParams& params, TokenCount max_tokens, std::uint64_t root,
                        std::string_view label, std::uint64_t index) {
    return params.with(max_tokens, derive_seed(root, label, index));
}

// Produces one solution, optionally conditioned on a seed summary.
Solved solve(const ProblemInstance& problem, const PromptLibrary& prompts, const InnerSolver& inner,
             const GenerationParams& params, Backend& backend, std::string_view seed_summary) {
    if (inner.rc) {
        RcOptions options;
        options.initial_summary = std::string(seed_summary);
        const RcTrajectory t = run_rc(problem, prompts.rc, *inner.rc, params, backend, options);
        return {t.final_output, t.total_tokens()};
    }
    CompletionRequest request;
    request.messages.push_back({Role::system, prompts.rc.reasoning_instruction});
    request.messages.push_back({Role::user, render_template(prompts.rc.reasoning_user,
                                                            {{"problem", problem.prompt},
                                                             {"summary", std::string(seed_summary)}})});
    request.params = params;
    const auto result = backend.complete(request);
    return {result.content, result.completion_tokens};
}

TokenCount sum_tokens(const std::vector<TranscriptEvent>& events) {
    TokenCount total = 0;
    for (const auto& e : events) total += e.tokens;
    return total;
}

}  // namespace

RsaResult run_rsa(const ProblemInstance& problem, const RsaConfig& cfg, const PromptLibrary& prompts,
                  const GenerationParams& params, Backend& backend, std::uint64_t rng_seed) {
    problem.validate();
    cfg.validate();
    const auto m = static_cast<std::size_t>(cfg.pool_size);
    const TokenCount cap = reasoning_cap(cfg.inner, params);
    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<int> pick(0, cfg.pool_size - 1);

    RsaResult result;
    std::vector<std::string> pool;

    for (int round = 0; round < cfg.rounds; ++round) {
        std::vector<std::vector<int>> draws(m);
        if (round > 0) {
            for (auto& d : draws) {
                for (int j = 0; j < cfg.sample_size; ++j) d.push_back(pick(rng));
            }
        }
        std::vector<std::optional<TranscriptEvent>> aggregate_events(m);
        std::vector<std::optional<TranscriptEvent>> member_events(m);
        std::vector<std::string> next(m);
        try {
            parallel_for(m, cfg.concurrency, [&](std::size_t i) {
                const std::uint64_t index = static_cast<std::uint64_t>(round) * m + i;
                const auto call_params = seeded(params, cap, rng_seed, "rsa", index);
                if (round == 0) {
                    Solved s = solve(problem, prompts, cfg.inner, call_params, backend, "");
                    member_events[i] = TranscriptEvent{"generate", round, static_cast<int>(i), s.text, s.tokens, {}, {}, false};
                    next[i] = std::move(s.text);
                    return;
                }
                std::vector<std::string> candidates;
                for (int idx : draws[i]) candidates.push_back(pool[static_cast<std::size_t>(idx)]);
                const auto aggregated =
                    backend.complete(build_aggregation_request(prompts, problem.prompt, candidates, call_params));
                aggregate_events[i] = TranscriptEvent{"aggregate", round, static_cast<int>(i), aggregated.content,
                                                      aggregated.completion_tokens, draws[i], {}, false};
                if (cfg.inner.rc) {
                    Solved s = solve(problem, prompts, cfg.inner,
                                     seeded(params, cap, rng_seed, "rsa-refine", index), backend, aggregated.content);
                    member_events[i] = TranscriptEvent{"refine", round, static_cast<int>(i), s.text, s.tokens, {}, {}, false};
                    next[i] = std::move(s.text);
                } else {
                    next[i] = aggregated.content;
                }
            });
        } catch (const Error& e) {
            for (std::size_t i = 0; i < m; ++i) {
                if (aggregate_events[i]) result.transcript.push_back(*aggregate_events[i]);
                if (member_events[i]) result.transcript.push_back(*member_events[i]);
            }
            result.error = "round " + std::to_string(round) + ": " + e.what();
            break;
        }
        for (std::size_t i = 0; i < m; ++i) {
            if (aggregate_events[i]) result.transcript.push_back(std::move(*aggregate_events[i]));
            if (member_events[i]) result.transcript.push_back(std::move(*member_events[i]));
        }
        pool = std::move(next);
        result.pool_sizes.push_back(pool.size());
    }
    result.final_pool = std::move(pool);
    result.total_tokens = sum_tokens(result.transcript);
    return result;
}

namespace {

std::size_t argmax_score(const std::vector<DsmCandidate>& pool) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
        if (pool[i].score > pool[best].score) best = i;
    }
    return best;
}

}  // namespace

DsmResult run_dsm(const ProblemInstance& problem, const DsmConfig& cfg, const PromptLibrary& prompts,
                  const GenerationParams& params, Backend& backend, std::uint64_t rng_seed) {
    problem.validate();
    cfg.validate();
    const TokenCount cap = reasoning_cap(cfg.inner, params);
    const auto nv = static_cast<std::size_t>(cfg.verifications);
    DsmResult result;

    auto verify = [&](std::size_t first, std::size_t count) {
        std::vector<TranscriptEvent> events(count * nv);
        parallel_for(count * nv, cfg.concurrency, [&](std::size_t job) {
            const std::size_t c = first + job / nv;
            CompletionRequest request;
            request.messages.push_back({Role::system, prompts.dsm_verify_instruction});
            request.messages.push_back({Role::user, render_template(prompts.dsm_verify_user,
                                                                    {{"problem", problem.prompt},
                                                                     {"solution", result.pool[c].solution}})});
            request.params = seeded(params, cap, rng_seed, "dsm-verify", c * nv + job % nv);
            const auto reply = backend.complete(request);
            const auto verdict = parse_verdict(reply.content);
            events[job] = TranscriptEvent{"verify",      result.pool[c].round_created, static_cast<int>(c),
                                          reply.content, reply.completion_tokens,     {},
                                          verdict.value_or(0.0), !verdict.has_value()};
        });
        for (std::size_t job = 0; job < events.size(); ++job) {
            auto& candidate = result.pool[first + job / nv];
            candidate.verdicts.push_back(*events[job].score);
            candidate.verification_texts.push_back(events[job].text);
            result.transcript.push_back(std::move(events[job]));
        }
        for (std::size_t c = first; c < first + count; ++c) {
            auto& candidate = result.pool[c];
            double sum = 0.0;
            for (double v : candidate.verdicts) sum += v;
            candidate.score = sum / static_cast<double>(candidate.verdicts.size());
        }
    };

    const auto ng = static_cast<std::size_t>(cfg.generations);
    result.pool.resize(ng);
    std::vector<TranscriptEvent> generated(ng);
    parallel_for(ng, cfg.concurrency, [&](std::size_t i) {
        Solved s = solve(problem, prompts, cfg.inner, seeded(params, cap, rng_seed, "dsm-generate", i), backend, "");
        generated[i] = TranscriptEvent{"generate", 0, static_cast<int>(i), s.text, s.tokens, {}, {}, false};
        result.pool[i].solution = std::move(s.text);
        result.pool[i].tokens = s.tokens;
    });
    for (auto& e : generated) result.transcript.push_back(std::move(e));
    verify(0, ng);

    for (int round = 1; round <= cfg.rounds; ++round) {
        const std::size_t best = argmax_score(result.pool);
        if (result.pool[best].score >= 1.0) break;
        const auto& target = result.pool[best];
        std::size_t worst = 0;
        for (std::size_t v = 1; v < target.verdicts.size(); ++v) {
            if (target.verdicts[v] < target.verdicts[worst]) worst = v;
        }
        CompletionRequest request;
        request.messages.push_back({Role::system, prompts.dsm_refine_instruction});
        request.messages.push_back({Role::user, render_template(prompts.dsm_refine_user,
                                                                {{"problem", problem.prompt},
                                                                 {"solution", target.solution},
                                                                 {"feedback", target.verification_texts[worst]}})});
        request.params = seeded(params, cap, rng_seed, "dsm-refine", static_cast<std::uint64_t>(round));
        const auto reply = backend.complete(request);
        result.transcript.push_back(TranscriptEvent{"refine", round, static_cast<int>(result.pool.size()),
                                                    reply.content, reply.completion_tokens,
                                                    {static_cast<int>(best)}, {}, false});
        DsmCandidate refined;
        refined.solution = reply.content;
        refined.round_created = round;
        refined.tokens = reply.completion_tokens;
        result.pool.push_back(std::move(refined));
        verify(result.pool.size() - 1, 1);
        result.refinement_rounds = round;
    }

    result.best_index = argmax_score(result.pool);
    result.best_solution = result.pool[result.best_index].solution;
    result.best_score = result.pool[result.best_index].score;
    result.total_tokens = sum_tokens(result.transcript);
    return result;
}

}  // namespace rcache
