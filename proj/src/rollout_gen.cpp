#include "rcache/rollout_gen.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "rcache/errors.hpp"
#include "rcache/parallel.hpp"
#include "rcache/rc_decoder.hpp"
#include "rcache/reward.hpp"

namespace rcache {

using nlohmann::json;

std::string_view to_string(RolloutMode mode) {
    switch (mode) {
        case RolloutMode::rc: return "rc";
        case RolloutMode::baseline_trace: return "baseline_trace";
        case RolloutMode::summary_reward: return "summary_reward";
        case RolloutMode::both: return "both";
    }
    return "rc";
}

RolloutMode rollout_mode_from_string(std::string_view text) {
    if (text == "rc") return RolloutMode::rc;
    if (text == "baseline_trace" || text == "baseline-trace") return RolloutMode::baseline_trace;
    if (text == "summary_reward" || text == "summary-reward") return RolloutMode::summary_reward;
    if (text == "both") return RolloutMode::both;
    throw InvalidArgument("unknown rollout mode '" + std::string(text) + "'");
}

void RolloutJobConfig::validate() const {
    if (t_train < 1) throw InvalidArgument("t_train must be >= 1");
    if (n_summ < 1 || n_summ > t_train) throw InvalidArgument("n_summ must lie in [1, t_train]");
    if (k_group < 2) throw InvalidArgument("k_group must be >= 2");
    if (concurrency < 1) throw InvalidArgument("concurrency must be >= 1");
}

namespace {

struct Conditioning {
    int source_turn;
    std::string text;
    int lineage_depth;
};

struct ProblemOutput {
    std::vector<TrainingBatchRow> rows;
    std::vector<std::string> zero_variance_groups;
    bool fresh_start = false;
    std::optional<std::string> error;
};

// First occurrence of each distinct nonempty text, in turn order.
std::vector<Conditioning> unique_by_text(std::vector<Conditioning> items) {
    std::vector<Conditioning> unique;
    std::set<std::string> seen;
    for (auto& item : items) {
        if (item.text.empty() || !seen.insert(item.text).second) continue;
        unique.push_back(std::move(item));
    }
    return unique;
}

// Uniform sample of min(n, size) items without replacement, kept in turn order.
std::vector<Conditioning> sample_unique(std::vector<Conditioning> unique, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::shuffle(unique.begin(), unique.end(), rng);
    unique.resize(std::min(unique.size(), static_cast<std::size_t>(n)));
    std::sort(unique.begin(), unique.end(),
              [](const Conditioning& a, const Conditioning& b) { return a.source_turn < b.source_turn; });
    return unique;
}

std::string group_id_for(const std::string& problem_id, std::string_view tag, int turn) {
    return problem_id + "/" + std::string(tag) + "/t" + std::to_string(turn);
}

// Assigns group advantages to `rows`; returns true for a zero-variance group.
bool assign_advantages(std::span<TrainingBatchRow> rows, StdKind kind) {
    std::vector<double> rewards;
    rewards.reserve(rows.size());
    for (const auto& r : rows) rewards.push_back(r.reward);
    const auto advantages = compute_advantages(rewards, kind);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].advantage = advantages[i];
    return is_zero_variance(rewards);
}

// K rollouts for each conditioning text; rows grouped per conditioning.
void emit_rollout_groups(const ProblemInstance& problem, const std::vector<Conditioning>& chosen,
                         ConditioningKind kind, const RolloutJobConfig& cfg, const PromptLibrary& prompts,
                         const GenerationParams& params, Backend& backend, std::uint64_t seed, ProblemOutput& out) {
    const auto k = static_cast<std::size_t>(cfg.k_group);
    std::vector<TrainingBatchRow> rows(chosen.size() * k);
    parallel_for(rows.size(), cfg.concurrency, [&](std::size_t job) {
        const Conditioning& c = chosen[job / k];
        const std::uint64_t row_seed = derive_seed(seed, "rollout", job);
        const auto call_params = params.with(cfg.budget.reasoning_tokens(), row_seed);
        const CompletionRequest request =
            kind == ConditioningKind::summary
                ? build_reasoning_request(prompts.rc, problem.prompt, c.text, cfg.budget, call_params)
                : build_trace_request(prompts, cfg.trace_baseline, problem.prompt, c.text, cfg.budget, call_params);
        const auto result = backend.complete(request);
        const RewardOutcome reward = score(result.content, *problem.answer);
        TrainingBatchRow& row = rows[job];
        row.problem_id = problem.id;
        row.source_turn = c.source_turn;
        row.conditioning_kind = kind;
        row.conditioning_text = c.text;
        row.rollout_text = result.content;
        row.rollout_tokens = result.completion_tokens;
        row.reward = reward.reward;
        row.group_id = group_id_for(problem.id, to_string(kind), c.source_turn);
        row.lineage_depth = c.lineage_depth;
        row.seed = row_seed;
    });
    for (std::size_t g = 0; g < chosen.size(); ++g) {
        std::span<TrainingBatchRow> group(rows.data() + g * k, k);
        if (assign_advantages(group, cfg.std_kind)) out.zero_variance_groups.push_back(group.front().group_id);
    }
    std::move(rows.begin(), rows.end(), std::back_inserter(out.rows));
}

// Groups of K summaries drawn from the turn-t summarization context, each
// rewarded by the mean correctness of K downstream rollouts.
void emit_summary_groups(const ProblemInstance& problem, const RcTrajectory& trajectory,
                         const std::vector<Conditioning>& chosen, const std::string& initial_summary,
                         const RolloutJobConfig& cfg, const PromptLibrary& prompts, const GenerationParams& params,
                         Backend& backend, std::uint64_t seed, ProblemOutput& out) {
    const auto k = static_cast<std::size_t>(cfg.k_group);
    for (const Conditioning& c : chosen) {
        const auto& turn = trajectory.turns[static_cast<std::size_t>(c.source_turn - 1)];
        const std::string& previous_summary =
            c.source_turn == 1 ? initial_summary : trajectory.turns[static_cast<std::size_t>(c.source_turn - 2)].summary;

        std::vector<TrainingBatchRow> rows(k);
        parallel_for(k, cfg.concurrency, [&](std::size_t i) {
            const std::uint64_t summary_seed =
                derive_seed(seed, "summary-sample", static_cast<std::uint64_t>(c.source_turn) * k + i);
            const auto summarized = backend.complete(build_summary_request(
                prompts.rc, problem.prompt, turn.reasoning, previous_summary, cfg.budget,
                params.with(cfg.budget.summary_tokens(), summary_seed)));
            TrainingBatchRow& row = rows[i];
            row.problem_id = problem.id;
            row.source_turn = c.source_turn;
            row.conditioning_kind = ConditioningKind::trace;
            row.conditioning_text = turn.reasoning;
            row.rollout_text = summarized.content;
            row.rollout_tokens = summarized.completion_tokens;
            row.group_id = group_id_for(problem.id, "summary-target", c.source_turn);
            row.lineage_depth = c.lineage_depth;
            row.seed = summary_seed;
            row.target = RowTarget::summary;
        });

        // K downstream rollouts per sampled summary.
        std::vector<double> downstream(k * k, 0.0);
        parallel_for(k * k, cfg.concurrency, [&](std::size_t job) {
            const TrainingBatchRow& summary_row = rows[job / k];
            const auto call_params =
                params.with(cfg.budget.reasoning_tokens(), derive_seed(summary_row.seed, "downstream", job % k));
            const auto result = backend.complete(
                build_reasoning_request(prompts.rc, problem.prompt, summary_row.rollout_text, cfg.budget, call_params));
            downstream[job] = score(result.content, *problem.answer).reward;
        });
        for (std::size_t i = 0; i < k; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) sum += downstream[i * k + j];
            rows[i].reward = sum / static_cast<double>(k);
        }
        if (assign_advantages(rows, cfg.std_kind)) out.zero_variance_groups.push_back(rows.front().group_id);
        std::move(rows.begin(), rows.end(), std::back_inserter(out.rows));
    }
}

struct RcStart {
    std::string summary;
    int depth = 0;
    bool fresh_start = false;
};

RcStart replay_start(const ProblemInstance& problem, const RolloutJobConfig& cfg, ReplayBuffer* replay) {
    if (!cfg.use_replay) return {};
    if (replay != nullptr && replay->contains(problem.id)) {
        const ReplaySample s = replay->sample(problem.id);
        return {s.summary, s.lineage_depth, false};
    }
    return {"", 0, true};
}

ProblemOutput process_rc_problem(const ProblemInstance& problem, const RolloutJobConfig& cfg,
                                 const PromptLibrary& prompts, const GenerationParams& params, ReplayBuffer* replay,
                                 Backend& backend, std::uint64_t seed, bool rollout_rows, bool summary_rows) {
    ProblemOutput out;
    const RcStart start = replay_start(problem, cfg, replay);
    out.fresh_start = start.fresh_start;

    RcOptions options;
    options.initial_summary = start.summary;
    options.summarize_final_turn = true;
    const RcTrajectory trajectory = run_rc(problem, prompts.rc, cfg.budget.with_turns(cfg.t_train),
                                           params.with(params.max_tokens, derive_seed(seed, "rc")), backend, options);

    std::vector<Conditioning> collected;
    std::vector<SummaryInsert> inserts;
    for (const auto& turn : trajectory.turns) {
        collected.push_back({turn.turn_index, turn.summary, start.depth + turn.turn_index});
        if (!turn.summary.empty()) inserts.push_back({turn.summary, turn.turn_index});
    }
    if (replay != nullptr && !inserts.empty()) replay->insert(problem.id, inserts, start.depth, cfg.epoch);

    const auto chosen = sample_unique(unique_by_text(std::move(collected)), cfg.n_summ, derive_seed(seed, "pick"));
    if (rollout_rows) {
        emit_rollout_groups(problem, chosen, ConditioningKind::summary, cfg, prompts, params, backend, seed, out);
    }
    if (summary_rows) {
        emit_summary_groups(problem, trajectory, chosen, start.summary, cfg, prompts, params, backend,
                            derive_seed(seed, "summary-target"), out);
    }
    return out;
}

ProblemOutput process_trace_problem(const ProblemInstance& problem, const RolloutJobConfig& cfg,
                                    const PromptLibrary& prompts, const GenerationParams& params, Backend& backend,
                                    std::uint64_t seed) {
    ProblemOutput out;
    BaselineKind kind;
    kind.type = cfg.trace_baseline;
    const RcTrajectory trajectory =
        run_iterative_baseline(kind, problem, prompts, cfg.budget.with_turns(cfg.t_train),
                               params.with(params.max_tokens, derive_seed(seed, "baseline")), backend);
    std::vector<Conditioning> collected;
    for (const auto& turn : trajectory.turns) collected.push_back({turn.turn_index, turn.reasoning, turn.turn_index});
    const auto chosen = sample_unique(unique_by_text(std::move(collected)), cfg.n_summ, derive_seed(seed, "pick"));
    emit_rollout_groups(problem, chosen, ConditioningKind::trace, cfg, prompts, params, backend, seed, out);
    return out;
}

template <typename PerProblem>
BatchResult run_per_problem(const std::vector<ProblemInstance>& problems, const RolloutJobConfig& cfg,
                            std::uint64_t rng_seed, PerProblem&& per_problem) {
    cfg.validate();
    for (const auto& p : problems) {
        p.validate();
        if (!p.answer) throw InvalidArgument("problem '" + p.id + "' has no reference answer");
    }
    std::vector<ProblemOutput> outputs(problems.size());
    parallel_for(problems.size(), cfg.concurrency, [&](std::size_t i) {
        try {
            outputs[i] = per_problem(problems[i], derive_seed(rng_seed, problems[i].id));
        } catch (const Error& e) {
            outputs[i] = ProblemOutput{};
            outputs[i].error = e.what();
        }
    });
    BatchResult result;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        auto& o = outputs[i];
        if (o.error) {
            result.skipped.push_back({problems[i].id, *o.error});
            continue;
        }
        if (o.fresh_start) result.fresh_start_problems.push_back(problems[i].id);
        std::move(o.rows.begin(), o.rows.end(), std::back_inserter(result.rows));
        std::move(o.zero_variance_groups.begin(), o.zero_variance_groups.end(),
                  std::back_inserter(result.zero_variance_groups));
    }
    return result;
}

}  // namespace

BatchResult generate_batch(const std::vector<ProblemInstance>& problems, const RolloutJobConfig& cfg,
                           const PromptLibrary& prompts, const GenerationParams& params, ReplayBuffer* replay,
                           Backend& backend, std::uint64_t rng_seed) {
    return run_per_problem(problems, cfg, rng_seed, [&](const ProblemInstance& p, std::uint64_t seed) {
        return process_rc_problem(p, cfg, prompts, params, replay, backend, seed, true, false);
    });
}

BatchResult generate_batch_summary_reward(const std::vector<ProblemInstance>& problems,
                                          const RolloutJobConfig& cfg, const PromptLibrary& prompts,
                                          const GenerationParams& params, ReplayBuffer* replay, Backend& backend,
                                          std::uint64_t rng_seed) {
    if (cfg.mode != RolloutMode::summary_reward && cfg.mode != RolloutMode::both) {
        throw InvalidArgument("summary-reward generation needs mode summary_reward or both");
    }
    const bool both = cfg.mode == RolloutMode::both;
    return run_per_problem(problems, cfg, rng_seed, [&](const ProblemInstance& p, std::uint64_t seed) {
        return process_rc_problem(p, cfg, prompts, params, replay, backend, seed, both, true);
    });
}

BatchResult generate_batch_baseline(const std::vector<ProblemInstance>& problems, const RolloutJobConfig& cfg,
                                    const PromptLibrary& prompts, const GenerationParams& params, Backend& backend,
                                    std::uint64_t rng_seed) {
    if (cfg.mode != RolloutMode::baseline_trace) throw InvalidArgument("baseline generation needs mode baseline_trace");
    return run_per_problem(problems, cfg, rng_seed, [&](const ProblemInstance& p, std::uint64_t seed) {
        return process_trace_problem(p, cfg, prompts, params, backend, seed);
    });
}

BatchResult generate_rollouts(const std::vector<ProblemInstance>& problems, const RolloutJobConfig& cfg,
                              const PromptLibrary& prompts, const GenerationParams& params, ReplayBuffer* replay,
                              Backend& backend, std::uint64_t rng_seed) {
    switch (cfg.mode) {
        case RolloutMode::rc: return generate_batch(problems, cfg, prompts, params, replay, backend, rng_seed);
        case RolloutMode::baseline_trace:
            return generate_batch_baseline(problems, cfg, prompts, params, backend, rng_seed);
        case RolloutMode::summary_reward:
        case RolloutMode::both:
            return generate_batch_summary_reward(problems, cfg, prompts, params, replay, backend, rng_seed);
    }
    throw InvalidArgument("unknown rollout mode");
}

void write_batch_jsonl(const std::filesystem::path& path, const std::vector<TrainingBatchRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write batch file " + path.string());
    for (const auto& row : rows) out << json(row).dump() << '\n';
    if (!out) throw IoError("failed writing batch file " + path.string());
}

std::vector<TrainingBatchRow> read_batch_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open batch file " + path.string());
    std::vector<TrainingBatchRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(json::parse(line).get<TrainingBatchRow>());
        } catch (const json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

json batch_manifest(const RolloutJobConfig& cfg, const PromptLibrary& prompts, const BatchResult& result,
                    std::uint64_t rng_seed) {
    json hashes = json::object();
    for (const auto& [name, text] : prompts.fields()) hashes[name] = sha256_hex(text);
    std::set<std::string> groups;
    for (const auto& row : result.rows) groups.insert(row.group_id);
    json skipped = json::array();
    for (const auto& s : result.skipped) skipped.push_back({{"problem_id", s.problem_id}, {"error", s.error}});
    return json{{"schema_version", 1},
                {"config",
                 {{"t_train", cfg.t_train},
                  {"n_summ", cfg.n_summ},
                  {"k_group", cfg.k_group},
                  {"budget", budget_to_json(cfg.budget)},
                  {"mode", to_string(cfg.mode)},
                  {"use_replay", cfg.use_replay},
                  {"epoch", cfg.epoch},
                  {"std", cfg.std_kind == StdKind::population ? "population" : "sample"}}},
                {"seed", rng_seed},
                {"prompt_template_hashes", hashes},
                {"row_count", result.rows.size()},
                {"group_count", groups.size()},
                {"zero_variance_groups", result.zero_variance_groups},
                {"fresh_start_problems", result.fresh_start_problems},
                {"skipped", skipped}};
}

}  // namespace rcache
