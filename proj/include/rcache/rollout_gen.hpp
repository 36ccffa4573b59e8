#pragma once

// Training-batch generation for summary-conditioned RL.
//
// Per problem: run RC for T_train turns (optionally starting from a replay
// summary), store the new summaries, sample N_summ unique ones, draw K
// rollouts conditioned on each, score them and standardize rewards within
// each group of K. Variants condition on full traces instead of summaries,
// or put the reward on the summaries themselves.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rcache/backend.hpp"
#include "rcache/baselines.hpp"
#include "rcache/core.hpp"
#include "rcache/grpo.hpp"
#include "rcache/replay.hpp"
#include "rcache/templates.hpp"

namespace rcache {

enum class RolloutMode { rc, baseline_trace, summary_reward, both };

std::string_view to_string(RolloutMode mode);
RolloutMode rollout_mode_from_string(std::string_view text);

struct RolloutJobConfig {
    int t_train = 3;
    int n_summ = 2;   // also N_trace in baseline_trace mode
    int k_group = 8;  // K
    BudgetSpec budget{16384, 2048, 3};
    RolloutMode mode = RolloutMode::rc;
    bool use_replay = false;
    int epoch = 1;
    BaselineType trace_baseline = BaselineType::self_refine;
    StdKind std_kind = StdKind::population;
    std::size_t concurrency = 8;

    void validate() const;
};

struct SkippedProblem {
    std::string problem_id;
    std::string error;
};

struct BatchResult {
    std::vector<TrainingBatchRow> rows;
    std::vector<std::string> zero_variance_groups;
    // Problems that wanted a replay seed but had no buffer entry.
    std::vector<std::string> fresh_start_problems;
    std::vector<SkippedProblem> skipped;
};

// `replay` may be null; when present, new summaries are inserted at
// cfg.epoch, and with cfg.use_replay it also seeds z_S(0).
BatchResult generate_batch(const std::vector<ProblemInstance>& problems, const RolloutJobConfig& cfg,
                           const PromptLibrary& prompts, const GenerationParams& params, ReplayBuffer* replay,
                           Backend& backend, std::uint64_t rng_seed);

// Rewards summaries by the fraction of K downstream rollouts that are
// correct. Groups are K summaries drawn from one summarization context. In
// `both` mode the ordinary rollout rows are emitted as well.
BatchResult generate_batch_summary_reward(const std::vector<ProblemInstance>& problems,
                                          const RolloutJobConfig& cfg, const PromptLibrary& prompts,
                                          const GenerationParams& params, ReplayBuffer* replay, Backend& backend,
                                          std::uint64_t rng_seed);

// Conditions rollouts on full prior traces of an iterative baseline run.
BatchResult generate_batch_baseline(const std::vector<ProblemInstance>& problems, const RolloutJobConfig& cfg,
                                    const PromptLibrary& prompts, const GenerationParams& params, Backend& backend,
                                    std::uint64_t rng_seed);

// Dispatch on cfg.mode.
BatchResult generate_rollouts(const std::vector<ProblemInstance>& problems, const RolloutJobConfig& cfg,
                              const PromptLibrary& prompts, const GenerationParams& params, ReplayBuffer* replay,
                              Backend& backend, std::uint64_t rng_seed);

void write_batch_jsonl(const std::filesystem::path& path, const std::vector<TrainingBatchRow>& rows);
std::vector<TrainingBatchRow> read_batch_jsonl(const std::filesystem::path& path);

// Sidecar manifest: config, seed, template hashes, counts and flagged groups.
nlohmann::json batch_manifest(const RolloutJobConfig& cfg, const PromptLibrary& prompts, const BatchResult& result,
                              std::uint64_t rng_seed);

}  // namespace rcache
