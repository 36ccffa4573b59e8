#pragma once

// Evaluation over stored trajectories: accuracy vs budget, pass@k, maj@k,
// termination statistics and strategy annotation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rcache/backend.hpp"
#include "rcache/core.hpp"
#include "rcache/templates.hpp"

namespace rcache {

struct ProblemRuns {
    ProblemInstance problem;
    std::vector<RcTrajectory> samples;
};

struct EvalRun {
    std::string dataset_id;
    std::vector<ProblemRuns> problems;
    nlohmann::json protocol = nlohmann::json::object();

    // Equal sample count across problems; returns it.
    std::size_t validate() const;
};

struct CurvePoint {
    int turn = 0;
    TokenCount effective_budget = 0;        // turn x H_R
    double mean_cumulative_tokens = 0.0;  // measured spend through this turn
    double accuracy = 0.0;
};

// For t = 1..T, the answer as of turn t is the last boxed answer in turns
// 1..t. Trajectories shorter than t keep their final answer.
std::vector<CurvePoint> accuracy_vs_budget(const EvalRun& run);

struct PassCount {
    int n = 0;  // attempts
    int c = 0;  // correct attempts
};

// Mean over problems of 1 - C(n-c, k) / C(n, k).
double pass_at_k(const std::vector<PassCount>& per_problem, int k);

// Majority answer among the first k (normalized), or among a seeded random
// k-subset when `subsample_seed` is set. Ties go to the earliest-appearing.
std::string maj_at_k(const std::vector<std::string>& answers, int k,
                     std::optional<std::uint64_t> subsample_seed = std::nullopt);

// Per problem: how many samples end with a correct answer.
std::vector<PassCount> final_correct_counts(const EvalRun& run);

// Fraction of problems whose maj@k over the samples' final answers is correct.
// Samples without an answer do not vote.
double maj_accuracy(const EvalRun& run, int k);

struct TerminationStats {
    double overall_rate = 0.0;
    std::size_t turns = 0;
    // (upper edge of reasoning-length bin, fraction of all turns that
    // terminated with length <= edge): a CDF over lengths.
    std::vector<std::pair<TokenCount, double>> cdf;
};

TerminationStats termination_stats(const EvalRun& run, TokenCount bin_width = 1024);

enum class Strategy { verification, exploration, refinement, none };

std::string_view to_string(Strategy s);

struct StrategyLabel {
    std::string problem_id;
    std::size_t sample = 0;
    int turn = 0;  // the summary's turn t; the labelled trace is turn t + 1
    Strategy label = Strategy::none;
    bool flagged = false;
    std::optional<std::string> error;
};

// Parses "LABEL: x" (last occurrence) or a bare label word.
std::optional<Strategy> parse_strategy(std::string_view verdict);

// One annotator call per (z_S(t), z_R(t+1)) pair.
std::vector<StrategyLabel> annotate_strategies(const EvalRun& run, const PromptLibrary& prompts,
                                               const GenerationParams& params, Backend& backend,
                                               std::size_t concurrency = 8);

// CSV renderings.
std::string curve_csv(const std::vector<CurvePoint>& curve);
std::string termination_csv(const TerminationStats& stats);

}  // namespace rcache
