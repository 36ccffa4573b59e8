#pragma once

// Test-time scaffolds: Recursive Self-Aggregation (RSA) and the
// generate-verify-refine DSM agent. Either can use plain single-call decoding
// or RC decoding as its inner solver.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rcache/backend.hpp"
#include "rcache/core.hpp"
#include "rcache/templates.hpp"

namespace rcache {

// Inner solver: plain bounded decoding (single call, H_R = params.max_tokens)
// when rc is empty, RC decoding with the given budget otherwise.
struct InnerSolver {
    std::optional<BudgetSpec> rc;
};

struct RsaConfig {
    int pool_size = 8;     // M
    int sample_size = 2;   // k
    int rounds = 10;       // T_RSA, including the initial sampling round
    InnerSolver inner;
    std::size_t concurrency = 8;

    void validate() const;
};

struct DsmConfig {
    int generations = 8;     // n_g
    int verifications = 4;   // n_v
    int rounds = 6;          // T_DSM
    InnerSolver inner;
    std::size_t concurrency = 8;

    void validate() const;
};

struct TranscriptEvent {
    std::string stage;  // generate | aggregate | refine | verify
    int round = 0;
    int slot = 0;       // pool slot / candidate index
    std::string text;
    TokenCount tokens = 0;
    std::vector<int> inputs;  // pool indices an aggregation drew
    std::optional<double> score;
    bool flagged = false;
};

void to_json(nlohmann::json& j, const TranscriptEvent& e);

struct RsaResult {
    std::vector<std::string> final_pool;
    std::vector<std::size_t> pool_sizes;  // after each round
    std::vector<TranscriptEvent> transcript;
    TokenCount total_tokens = 0;
    std::optional<std::string> error;  // set when a round aborted
};

struct DsmCandidate {
    std::string solution;
    std::vector<double> verdicts;
    std::vector<std::string> verification_texts;
    double score = 0.0;
    int round_created = 0;
    TokenCount tokens = 0;
};

struct DsmResult {
    std::string best_solution;
    double best_score = 0.0;
    std::size_t best_index = 0;
    std::vector<DsmCandidate> pool;
    int refinement_rounds = 0;
    std::vector<TranscriptEvent> transcript;
    TokenCount total_tokens = 0;
};

// Parses the last "SCORE: x" line with x in {0, 0.0, 0.5, 1, 1.0}.
std::optional<double> parse_verdict(std::string_view text);

CompletionRequest build_aggregation_request(const PromptLibrary& prompts, std::string_view problem,
                                            const std::vector<std::string>& candidates,
                                            const GenerationParams& params);

// Backend errors abort the current round; the pool and transcript up to the
// previous round are returned with `error` set.
RsaResult run_rsa(const ProblemInstance& problem, const RsaConfig& cfg, const PromptLibrary& prompts,
                  const GenerationParams& params, Backend& backend, std::uint64_t rng_seed);

DsmResult run_dsm(const ProblemInstance& problem, const DsmConfig& cfg, const PromptLibrary& prompts,
                  const GenerationParams& params, Backend& backend, std::uint64_t rng_seed);

}  // namespace rcache
