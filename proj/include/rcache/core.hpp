#pragma once

// Domain types shared by every module. All are plain value types; once built
// they are safe to share across threads.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rcache {

using TokenCount = std::int64_t;

struct ProblemInstance {
    std::string id;
    std::string prompt;
    std::optional<std::string> answer;  // absent for unlabeled evaluation
    std::string domain_tag;

    void validate() const;
};

// Per-turn reasoning budget H_R, per-turn summary budget H_S and turn count T.
class BudgetSpec {
public:
    BudgetSpec(TokenCount reasoning_tokens, TokenCount summary_tokens, int turns);

    [[nodiscard]] TokenCount reasoning_tokens() const noexcept { return reasoning_tokens_; }
    [[nodiscard]] TokenCount summary_tokens() const noexcept { return summary_tokens_; }
    [[nodiscard]] int turns() const noexcept { return turns_; }

    // T x H_R. Summary tokens are deliberately excluded; exact spend is tracked
    // per trajectory in RcTrajectory::cumulative_tokens.
    [[nodiscard]] TokenCount effective() const noexcept { return turns_ * reasoning_tokens_; }

    // Upper bound on what one turn may spend: H_R + H_S.
    [[nodiscard]] TokenCount per_turn_cap() const noexcept { return reasoning_tokens_ + summary_tokens_; }

    [[nodiscard]] BudgetSpec with_turns(int turns) const { return {reasoning_tokens_, summary_tokens_, turns}; }

    friend bool operator==(const BudgetSpec&, const BudgetSpec&) = default;

private:
    TokenCount reasoning_tokens_;
    TokenCount summary_tokens_;
    int turns_;
};

TokenCount effective_budget(const BudgetSpec& spec);

struct GenerationParams {
    double temperature = 0.7;
    double top_p = 0.8;
    TokenCount max_tokens = 16384;
    std::optional<std::uint64_t> seed;

    void validate() const;

    [[nodiscard]] GenerationParams with(TokenCount new_max_tokens, std::optional<std::uint64_t> new_seed) const {
        GenerationParams copy = *this;
        copy.max_tokens = new_max_tokens;
        copy.seed = new_seed;
        return copy;
    }

    friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct ChatTurnMessage {
    Role role = Role::user;
    std::string content;

    friend bool operator==(const ChatTurnMessage&, const ChatTurnMessage&) = default;
};

struct RcTurnRecord {
    int turn_index = 1;  // 1-based
    std::string reasoning;
    std::string summary;  // empty when the turn was not summarized
    TokenCount reasoning_tokens = 0;
    TokenCount summary_tokens = 0;
    bool terminated = false;
    std::optional<std::string> extracted_answer;
    bool reasoning_truncated = false;  // finish_reason=length
    bool summary_truncated = false;

    friend bool operator==(const RcTurnRecord&, const RcTurnRecord&) = default;
};

struct RcTrajectory {
    std::string problem_id;
    std::string decoder = "rc";
    BudgetSpec budget{16384, 2048, 1};
    std::vector<RcTurnRecord> turns;
    std::string final_output;
    std::vector<TokenCount> cumulative_tokens;
    // Free-form decoder notes (continuation mode, carryover token space, ...).
    std::map<std::string, std::string> metadata;

    // Appends a turn and extends cumulative_tokens/final_output accordingly.
    void push_turn(RcTurnRecord record);

    // Answer of the last terminated turn among the first `turn_count` turns.
    [[nodiscard]] std::optional<std::string> answer_through(std::size_t turn_count) const;

    [[nodiscard]] TokenCount total_tokens() const noexcept {
        return cumulative_tokens.empty() ? 0 : cumulative_tokens.back();
    }

    friend bool operator==(const RcTrajectory&, const RcTrajectory&) = default;
};

enum class ConditioningKind { summary, trace };
enum class RowTarget { rollout, summary };

std::string_view to_string(ConditioningKind kind);
std::string_view to_string(RowTarget target);

struct TrainingBatchRow {
    std::string problem_id;
    int source_turn = 1;
    ConditioningKind conditioning_kind = ConditioningKind::summary;
    std::string conditioning_text;
    std::string rollout_text;
    TokenCount rollout_tokens = 0;
    double reward = 0.0;
    std::string group_id;
    double advantage = 0.0;
    int lineage_depth = 0;
    std::uint64_t seed = 0;
    RowTarget target = RowTarget::rollout;

    friend bool operator==(const TrainingBatchRow&, const TrainingBatchRow&) = default;
};

// JSON mappings. Trajectory and batch-row layouts are external file formats.
void to_json(nlohmann::json& j, const ProblemInstance& p);
void from_json(const nlohmann::json& j, ProblemInstance& p);
nlohmann::json budget_to_json(const BudgetSpec& b);
BudgetSpec budget_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const GenerationParams& p);
void from_json(const nlohmann::json& j, GenerationParams& p);
void to_json(nlohmann::json& j, const RcTurnRecord& r);
void from_json(const nlohmann::json& j, RcTurnRecord& r);
void to_json(nlohmann::json& j, const RcTrajectory& t);
RcTrajectory trajectory_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const TrainingBatchRow& r);
void from_json(const nlohmann::json& j, TrainingBatchRow& r);

// Deterministic seed derivation so all randomness flows from one root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index = 0);

}  // namespace rcache
