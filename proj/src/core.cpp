#include "rcache/core.hpp"

#include "rcache/errors.hpp"

namespace rcache {

using nlohmann::json;

void ProblemInstance::validate() const {
    if (id.empty()) throw InvalidArgument("problem id must be nonempty");
    if (prompt.empty()) throw InvalidArgument("problem '" + id + "' has an empty prompt");
}

BudgetSpec::BudgetSpec(TokenCount reasoning_tokens, TokenCount summary_tokens, int turns)
    : reasoning_tokens_(reasoning_tokens), summary_tokens_(summary_tokens), turns_(turns) {
    if (reasoning_tokens_ < 1) throw InvalidArgument("H_R must be >= 1");
    if (summary_tokens_ < 0) throw InvalidArgument("H_S must be >= 0");
    if (summary_tokens_ >= reasoning_tokens_) throw InvalidArgument("H_S must be smaller than H_R");
    if (turns_ < 1) throw InvalidArgument("turn count must be >= 1");
}

TokenCount effective_budget(const BudgetSpec& spec) { return spec.effective(); }

void GenerationParams::validate() const {
    if (max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
    if (temperature < 0.0) throw InvalidArgument("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("top_p must lie in (0, 1]");
}

std::string_view to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(std::string_view text) {
    if (text == "system") return Role::system;
    if (text == "user") return Role::user;
    if (text == "assistant") return Role::assistant;
    throw InvalidArgument("unknown role '" + std::string(text) + "'");
}

std::string_view to_string(ConditioningKind kind) {
    return kind == ConditioningKind::summary ? "summary" : "trace";
}

std::string_view to_string(RowTarget target) { return target == RowTarget::rollout ? "rollout" : "summary"; }

void RcTrajectory::push_turn(RcTurnRecord record) {
    const TokenCount spent = record.reasoning_tokens + record.summary_tokens;
    cumulative_tokens.push_back(total_tokens() + spent);
    final_output = record.reasoning;
    turns.push_back(std::move(record));
}

std::optional<std::string> RcTrajectory::answer_through(std::size_t turn_count) const {
    std::optional<std::string> answer;
    for (std::size_t i = 0; i < turns.size() && i < turn_count; ++i) {
        if (turns[i].extracted_answer) answer = turns[i].extracted_answer;
    }
    return answer;
}

// ---- JSON ----

void to_json(json& j, const ProblemInstance& p) {
    j = json{{"id", p.id}, {"prompt", p.prompt}};
    if (p.answer) j["answer"] = *p.answer;
    if (!p.domain_tag.empty()) j["domain"] = p.domain_tag;
}

void from_json(const json& j, ProblemInstance& p) {
    p.id = j.at("id").get<std::string>();
    p.prompt = j.at("prompt").get<std::string>();
    p.answer.reset();
    if (auto it = j.find("answer"); it != j.end() && !it->is_null()) {
        p.answer = it->is_string() ? it->get<std::string>() : it->dump();
    }
    p.domain_tag = j.value("domain", std::string{});
}

json budget_to_json(const BudgetSpec& b) {
    return json{{"h_r", b.reasoning_tokens()},
                {"h_s", b.summary_tokens()},
                {"turns", b.turns()},
                {"h_test_effective", b.effective()}};
}

BudgetSpec budget_from_json(const json& j) {
    BudgetSpec b{j.at("h_r").get<TokenCount>(), j.at("h_s").get<TokenCount>(), j.at("turns").get<int>()};
    if (auto it = j.find("h_test_effective"); it != j.end() && it->get<TokenCount>() != b.effective()) {
        throw InvalidArgument("h_test_effective does not equal turns x h_r");
    }
    return b;
}

void to_json(json& j, const GenerationParams& p) {
    j = json{{"temperature", p.temperature}, {"top_p", p.top_p}, {"max_tokens", p.max_tokens}};
    if (p.seed) j["seed"] = *p.seed;
}

void from_json(const json& j, GenerationParams& p) {
    p.temperature = j.value("temperature", p.temperature);
    p.top_p = j.value("top_p", p.top_p);
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    p.seed.reset();
    if (auto it = j.find("seed"); it != j.end() && !it->is_null()) p.seed = it->get<std::uint64_t>();
}

void to_json(json& j, const RcTurnRecord& r) {
    j = json{{"turn", r.turn_index},
             {"reasoning", r.reasoning},
             {"summary", r.summary},
             {"reasoning_tokens", r.reasoning_tokens},
             {"summary_tokens", r.summary_tokens},
             {"terminated", r.terminated},
             {"extracted_answer", r.extracted_answer ? json(*r.extracted_answer) : json(nullptr)},
             {"reasoning_truncated", r.reasoning_truncated},
             {"summary_truncated", r.summary_truncated}};
}

void from_json(const json& j, RcTurnRecord& r) {
    r.turn_index = j.at("turn").get<int>();
    r.reasoning = j.at("reasoning").get<std::string>();
    r.summary = j.at("summary").get<std::string>();
    r.reasoning_tokens = j.at("reasoning_tokens").get<TokenCount>();
    r.summary_tokens = j.at("summary_tokens").get<TokenCount>();
    r.terminated = j.at("terminated").get<bool>();
    r.extracted_answer.reset();
    if (const auto& a = j.at("extracted_answer"); !a.is_null()) r.extracted_answer = a.get<std::string>();
    r.reasoning_truncated = j.value("reasoning_truncated", false);
    r.summary_truncated = j.value("summary_truncated", false);
    if (r.terminated != r.extracted_answer.has_value()) {
        throw InvalidArgument("turn " + std::to_string(r.turn_index) + ": terminated flag disagrees with answer");
    }
}

void to_json(json& j, const RcTrajectory& t) {
    j = json{{"problem_id", t.problem_id},
             {"decoder", t.decoder},
             {"budget", budget_to_json(t.budget)},
             {"turns", t.turns},
             {"final_output", t.final_output},
             {"cumulative_tokens", t.cumulative_tokens},
             {"metadata", t.metadata}};
}

RcTrajectory trajectory_from_json(const json& j) {
    RcTrajectory t;
    t.problem_id = j.at("problem_id").get<std::string>();
    t.decoder = j.at("decoder").get<std::string>();
    t.budget = budget_from_json(j.at("budget"));
    t.turns = j.at("turns").get<std::vector<RcTurnRecord>>();
    t.final_output = j.at("final_output").get<std::string>();
    t.cumulative_tokens = j.at("cumulative_tokens").get<std::vector<TokenCount>>();
    t.metadata = j.value("metadata", std::map<std::string, std::string>{});
    if (t.cumulative_tokens.size() != t.turns.size()) {
        throw InvalidArgument("trajectory '" + t.problem_id + "': cumulative_tokens length mismatch");
    }
    return t;
}

void to_json(json& j, const TrainingBatchRow& r) {
    j = json{{"problem_id", r.problem_id},
             {"source_turn_t", r.source_turn},
             {"conditioning_kind", to_string(r.conditioning_kind)},
             {"conditioning_text", r.conditioning_text},
             {"rollout_text", r.rollout_text},
             {"rollout_tokens", r.rollout_tokens},
             {"reward", r.reward},
             {"group_id", r.group_id},
             {"advantage", r.advantage},
             {"lineage_depth", r.lineage_depth},
             {"seed", r.seed}};
    if (r.target == RowTarget::summary) j["target"] = to_string(r.target);
}

void from_json(const json& j, TrainingBatchRow& r) {
    r.problem_id = j.at("problem_id").get<std::string>();
    r.source_turn = j.at("source_turn_t").get<int>();
    const auto kind = j.at("conditioning_kind").get<std::string>();
    if (kind == "summary") {
        r.conditioning_kind = ConditioningKind::summary;
    } else if (kind == "trace") {
        r.conditioning_kind = ConditioningKind::trace;
    } else {
        throw InvalidArgument("unknown conditioning_kind '" + kind + "'");
    }
    r.conditioning_text = j.at("conditioning_text").get<std::string>();
    r.rollout_text = j.at("rollout_text").get<std::string>();
    r.rollout_tokens = j.at("rollout_tokens").get<TokenCount>();
    r.reward = j.at("reward").get<double>();
    r.group_id = j.at("group_id").get<std::string>();
    r.advantage = j.at("advantage").get<double>();
    r.lineage_depth = j.at("lineage_depth").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.target = j.value("target", std::string{"rollout"}) == "summary" ? RowTarget::summary : RowTarget::rollout;
}

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index) {
    // FNV-1a over the label, mixed with root and index.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(root ^ h) + index);
}

}  // namespace rcache
