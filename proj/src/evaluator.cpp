#include "rcache/evaluator.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "rcache/errors.hpp"
#include "rcache/parallel.hpp"
#include "rcache/reward.hpp"
#include "rcache/text_util.hpp"

namespace rcache {

std::size_t EvalRun::validate() const {
    if (problems.empty()) return 0;
    const std::size_t n = problems.front().samples.size();
    for (const auto& p : problems) {
        if (p.samples.size() != n) {
            throw InvalidArgument("problem '" + p.problem.id + "' has " + std::to_string(p.samples.size()) +
                                  " samples, expected " + std::to_string(n));
        }
    }
    return n;
}

namespace {

void require_labels(const EvalRun& run) {
    for (const auto& p : run.problems) {
        if (!p.problem.answer) throw InvalidArgument("problem '" + p.problem.id + "' has no reference answer");
    }
}

bool correct(const std::optional<std::string>& answer, const ProblemInstance& problem) {
    return answer && answers_equivalent(*answer, *problem.answer);
}

}  // namespace

std::vector<CurvePoint> accuracy_vs_budget(const EvalRun& run) {
    run.validate();
    require_labels(run);
    int max_turns = 0;
    TokenCount h_r = 0;
    std::size_t total = 0;
    for (const auto& p : run.problems) {
        for (const auto& t : p.samples) {
            max_turns = std::max(max_turns, t.budget.turns());
            h_r = std::max(h_r, t.budget.reasoning_tokens());
            ++total;
        }
    }
    std::vector<CurvePoint> curve;
    if (total == 0) return curve;
    for (int turn = 1; turn <= max_turns; ++turn) {
        double hits = 0.0;
        double spent = 0.0;
        for (const auto& p : run.problems) {
            for (const auto& t : p.samples) {
                const auto through = static_cast<std::size_t>(turn);
                if (correct(t.answer_through(through), p.problem)) hits += 1.0;
                if (!t.cumulative_tokens.empty()) {
                    spent += static_cast<double>(t.cumulative_tokens[std::min(through, t.cumulative_tokens.size()) - 1]);
                }
            }
        }
        const auto denom = static_cast<double>(total);
        curve.push_back({turn, turn * h_r, spent / denom, hits / denom});
    }
    return curve;
}

double pass_at_k(const std::vector<PassCount>& per_problem, int k) {
    if (per_problem.empty()) return 0.0;
    if (k < 1) throw InvalidArgument("pass@k needs k >= 1");
    double sum = 0.0;
    for (const auto& [n, c] : per_problem) {
        if (c < 0 || c > n) throw InvalidArgument("pass@k needs 0 <= c <= n");
        if (k > n) throw KExceedsN(k, n);
        if (n - c < k) {
            sum += 1.0;
            continue;
        }
        // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
        double miss = 1.0;
        for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / i;
        sum += 1.0 - miss;
    }
    return sum / static_cast<double>(per_problem.size());
}

std::string maj_at_k(const std::vector<std::string>& answers, int k, std::optional<std::uint64_t> subsample_seed) {
    if (answers.empty()) throw InvalidArgument("maj@k needs at least one answer");
    if (k < 1 || static_cast<std::size_t>(k) > answers.size()) throw KExceedsN(k, static_cast<int>(answers.size()));

    std::vector<std::size_t> indices(answers.size());
    std::iota(indices.begin(), indices.end(), 0);
    if (subsample_seed) {
        std::mt19937_64 rng(*subsample_seed);
        std::shuffle(indices.begin(), indices.end(), rng);
        indices.resize(static_cast<std::size_t>(k));
        std::sort(indices.begin(), indices.end());
    } else {
        indices.resize(static_cast<std::size_t>(k));
    }

    std::vector<std::string> order;  // first-appearance order
    std::map<std::string, int> counts;
    for (std::size_t i : indices) {
        std::string normalized = normalize_answer(answers[i]);
        if (counts[normalized]++ == 0) order.push_back(std::move(normalized));
    }
    std::string best = order.front();
    for (const auto& candidate : order) {
        if (counts[candidate] > counts[best]) best = candidate;
    }
    return best;
}

std::vector<PassCount> final_correct_counts(const EvalRun& run) {
    run.validate();
    require_labels(run);
    std::vector<PassCount> counts;
    for (const auto& p : run.problems) {
        PassCount pc{static_cast<int>(p.samples.size()), 0};
        for (const auto& t : p.samples) {
            if (correct(t.answer_through(t.turns.size()), p.problem)) ++pc.c;
        }
        counts.push_back(pc);
    }
    return counts;
}

double maj_accuracy(const EvalRun& run, int k) {
    const std::size_t n = run.validate();
    require_labels(run);
    if (run.problems.empty()) return 0.0;
    if (k < 1 || static_cast<std::size_t>(k) > n) throw KExceedsN(k, static_cast<int>(n));
    double hits = 0.0;
    for (const auto& p : run.problems) {
        std::vector<std::string> votes;
        for (std::size_t s = 0; s < static_cast<std::size_t>(k); ++s) {
            const auto& t = p.samples[s];
            if (auto a = t.answer_through(t.turns.size())) votes.push_back(*a);
        }
        if (votes.empty()) continue;
        const std::string winner = maj_at_k(votes, static_cast<int>(votes.size()));
        if (answers_equivalent(winner, *p.problem.answer)) hits += 1.0;
    }
    return hits / static_cast<double>(run.problems.size());
}

TerminationStats termination_stats(const EvalRun& run, TokenCount bin_width) {
    if (bin_width < 1) throw InvalidArgument("bin width must be >= 1");
    TerminationStats stats;
    std::map<TokenCount, std::size_t> terminated_by_bin;
    std::size_t terminated = 0;
    TokenCount longest = 0;
    for (const auto& p : run.problems) {
        for (const auto& t : p.samples) {
            for (const auto& turn : t.turns) {
                ++stats.turns;
                longest = std::max(longest, turn.reasoning_tokens);
                if (!turn.terminated) continue;
                ++terminated;
                const TokenCount edge = ((turn.reasoning_tokens + bin_width - 1) / bin_width) * bin_width;
                ++terminated_by_bin[std::max(edge, bin_width)];
            }
        }
    }
    if (stats.turns == 0) return stats;
    const auto denom = static_cast<double>(stats.turns);
    stats.overall_rate = static_cast<double>(terminated) / denom;
    const TokenCount last_edge = std::max(bin_width, ((longest + bin_width - 1) / bin_width) * bin_width);
    std::size_t running = 0;
    for (TokenCount edge = bin_width; edge <= last_edge; edge += bin_width) {
        if (auto it = terminated_by_bin.find(edge); it != terminated_by_bin.end()) running += it->second;
        stats.cdf.emplace_back(edge, static_cast<double>(running) / denom);
    }
    return stats;
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::verification: return "verification";
        case Strategy::exploration: return "exploration";
        case Strategy::refinement: return "refinement";
        case Strategy::none: return "none";
    }
    return "none";
}

std::optional<Strategy> parse_strategy(std::string_view verdict) {
    std::string text(trim(verdict));
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
    if (auto pos = text.rfind("label:"); pos != std::string::npos) {
        text = std::string(trim(std::string_view(text).substr(pos + 6)));
        const auto end = text.find_first_of("\n\r");
        if (end != std::string::npos) text.resize(end);
    }
    while (!text.empty() && (text.back() == '.' || text.back() == '*' || std::isspace(static_cast<unsigned char>(text.back())))) {
        text.pop_back();
    }
    while (!text.empty() && (text.front() == '*' || text.front() == '<')) text.erase(text.begin());
    if (!text.empty() && text.back() == '>') text.pop_back();
    for (Strategy s : {Strategy::verification, Strategy::exploration, Strategy::refinement, Strategy::none}) {
        if (text == to_string(s)) return s;
    }
    return std::nullopt;
}

std::vector<StrategyLabel> annotate_strategies(const EvalRun& run, const PromptLibrary& prompts,
                                               const GenerationParams& params, Backend& backend,
                                               std::size_t concurrency) {
    struct Pair {
        const ProblemRuns* problem;
        std::size_t sample;
        std::size_t turn;  // 0-based index of the summary's turn
    };
    std::vector<Pair> pairs;
    for (const auto& p : run.problems) {
        for (std::size_t s = 0; s < p.samples.size(); ++s) {
            const auto& turns = p.samples[s].turns;
            for (std::size_t t = 0; t + 1 < turns.size(); ++t) {
                if (!turns[t].summary.empty()) pairs.push_back({&p, s, t});
            }
        }
    }
    std::vector<StrategyLabel> labels(pairs.size());
    parallel_for(pairs.size(), concurrency, [&](std::size_t i) {
        const Pair& pair = pairs[i];
        const auto& turns = pair.problem->samples[pair.sample].turns;
        StrategyLabel& label = labels[i];
        label.problem_id = pair.problem->problem.id;
        label.sample = pair.sample;
        label.turn = turns[pair.turn].turn_index;
        CompletionRequest request;
        request.messages.push_back({Role::system, prompts.annotator_instruction});
        request.messages.push_back({Role::user, render_template(prompts.annotator_user,
                                                                {{"problem", pair.problem->problem.prompt},
                                                                 {"summary", turns[pair.turn].summary},
                                                                 {"reasoning", turns[pair.turn + 1].reasoning}})});
        request.params = params;
        try {
            const auto reply = backend.complete(request);
            if (auto parsed = parse_strategy(reply.content)) {
                label.label = *parsed;
            } else {
                label.label = Strategy::none;
                label.flagged = true;
            }
        } catch (const Error& e) {
            label.flagged = true;
            label.error = e.what();
        }
    });
    return labels;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "turn,budget_effective,budget_measured,accuracy\n";
    for (const auto& p : curve) {
        out << p.turn << ',' << p.effective_budget << ',' << p.mean_cumulative_tokens << ',' << p.accuracy << '\n';
    }
    return out.str();
}

std::string termination_csv(const TerminationStats& stats) {
    std::ostringstream out;
    out.precision(17);
    out << "length_le,terminated_fraction\n";
    for (const auto& [edge, fraction] : stats.cdf) out << edge << ',' << fraction << '\n';
    return out.str();
}

}  // namespace rcache
