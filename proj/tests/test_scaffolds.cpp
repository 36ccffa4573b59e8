#include <doctest.h>

#include <algorithm>

#include "rcache/errors.hpp"
#include "rcache/scaffolds.hpp"
#include "support.hpp"

using namespace rcache;
using namespace rcache::testing;

namespace {

const ProblemInstance kProblem{"p1", "Find x.", std::string("3"), ""};

const PromptLibrary& lib() {
    static const PromptLibrary l = PromptLibrary::defaults();
    return l;
}

bool is_aggregation(const CompletionRequest& r) {
    return r.messages.front().content.find("Aggregate them") != std::string::npos;
}

std::size_t count_blocks(const std::string& text) {
    std::size_t n = 0;
    for (auto pos = text.find("[CANDIDATE "); pos != std::string::npos; pos = text.find("[CANDIDATE ", pos + 1)) ++n;
    return n;
}

// Every reply is a fresh string; the responder runs under the mock's lock.
MockRule unique_replies(const std::string& matcher, const std::string& prefix) {
    auto counter = std::make_shared<int>(0);
    MockRule rule;
    rule.matcher = matcher;
    rule.repeat = true;
    rule.responder = [counter, prefix](const CompletionRequest&) {
        return prefix + std::to_string((*counter)++) + " \\boxed{3}";
    };
    return rule;
}

// Replies to a verification request with the next verdict in `scores`.
MockRule scripted_verdicts(std::vector<std::string> scores) {
    auto next = std::make_shared<std::size_t>(0);
    MockRule rule;
    rule.matcher = "SCORE: 1.0 if";
    rule.repeat = true;
    rule.responder = [next, scores](const CompletionRequest&) {
        const std::string s = scores[std::min(*next, scores.size() - 1)];
        ++*next;
        return "Looks fine.\nSCORE: " + s;
    };
    return rule;
}

}  // namespace

TEST_CASE("verdict parsing") {
    CHECK(parse_verdict("ok\nSCORE: 1.0") == std::optional<double>(1.0));
    CHECK(parse_verdict("SCORE: 0.5\nmore\nSCORE: 0") == std::optional<double>(0.0));
    CHECK(parse_verdict("score: 0.5") == std::optional<double>(0.5));
    CHECK_FALSE(parse_verdict("SCORE: 0.7").has_value());
    CHECK_FALSE(parse_verdict("no verdict").has_value());
}

TEST_CASE("aggregation request carries one block per candidate") {
    const auto r = build_aggregation_request(lib(), "P", {"a", "b", "c"}, {});
    CHECK(count_blocks(r.messages[1].content) == 3);
    CHECK(r.messages[1].content.find("[CANDIDATE 2]\nb") != std::string::npos);
}

TEST_CASE("rsa keeps a constant pool and k blocks per aggregation") {
    MockBackend mock({unique_replies("Aggregate them", "agg"), unique_replies("", "gen")});
    RsaConfig cfg;  // M=8, k=2, T=10
    cfg.concurrency = 4;
    const auto r = run_rsa(kProblem, cfg, lib(), {}, mock, 7);
    CHECK_FALSE(r.error.has_value());
    REQUIRE(r.pool_sizes.size() == 10);
    for (auto s : r.pool_sizes) CHECK(s == 8);
    CHECK(r.final_pool.size() == 8);
    std::size_t aggregations = 0;
    for (const auto& req : mock.request_log()) {
        if (!is_aggregation(req)) continue;
        ++aggregations;
        CHECK(count_blocks(req.messages[1].content) == 2);
    }
    CHECK(aggregations == 8 * 9);
    for (const auto& e : r.transcript) {
        if (e.stage != "aggregate") continue;
        CHECK(e.inputs.size() == 2);
        for (int idx : e.inputs) CHECK((idx >= 0 && idx < 8));
    }
}

TEST_CASE("rsa with one round is just the initial samples") {
    MockBackend mock({unique_replies("", "gen")});
    RsaConfig cfg;
    cfg.rounds = 1;
    const auto r = run_rsa(kProblem, cfg, lib(), {}, mock, 1);
    CHECK(r.final_pool.size() == 8);
    CHECK(mock.call_count() == 8);
    for (const auto& req : mock.request_log()) CHECK_FALSE(is_aggregation(req));
}

TEST_CASE("rsa with M=1, k=1 refines its single member") {
    MockBackend mock({unique_replies("Aggregate them", "agg"), unique_replies("", "gen")});
    RsaConfig cfg;
    cfg.pool_size = 1;
    cfg.sample_size = 1;
    cfg.rounds = 3;
    const auto r = run_rsa(kProblem, cfg, lib(), {}, mock, 1);
    const auto log = mock.request_log();
    REQUIRE(log.size() == 3);
    CHECK(log[1].messages[1].content.find("gen0") != std::string::npos);
    CHECK(log[2].messages[1].content.find("agg0") != std::string::npos);
    CHECK(r.final_pool == std::vector<std::string>{"agg1 \\boxed{3}"});
}

TEST_CASE("rsa with rc inner injects the aggregate as the starting summary") {
    MockRule summ{kSummaryMarker, "a summary", {}, {}, true};
    MockBackend mock({summ, unique_replies("Aggregate them", "agg"), unique_replies("", "gen")});
    RsaConfig cfg;
    cfg.pool_size = 2;
    cfg.sample_size = 2;
    cfg.rounds = 2;
    cfg.concurrency = 1;
    cfg.inner.rc = BudgetSpec{100, 10, 2};
    const auto r = run_rsa(kProblem, cfg, lib(), {}, mock, 3);
    CHECK_FALSE(r.error.has_value());
    const auto log = mock.request_log();
    // after the first aggregation, the next reasoning request sees it as [SUMMARY]
    const auto agg = std::find_if(log.begin(), log.end(), is_aggregation);
    REQUIRE(agg != log.end());
    const auto next = agg + 1;
    CHECK(next->messages[1].content.find("[SUMMARY]\nagg0 \\boxed{3}") != std::string::npos);
    CHECK(std::count_if(r.transcript.begin(), r.transcript.end(),
                        [](const TranscriptEvent& e) { return e.stage == "refine"; }) == 2);
}

TEST_CASE("rsa is deterministic for a fixed seed") {
    auto make = [] {
        MockRule agg{"Aggregate them", "", {"A \\boxed{1}", "B \\boxed{2}", "C \\boxed{3}"}, {}, true};
        MockRule gen{"", "", {"x \\boxed{1}", "y \\boxed{3}", "z"}, {}, true};
        return MockBackend({agg, gen});
    };
    RsaConfig cfg;
    cfg.rounds = 4;
    cfg.concurrency = 8;
    auto m1 = make();
    auto m2 = make();
    const auto a = run_rsa(kProblem, cfg, lib(), {}, m1, 99);
    const auto b = run_rsa(kProblem, cfg, lib(), {}, m2, 99);
    CHECK(a.final_pool == b.final_pool);
    CHECK(nlohmann::json(a.transcript) == nlohmann::json(b.transcript));
}

TEST_CASE("rsa backend error aborts the round and keeps earlier pools") {
    std::vector<MockRule> script;
    for (int i = 0; i < 8; ++i) script.push_back({"", "g" + std::to_string(i), {}, {}, false});
    for (int i = 0; i < 3; ++i) script.push_back({"Aggregate them", "a" + std::to_string(i), {}, {}, false});
    MockBackend mock(script);
    RsaConfig cfg;
    cfg.rounds = 3;
    cfg.concurrency = 1;
    const auto r = run_rsa(kProblem, cfg, lib(), {}, mock, 1);
    REQUIRE(r.error.has_value());
    CHECK(r.pool_sizes.size() == 1);
    CHECK(r.final_pool.size() == 8);
    CHECK(r.final_pool[0] == "g0");
}

TEST_CASE("dsm scores candidates by mean verdict") {
    MockBackend mock({scripted_verdicts({"1.0", "0.5", "1.0", "0.5", "1.0"}), unique_replies("reviewer's feedback", "ref"),
                      unique_replies("", "gen")});
    DsmConfig cfg;
    cfg.generations = 1;
    cfg.verifications = 4;
    cfg.rounds = 1;
    cfg.concurrency = 1;
    const auto r = run_dsm(kProblem, cfg, lib(), {}, mock, 5);
    REQUIRE(r.pool.size() == 2);
    CHECK(r.pool[0].score == doctest::Approx(0.75));
    CHECK(r.pool[1].score == doctest::Approx(1.0));
    CHECK(r.best_index == 1);
    CHECK(r.best_score == 1.0);
    CHECK(r.refinement_rounds == 1);
}

TEST_CASE("dsm exits early once a candidate scores 1.0") {
    MockBackend mock({scripted_verdicts({"0.5", "0.5", "1.0", "1.0"}), unique_replies("reviewer's feedback", "ref"),
                      unique_replies("", "gen")});
    DsmConfig cfg;
    cfg.generations = 2;
    cfg.verifications = 2;
    cfg.rounds = 6;
    cfg.concurrency = 1;
    const auto r = run_dsm(kProblem, cfg, lib(), {}, mock, 5);
    CHECK(r.refinement_rounds == 0);
    CHECK(r.pool.size() == 2);
    CHECK(r.best_index == 1);
    CHECK(r.best_score == 1.0);
    for (const auto& req : mock.request_log()) {
        CHECK(req.messages[0].content.find("reviewer's feedback") == std::string::npos);
    }
}

TEST_CASE("dsm refines the best candidate with its harshest feedback and grows by one per round") {
    auto verdicts = std::make_shared<int>(0);
    MockRule verify;
    verify.matcher = "SCORE: 1.0 if";
    verify.repeat = true;
    verify.responder = [verdicts](const CompletionRequest&) {
        const int n = (*verdicts)++;
        return std::string("critique-") + std::to_string(n) + "\nSCORE: " + (n % 2 == 0 ? "0.5" : "0.0");
    };
    MockBackend mock({verify, unique_replies("reviewer's feedback", "ref"), unique_replies("", "gen")});
    DsmConfig cfg;
    cfg.generations = 3;
    cfg.verifications = 2;
    cfg.rounds = 4;
    cfg.concurrency = 1;
    const auto r = run_dsm(kProblem, cfg, lib(), {}, mock, 5);
    CHECK(r.pool.size() == 3 + 4);
    CHECK(r.refinement_rounds == 4);
    double best = 0;
    for (const auto& c : r.pool) best = std::max(best, c.score);
    CHECK(r.best_score == best);
    // every score ties at 0.25, so the earliest candidate wins
    CHECK(r.best_index == 0);
    std::vector<CompletionRequest> refines;
    for (const auto& req : mock.request_log()) {
        if (req.messages[0].content.find("reviewer's feedback") != std::string::npos) refines.push_back(req);
    }
    REQUIRE(refines.size() == 4);
    CHECK(refines[0].messages[1].content.find("gen0") != std::string::npos);
    CHECK(refines[0].messages[1].content.find("critique-1") != std::string::npos);
}

TEST_CASE("dsm flags unparseable verdicts as zero") {
    MockRule verify{"SCORE: 1.0 if", "I think it's fine", {}, {}, true};
    MockBackend mock({verify, unique_replies("reviewer's feedback", "ref"), unique_replies("", "gen")});
    DsmConfig cfg;
    cfg.generations = 1;
    cfg.verifications = 1;
    cfg.rounds = 1;
    const auto r = run_dsm(kProblem, cfg, lib(), {}, mock, 5);
    CHECK(r.pool[0].score == 0.0);
    const auto flagged = std::count_if(r.transcript.begin(), r.transcript.end(),
                                       [](const TranscriptEvent& e) { return e.stage == "verify" && e.flagged; });
    CHECK(flagged == 2);
}
