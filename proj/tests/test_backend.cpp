#include <doctest.h>

#include <fstream>
#include <thread>

#include "rcache/backend.hpp"
#include "rcache/errors.hpp"
#include "rcache/mock_backend.hpp"
#include "rcache/parallel.hpp"
#include "rcache/replay_cache.hpp"
#include "support.hpp"

using namespace rcache;
using namespace rcache::testing;
using nlohmann::json;

namespace {

CompletionRequest request(const std::string& user, TokenCount max_tokens = 100) {
    CompletionRequest r;
    r.messages = {{Role::system, "sys"}, {Role::user, user}};
    r.params.max_tokens = max_tokens;
    return r;
}

}  // namespace

TEST_CASE("whitespace tokenizer helpers") {
    CHECK(whitespace_token_count("") == 0);
    CHECK(whitespace_token_count("  a  b\tc\n") == 3);
    CHECK(whitespace_token_prefix("a  b c d", 2) == "a  b");
    CHECK(whitespace_token_prefix("a b", 5) == "a b");
    CHECK(whitespace_token_suffix("a b  c d", 2) == "c d");
    CHECK(whitespace_token_suffix("a b", 9) == "a b");
    CHECK(whitespace_token_suffix("a b", 0).empty());
}

TEST_CASE("mock returns scripted content with stop finish") {
    auto mock = mock_script({{"", "\\boxed{7}"}});
    const auto r = mock.complete(request("q"));
    CHECK(r.content == "\\boxed{7}");
    CHECK(r.finish_reason == FinishReason::stop);
    CHECK(r.completion_tokens == 1);
}

TEST_CASE("mock truncates to max_tokens and reports length") {
    auto mock = mock_script({{"", words("w", 10)}});
    const auto r = mock.complete(request("q", 4));
    CHECK(r.content == "w0 w1 w2 w3");
    CHECK(r.completion_tokens == 4);
    CHECK(r.finish_reason == FinishReason::length);
}

TEST_CASE("mock matcher and consumption order") {
    auto mock = mock_script({{"summarize", "SUMMARY-1"}});
    CHECK(mock.complete(request("please summarize this")).content == "SUMMARY-1");

    auto empty = mock_script({});
    CHECK_THROWS_AS(empty.complete(request("x")), ScriptExhausted);

    auto two = mock_script({{"", "first"}, {"", "second"}});
    CHECK(two.complete(request("a")).content == "first");
    CHECK(two.complete(request("a")).content == "second");
    CHECK_THROWS_AS(two.complete(request("a")), ScriptExhausted);
    CHECK(two.call_count() == 3);
}

TEST_CASE("mock choices are keyed by request seed") {
    MockRule rule;
    rule.choices = {"zero", "one", "two"};
    rule.repeat = true;
    MockBackend mock({rule});
    auto r = request("q");
    r.params.seed = 4;
    CHECK(mock.complete(r).content == "one");
    r.params.seed = 3;
    CHECK(mock.complete(r).content == "zero");
    CHECK(mock.remaining_rules() == 1);
}

TEST_CASE("mock applies stop sequences") {
    auto mock = mock_script({{"", "alpha beta STOP gamma"}});
    auto r = request("q");
    r.stop_sequences = {"STOP"};
    CHECK(mock.complete(r).content == "alpha beta ");
}

TEST_CASE("mock rejects assistant prefixes when continuation is off") {
    MockOptions opts;
    opts.assistant_prefix_continuation = false;
    auto mock = mock_script({{"", "x"}}, opts);
    auto r = request("q");
    r.messages.push_back({Role::assistant, "partial"});
    CHECK_THROWS_AS(mock.complete(r), BackendRejected);
}

TEST_CASE("requests must start with a system message") {
    auto mock = mock_script({{"", "x"}});
    CompletionRequest r;
    r.messages = {{Role::user, "q"}};
    CHECK_THROWS_AS(mock.complete(r), InvalidArgument);
}

TEST_CASE("mock script file loads all rule forms") {
    TempDir dir("mockscript");
    const auto path = dir.path / "script.jsonl";
    std::ofstream(path) << R"({"match":"a","content":"A"})" << "\n"
                        << R"({"choices":["x","y"],"repeat":true})" << "\n";
    auto rules = load_mock_script(path);
    REQUIRE(rules.size() == 2);
    CHECK(rules[0].matcher == "a");
    CHECK(rules[0].content == "A");
    CHECK_FALSE(rules[0].repeat);
    CHECK(rules[1].choices.size() == 2);
    CHECK(rules[1].repeat);

    std::ofstream(path) << "not json\n";
    CHECK_THROWS_AS(load_mock_script(path), InvalidArgument);
}

TEST_CASE("in-flight limit holds under load") {
    MockRule rule;
    rule.content = "ok";
    rule.repeat = true;
    MockOptions opts;
    opts.max_in_flight = 3;
    opts.latency = std::chrono::milliseconds(5);
    MockBackend mock({rule}, opts);
    parallel_for(40, 16, [&](std::size_t) { mock.complete(request("q")); });
    CHECK(mock.call_count() == 40);
    CHECK(mock.peak_in_flight() <= 3);
    CHECK(mock.peak_in_flight() >= 2);
}

TEST_CASE("wire json carries exactly the documented fields") {
    auto r = request("hello", 12);
    r.params.seed = 5;
    r.stop_sequences = {"END"};
    const json w = to_wire_json(r, "m");
    CHECK(w.at("model") == "m");
    CHECK(w.at("messages").size() == 2);
    CHECK(w.at("messages")[1].at("role") == "user");
    CHECK(w.at("max_tokens") == 12);
    CHECK(w.at("seed") == 5);
    CHECK(w.at("stop") == json::array({"END"}));
    CHECK(w.size() == 7);

    const json resp = {{"choices", {{{"message", {{"content", "hi"}}}, {"finish_reason", "length"}}}},
                       {"usage", {{"completion_tokens", 3}}},
                       {"extra", 1}};
    const auto parsed = from_wire_json(resp);
    CHECK(parsed.content == "hi");
    CHECK(parsed.finish_reason == FinishReason::length);
    CHECK(parsed.completion_tokens == 3);
}

TEST_CASE("request hash depends on content only") {
    auto a = request("q");
    auto b = request("q");
    CHECK(request_hash(a) == request_hash(b));
    b.params.seed = 1;
    CHECK(request_hash(a) != request_hash(b));
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("record then replay gives identical results") {
    TempDir dir("cache");
    const auto path = dir.path / "cache.jsonl";
    MockRule rule;
    rule.choices = {"alpha \\boxed{1}", "beta", "gamma delta"};
    rule.repeat = true;
    MockBackend mock({rule});

    auto r = request("q");
    r.params.seed = 2;
    CompletionResult recorded;
    {
        RecordReplayBackend rec(&mock, path, CacheMode::record);
        recorded = rec.complete(r);
        rec.complete(r);
        CHECK(rec.size() == 1);
    }
    RecordReplayBackend replay(nullptr, path, CacheMode::replay);
    const auto a = replay.complete(r);
    const auto b = replay.complete(r);
    CHECK(a.content == recorded.content);
    CHECK(a.content == b.content);
    CHECK(a.completion_tokens == b.completion_tokens);
    CHECK(a.finish_reason == b.finish_reason);
    CHECK(replay.hits() == 2);

    auto miss = request("other");
    CHECK_THROWS_AS(replay.complete(miss), ReplayMiss);

    RecordReplayBackend automode(&mock, path, CacheMode::auto_);
    const auto before = mock.call_count();
    automode.complete(r);
    CHECK(mock.call_count() == before);
    automode.complete(miss);
    CHECK(mock.call_count() == before + 1);
    CHECK(automode.size() == 2);
}
