#include <doctest.h>

#include <fstream>
#include <map>
#include <random>

#include "rcache/errors.hpp"
#include "rcache/replay.hpp"
#include "support.hpp"

using namespace rcache;
using namespace rcache::testing;

TEST_CASE("capacity one keeps only the newest summary") {
    ReplayBuffer buf(1, 3);
    buf.insert("p", {{"old", 1}}, 0, 1);
    buf.insert("p", {{"new", 2}}, 0, 2);
    const auto e = buf.entries("p");
    REQUIRE(e.size() == 1);
    CHECK(e[0].summary == "new");
    CHECK(buf.sample("p").summary == "new");
}

TEST_CASE("lineage depth adds the parent's depth") {
    ReplayBuffer buf(8, 1);
    buf.insert("p", {{"s2", 2}}, 3, 2);
    CHECK(buf.entries("p")[0].lineage_depth == 5);
    CHECK(buf.max_lineage_depth() == 5);
    CHECK(buf.sample("p").lineage_depth == 5);
}

TEST_CASE("sampling an unknown problem throws") {
    ReplayBuffer buf(4, 1);
    CHECK_THROWS_AS(buf.sample("missing"), NoEntry);
    CHECK_FALSE(buf.contains("missing"));
    CHECK_THROWS_AS(ReplayBuffer(0, 1), InvalidArgument);
    CHECK_THROWS_AS(buf.insert("p", {}, 0, 1), InvalidArgument);
}

TEST_CASE("a single entry is always drawn") {
    ReplayBuffer buf(4, 9);
    buf.insert("p", {{"only", 1}}, 0, 1);
    for (int i = 0; i < 50; ++i) CHECK(buf.sample("p").summary == "only");
}

TEST_CASE("draws are reproducible per seed and independent of other problems") {
    auto fill = [](ReplayBuffer& b) {
        b.insert("p", {{"a", 1}, {"b", 2}, {"c", 3}}, 0, 1);
        b.insert("q", {{"x", 1}, {"y", 2}}, 0, 1);
    };
    ReplayBuffer one(8, 42);
    ReplayBuffer two(8, 42);
    fill(one);
    fill(two);
    std::vector<std::string> first;
    std::vector<std::string> second;
    for (int i = 0; i < 30; ++i) {
        first.push_back(one.sample("p").summary);
        two.sample("q");  // interleaved draws for another problem
        second.push_back(two.sample("p").summary);
    }
    CHECK(first == second);
}

TEST_CASE("sampling is uniform over a problem's entries") {
    ReplayBuffer buf(4, 7);
    buf.insert("p", {{"a", 1}, {"b", 2}}, 0, 1);
    int a = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) a += buf.sample("p").summary == "a";
    CHECK(static_cast<double>(a) / n == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("eviction drops the oldest epoch first") {
    ReplayBuffer buf(3, 1);
    buf.insert("p", {{"e1a", 1}, {"e1b", 2}}, 0, 1);
    buf.insert("p", {{"e2a", 1}, {"e2b", 2}}, 0, 2);
    const auto e = buf.entries("p");
    REQUIRE(e.size() == 3);
    CHECK(e[0].summary == "e1b");
    CHECK(e[1].summary == "e2a");
    CHECK(e[2].summary == "e2b");
}

TEST_CASE("capacity is never exceeded under random inserts") {
    std::mt19937_64 rng(5);
    for (std::size_t cap : {1u, 2u, 5u}) {
        ReplayBuffer buf(cap, 1);
        for (int step = 0; step < 300; ++step) {
            const std::string pid = "p" + std::to_string(rng() % 4);
            std::vector<SummaryInsert> items;
            const int count = 1 + static_cast<int>(rng() % 4);
            for (int i = 0; i < count; ++i) items.push_back({"s" + std::to_string(step) + "-" + std::to_string(i), i + 1});
            buf.insert(pid, items, static_cast<int>(rng() % 6), 1 + static_cast<int>(rng() % 5));
            for (const auto& id : buf.problem_ids()) CHECK(buf.entries(id).size() <= cap);
        }
    }
}

TEST_CASE("save and load round trip") {
    TempDir dir("replay");
    const auto path = dir.path / "buffer.jsonl";
    ReplayBuffer buf(4, 1);
    buf.insert("p", {{"line one\nwith newline", 1}, {"two \"quoted\"", 2}}, 1, 1);
    buf.insert("q/slash", {{"x", 3}}, 0, 2);
    buf.save(path);
    const auto loaded = ReplayBuffer::load(path, 4, 1);
    CHECK(loaded->same_entries(buf));
    CHECK(buf.same_entries(*loaded));

    // smaller capacity trims on load
    const auto trimmed = ReplayBuffer::load(path, 1, 1);
    CHECK(trimmed->entries("p").size() == 1);
    CHECK(trimmed->entries("p")[0].summary == "two \"quoted\"");

    ReplayBuffer empty(2, 1);
    empty.save(dir.path / "empty.jsonl");
    CHECK(ReplayBuffer::load(dir.path / "empty.jsonl", 2, 1)->size() == 0);
}

TEST_CASE("a truncated file is reported as corrupt") {
    TempDir dir("replay-bad");
    const auto path = dir.path / "buffer.jsonl";
    ReplayBuffer buf(4, 1);
    buf.insert("p", {{"alpha", 1}, {"beta", 2}}, 0, 1);
    buf.save(path);
    std::string text;
    {
        std::ifstream in(path);
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    std::ofstream(path, std::ios::trunc) << text.substr(0, text.size() - 10);
    CHECK_THROWS_AS(ReplayBuffer::load(path, 4, 1), CorruptBuffer);
    CHECK_THROWS_AS(ReplayBuffer::load(dir.path / "nope.jsonl", 4, 1), IoError);
}
