#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "support.hpp"

using namespace rcache::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = rcache::cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return files;
}

// Two labelled problems plus a mock script keyed by request seed.
struct Fixture {
    TempDir dir{"cli"};
    fs::path dataset = dir.path / "data.jsonl";
    fs::path script = dir.path / "mock.jsonl";

    Fixture() {
        std::ofstream(dataset) << R"({"id":"a","prompt":"What is 1+2?","answer":"3"})" << "\n"
                               << R"({"id":"b/2","prompt":"What is 2+2?","answer":"4"})" << "\n";
        json summaries = json::array();
        for (int i = 0; i < 400; ++i) summaries.push_back("summary number " + std::to_string(i));
        std::ofstream s(script);
        s << json{{"match", "Write an updated summary"}, {"choices", summaries}, {"repeat", true}}.dump() << "\n";
        s << json{{"match", "LABEL:"}, {"choices", {"LABEL: verification", "LABEL: exploration", "unsure"}},
                  {"repeat", true}}
                 .dump()
          << "\n";
        s << json{{"choices", {"so \\boxed{3}", "hmm \\boxed{4}", "still going"}}, {"repeat", true}}.dump() << "\n";
    }

    std::vector<std::string> decode(const fs::path& out, const std::string& turns = "3") const {
        return {"decode", "--dataset", dataset.string(), "--backend", "mock", "--mock-script", script.string(),
                "--out", out.string(), "--turns", turns, "--samples", "4", "--h-r", "64", "--h-s", "16",
                "--seed", "7"};
    }
};

}  // namespace

TEST_CASE("decode is byte-identical across runs and resumes without rework") {
    Fixture f;
    const auto a = f.dir.path / "run-a";
    const auto b = f.dir.path / "run-b";
    REQUIRE(run(f.decode(a)).code == 0);
    REQUIRE(run(f.decode(b)).code == 0);
    const auto ta = tree(a);
    CHECK(ta.size() == 1 + 2 * 4);
    CHECK(ta == tree(b));
    CHECK(ta.count("trajectories/a__s0.json") == 1);

    // resume: a deleted trajectory is recomputed identically, the rest are kept
    const auto kept = fs::last_write_time(a / "trajectories" / "a__s1.json");
    fs::remove(a / "trajectories" / "a__s0.json");
    REQUIRE(run(f.decode(a)).code == 0);
    CHECK(tree(a) == ta);
    CHECK(fs::last_write_time(a / "trajectories" / "a__s1.json") == kept);

    // a changed configuration is refused for the same run directory
    const auto changed = run(f.decode(a, "2"));
    CHECK(changed.code == 1);
    CHECK(changed.err.find("InvalidArgument") != std::string::npos);
}

TEST_CASE("eval writes metrics for a decode run") {
    Fixture f;
    const auto r = f.dir.path / "run";
    REQUIRE(run(f.decode(r, "1")).code == 0);
    const auto e = run({"eval", "--run", r.string()});
    REQUIRE_MESSAGE(e.code == 0, e.err);
    const auto curve = slurp(r / "metrics" / "accuracy_vs_budget.csv");
    CHECK(std::count(curve.begin(), curve.end(), '\n') == 2);  // header + one turn
    CHECK(fs::exists(r / "metrics" / "pass_at_k.csv"));
    CHECK(fs::exists(r / "metrics" / "maj_at_k.csv"));
    CHECK(fs::exists(r / "metrics" / "termination_cdf.csv"));

    const auto a = run({"annotate", "--run", r.string(), "--backend", "mock", "--mock-script", f.script.string()});
    CHECK(a.code == 0);  // single-turn runs have nothing to label
    REQUIRE(run(f.decode(f.dir.path / "run3")).code == 0);
    const auto a3 =
        run({"annotate", "--run", (f.dir.path / "run3").string(), "--backend", "mock", "--mock-script", f.script.string()});
    REQUIRE_MESSAGE(a3.code == 0, a3.err);
    CHECK(fs::exists(f.dir.path / "run3" / "metrics" / "strategies.csv"));
}

TEST_CASE("cost prints one row per turn count") {
    const auto r = run({"cost", "--c", "0", "--h-r", "100", "--h-s", "0", "--t", "1..12"});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string line;
    int rows = -1;  // header
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 12);
}

TEST_CASE("errors are reported as json") {
    const auto missing = run({"decode", "--dataset", "/nonexistent/data.jsonl", "--backend", "mock"});
    CHECK(missing.code == 1);
    const auto err = json::parse(missing.err);
    CHECK(err.at("error") == "IoError");

    const auto usage = run({"decode", "--turns", "x"});
    CHECK(usage.code == 2);
    CHECK(json::parse(usage.err).at("error") == "UsageError");

    CHECK(run({"eval", "--run", "/nonexistent/run"}).code == 1);
}

TEST_CASE("rollouts across two epochs grow lineage through the buffer") {
    Fixture f;
    const auto r = f.dir.path / "train";
    auto args = [&](const std::string& epoch) {
        return std::vector<std::string>{"rollouts", "--dataset", f.dataset.string(), "--backend", "mock",
                                        "--mock-script", f.script.string(), "--out", r.string(), "--h-r", "64",
                                        "--h-s", "16", "--seed", "3", "--epoch", epoch};
    };
    const auto e1 = run(args("1"));
    REQUIRE_MESSAGE(e1.code == 0, e1.err);
    const auto e2 = run(args("2"));
    REQUIRE_MESSAGE(e2.code == 0, e2.err);

    const auto side = json::parse(slurp(r / "batches" / "epoch2.manifest.json"));
    CHECK(side.at("config").at("use_replay") == true);
    CHECK(side.at("row_count").get<std::size_t>() > 0);

    int deepest = 0;
    std::istringstream buffer(slurp(r / "buffer.jsonl"));
    std::string line;
    while (std::getline(buffer, line)) deepest = std::max(deepest, json::parse(line).at("lineage_depth").get<int>());
    CHECK(deepest > 3);

    std::istringstream batch(slurp(r / "batches" / "epoch2.jsonl"));
    std::size_t rows = 0;
    while (std::getline(batch, line)) {
        const auto row = json::parse(line);
        CHECK(row.at("lineage_depth").get<int>() > row.at("source_turn_t").get<int>());
        ++rows;
    }
    CHECK(rows == side.at("row_count").get<std::size_t>());
}
