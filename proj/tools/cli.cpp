#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>

#include "rcache/baselines.hpp"
#include "rcache/cost_model.hpp"
#include "rcache/errors.hpp"
#include "rcache/evaluator.hpp"
#include "rcache/http_backend.hpp"
#include "rcache/mock_backend.hpp"
#include "rcache/parallel.hpp"
#include "rcache/rc_decoder.hpp"
#include "rcache/replay_cache.hpp"
#include "rcache/reward.hpp"
#include "rcache/rollout_gen.hpp"
#include "rcache/scaffolds.hpp"
#include "rcache/termination.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rcache::cli {
namespace {

constexpr int kSchemaVersion = 1;

// ---- flags ----

struct BackendFlags {
    std::string kind = "mock";
    std::string mock_script;
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model = "default";
    std::string api_key_env = "OPENAI_API_KEY";
    std::size_t max_in_flight = 8;
    int retries = 3;
    double timeout = 600.0;
    bool prefix_continuation = false;
    std::string cache;
    std::string cache_mode = "auto";
};

struct SamplingFlags {
    std::string dataset;
    std::string out = "run";
    std::uint64_t seed = 0;
    double temperature = 0.7;
    double top_p = 0.8;
    TokenCount h_r = 16384;
    TokenCount h_s = 2048;
    std::string templates;
    std::string summary_detail = "two_paragraphs";
    std::size_t concurrency = 8;
};

struct DecodeFlags {
    std::string decoder = "rc";
    int turns = 12;
    int samples = 16;
    bool summarize_final_turn = false;
    TokenCount chunk_tokens = 0;
    std::string force_phrase{kDefaultForcePhrase};
    std::string inner = "plain";
    int rsa_pool = 8;
    int rsa_k = 2;
    int rsa_rounds = 10;
    int dsm_generations = 8;
    int dsm_verifications = 4;
    int dsm_rounds = 6;
};

struct RolloutFlags {
    std::string mode = "rc";
    int t_train = 3;
    int n_summ = 2;
    int k_group = 8;
    std::string replay;
    std::size_t replay_capacity = 0;  // 0 means t_train
    int epoch = 1;
    std::string use_replay = "auto";
    std::string trace_baseline = "self_refine";
    std::string std_kind = "population";
};

struct EvalFlags {
    std::string run;
    std::string dataset;
    TokenCount bin_width = 1024;
};

struct CostFlags {
    double c = 1000;
    double h_r = 16384;
    double h_s = 2048;
    std::string t = "1..12";
    std::string out;
};

struct DifficultyFlags {
    int k = 64;
    int turns = 1;
    std::string bin_weights;
};

void add_backend_flags(CLI::App* cmd, BackendFlags& b) {
    cmd->add_option("--backend", b.kind, "mock | http")->check(CLI::IsMember({"mock", "http"}));
    cmd->add_option("--mock-script", b.mock_script, "JSONL mock script");
    cmd->add_option("--base-url", b.base_url);
    cmd->add_option("--model", b.model);
    cmd->add_option("--api-key-env", b.api_key_env, "env var holding the API key");
    cmd->add_option("--max-in-flight", b.max_in_flight)->check(CLI::PositiveNumber);
    cmd->add_option("--retries", b.retries)->check(CLI::NonNegativeNumber);
    cmd->add_option("--timeout", b.timeout, "seconds per request");
    cmd->add_flag("--prefix-continuation", b.prefix_continuation, "server continues a trailing assistant message");
    cmd->add_option("--cache", b.cache, "record/replay JSONL cache");
    cmd->add_option("--cache-mode", b.cache_mode)->check(CLI::IsMember({"record", "replay", "auto"}));
}

void add_sampling_flags(CLI::App* cmd, SamplingFlags& s, bool needs_dataset) {
    auto* ds = cmd->add_option("--dataset", s.dataset, "JSONL of {id, prompt, answer?}");
    if (needs_dataset) ds->required();
    cmd->add_option("--out", s.out, "run directory");
    cmd->add_option("--seed", s.seed);
    cmd->add_option("--temperature", s.temperature);
    cmd->add_option("--top-p", s.top_p);
    cmd->add_option("--h-r", s.h_r, "per-turn reasoning budget");
    cmd->add_option("--h-s", s.h_s, "per-turn summary budget");
    cmd->add_option("--templates", s.templates, "directory of <field>.txt template overrides");
    cmd->add_option("--summary-detail", s.summary_detail, "answer_only | one_paragraph | two_paragraphs | multi_paragraph");
    cmd->add_option("--concurrency", s.concurrency, "worker pool size")->check(CLI::PositiveNumber);
}

// ---- io helpers ----

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Temp file + rename, so a crash never leaves a half-written output that a
// resumed run would accept.
void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

std::vector<ProblemInstance> read_dataset(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read dataset " + path.string());
    std::vector<ProblemInstance> problems;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ProblemInstance p;
        try {
            p = json::parse(line).get<ProblemInstance>();
            p.validate();
        } catch (const json::exception& e) {
            throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!seen.insert(p.id).second) throw InvalidArgument("duplicate problem id '" + p.id + "'");
        problems.push_back(std::move(p));
    }
    return problems;
}

// File-name-safe problem id. Collisions after sanitizing are rejected.
std::string safe_name(const std::string& id) {
    std::string out;
    for (unsigned char ch : id) {
        out += (std::isalnum(ch) || ch == '-' || ch == '_' || ch == '.') ? static_cast<char>(ch) : '_';
    }
    return out.empty() ? "_" : out;
}

void check_safe_names(const std::vector<ProblemInstance>& problems) {
    std::set<std::string> names;
    for (const auto& p : problems) {
        if (!names.insert(safe_name(p.id)).second) {
            throw InvalidArgument("problem ids collide after file-name sanitizing: '" + p.id + "'");
        }
    }
}

fs::path trajectory_path(const fs::path& run, const std::string& problem_id, int sample) {
    return run / "trajectories" / (safe_name(problem_id) + "__s" + std::to_string(sample) + ".json");
}

// ---- backend ----

struct BackendStack {
    std::unique_ptr<Backend> base;
    std::unique_ptr<Backend> cached;
    Backend& get() { return cached ? *cached : *base; }
};

BackendStack make_backend(const BackendFlags& b) {
    BackendStack stack;
    if (b.kind == "mock") {
        if (b.mock_script.empty()) {
            if (b.cache.empty() || b.cache_mode != "replay") throw InvalidArgument("--backend mock needs --mock-script");
        } else {
            stack.base = std::make_unique<MockBackend>(load_mock_script(b.mock_script));
        }
    } else {
        BackendConfig cfg;
        cfg.base_url = b.base_url;
        cfg.model_name = b.model;
        cfg.api_key_env_var = b.api_key_env;
        cfg.max_in_flight = b.max_in_flight;
        cfg.retry_limit = b.retries;
        cfg.timeout_seconds = b.timeout;
        cfg.assistant_prefix_continuation = b.prefix_continuation;
        stack.base = std::make_unique<HttpBackend>(cfg);
    }
    if (!b.cache.empty()) {
        const CacheMode mode = b.cache_mode == "record" ? CacheMode::record
                               : b.cache_mode == "replay" ? CacheMode::replay
                                                          : CacheMode::auto_;
        stack.cached = std::make_unique<RecordReplayBackend>(stack.base.get(), b.cache, mode);
    }
    return stack;
}

json backend_json(const BackendFlags& b) {
    json j{{"kind", b.kind}};
    if (b.kind == "mock") {
        j["script"] = b.mock_script;
        if (!b.mock_script.empty()) j["script_sha256"] = sha256_hex(read_file(b.mock_script));
    } else {
        j["base_url"] = b.base_url;
        j["model"] = b.model;
        j["api_key_env"] = b.api_key_env;
        j["prefix_continuation"] = b.prefix_continuation;
    }
    if (!b.cache.empty()) j["cache"] = {{"path", b.cache}, {"mode", b.cache_mode}};
    return j;
}

PromptLibrary load_prompts(const SamplingFlags& s) {
    PromptLibrary prompts = s.templates.empty() ? PromptLibrary::defaults() : PromptLibrary::load(s.templates);
    prompts.rc.summary_detail = summary_detail_from_string(s.summary_detail);
    return prompts;
}

json template_hashes(const PromptLibrary& prompts) {
    json j = json::object();
    for (const auto& [name, text] : prompts.fields()) j[name] = sha256_hex(text);
    return j;
}

GenerationParams base_params(const SamplingFlags& s) {
    GenerationParams p;
    p.temperature = s.temperature;
    p.top_p = s.top_p;
    p.max_tokens = s.h_r;
    p.validate();
    return p;
}

json dataset_json(const SamplingFlags& s, std::size_t count) {
    return {{"path", s.dataset}, {"sha256", sha256_hex(read_file(s.dataset))}, {"problems", count}};
}

// The manifest describes what was computed. Backend details may change
// between resumed invocations (a new endpoint URL, say) without
// invalidating finished outputs, so they are left out of the comparison.
void reconcile_manifest(const fs::path& run, const json& manifest) {
    const fs::path path = run / "manifest.json";
    if (fs::exists(path)) {
        json existing;
        try {
            existing = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw MalformedRunDir(path.string() + ": " + e.what());
        }
        json a = existing;
        json b = manifest;
        a.erase("backend");
        b.erase("backend");
        if (a != b) {
            throw InvalidArgument("run directory " + run.string() +
                                  " was created with a different configuration; use a fresh --out");
        }
    }
    write_file_atomic(path, pretty(manifest));
}

std::string failures_message(const std::vector<json>& failures) {
    return std::to_string(failures.size()) + " item(s) failed; rerun to resume";
}

struct CommandFailed : Error {
    CommandFailed(const std::string& kind, const std::string& message, json details)
        : Error(kind, message), details(std::move(details)) {}
    json details;
};

// ---- decode ----

// Scaffolds return a pool, not turns; their pick is stored as a one-turn
// trajectory and the transcript goes into metadata.
RcTrajectory scaffold_trajectory(const ProblemInstance& problem, const std::string& decoder, const BudgetSpec& budget,
                                 const std::string& solution, TokenCount total_tokens, const json& details) {
    RcTrajectory t;
    t.problem_id = problem.id;
    t.decoder = decoder;
    t.budget = budget.with_turns(1);
    RcTurnRecord r;
    r.turn_index = 1;
    r.reasoning = solution;
    r.reasoning_tokens = whitespace_token_count(solution);
    const auto term = detect_termination(solution);
    r.terminated = term.terminated;
    r.extracted_answer = term.answer;
    t.push_turn(std::move(r));
    t.cumulative_tokens = {total_tokens};
    t.metadata["scaffold"] = details.dump();
    return t;
}

bool valid_trajectory_file(const fs::path& path, const std::string& problem_id, const std::string& decoder) {
    if (!fs::exists(path)) return false;
    try {
        const RcTrajectory t = trajectory_from_json(json::parse(read_file(path)));
        return t.problem_id == problem_id && t.decoder == decoder && !t.turns.empty();
    } catch (const std::exception&) {
        return false;
    }
}

int cmd_decode(const SamplingFlags& s, const DecodeFlags& d, const BackendFlags& b, std::ostream& out) {
    static const std::set<std::string> kDecoders{"rc",        "self_refine", "self_verify", "budget_force",
                                                 "delethink", "rsa",         "dsm"};
    if (!kDecoders.contains(d.decoder)) throw InvalidArgument("unknown decoder '" + d.decoder + "'");
    if (d.samples < 1) throw InvalidArgument("--samples must be >= 1");
    const BudgetSpec budget{s.h_r, s.h_s, d.turns};
    const auto problems = read_dataset(s.dataset);
    check_safe_names(problems);
    const PromptLibrary prompts = load_prompts(s);
    const GenerationParams params = base_params(s);

    RsaConfig rsa;
    rsa.pool_size = d.rsa_pool;
    rsa.sample_size = d.rsa_k;
    rsa.rounds = d.rsa_rounds;
    DsmConfig dsm;
    dsm.generations = d.dsm_generations;
    dsm.verifications = d.dsm_verifications;
    dsm.rounds = d.dsm_rounds;
    if (d.inner == "rc") {
        rsa.inner.rc = budget;
        dsm.inner.rc = budget;
    } else if (d.inner != "plain") {
        throw InvalidArgument("--inner must be plain or rc");
    }
    // The outer pool already parallelizes across problems and samples.
    rsa.concurrency = 1;
    dsm.concurrency = 1;
    BaselineKind baseline;
    if (d.decoder != "rc" && d.decoder != "rsa" && d.decoder != "dsm") {
        baseline.type = baseline_type_from_string(d.decoder);
        baseline.chunk_tokens = d.chunk_tokens;
        baseline.force_phrase = d.force_phrase;
        if (baseline.type == BaselineType::delethink) (void)baseline.resolved_chunk(budget);
    }
    if (d.decoder == "rsa") rsa.validate();
    if (d.decoder == "dsm") dsm.validate();

    json manifest{{"schema_version", kSchemaVersion},
                  {"command", "decode"},
                  {"dataset", dataset_json(s, problems.size())},
                  {"decoder", d.decoder},
                  {"samples", d.samples},
                  {"seed", s.seed},
                  {"budget", budget_to_json(budget)},
                  {"params", params},
                  {"summary_detail", s.summary_detail},
                  {"summarize_final_turn", d.summarize_final_turn},
                  {"templates", {{"dir", s.templates}, {"sha256", template_hashes(prompts)}}},
                  {"backend", backend_json(b)}};
    if (d.decoder == "delethink") manifest["chunk_tokens"] = baseline.resolved_chunk(budget);
    if (d.decoder == "budget_force") manifest["force_phrase"] = d.force_phrase;
    if (d.decoder == "rsa") {
        manifest["rsa"] = {{"pool_size", rsa.pool_size}, {"sample_size", rsa.sample_size}, {"rounds", rsa.rounds},
                           {"inner", d.inner}};
    }
    if (d.decoder == "dsm") {
        manifest["dsm"] = {{"generations", dsm.generations}, {"verifications", dsm.verifications},
                           {"rounds", dsm.rounds}, {"inner", d.inner}};
    }

    const fs::path run = s.out;
    fs::create_directories(run / "trajectories");
    reconcile_manifest(run, manifest);

    struct Job {
        const ProblemInstance* problem;
        int sample;
    };
    std::vector<Job> jobs;
    std::size_t skipped = 0;
    for (const auto& p : problems) {
        for (int i = 0; i < d.samples; ++i) {
            if (valid_trajectory_file(trajectory_path(run, p.id, i), p.id, d.decoder)) {
                ++skipped;
            } else {
                jobs.push_back({&p, i});
            }
        }
    }
    if (jobs.empty()) {
        out << json{{"command", "decode"}, {"written", 0}, {"skipped", skipped}}.dump() << "\n";
        return 0;
    }

    BackendStack backend = make_backend(b);
    std::vector<std::optional<json>> errors(jobs.size());
    parallel_for(jobs.size(), s.concurrency, [&](std::size_t i) {
        const Job& job = jobs[i];
        const ProblemInstance& problem = *job.problem;
        const auto sample = static_cast<std::uint64_t>(job.sample);
        GenerationParams p = params;
        p.seed = derive_seed(s.seed, problem.id, sample);
        try {
            RcTrajectory t;
            if (d.decoder == "rc") {
                RcOptions opts;
                opts.summarize_final_turn = d.summarize_final_turn;
                t = run_rc(problem, prompts.rc, budget, p, backend.get(), opts);
            } else if (d.decoder == "rsa") {
                const auto r = run_rsa(problem, rsa, prompts, p, backend.get(), derive_seed(s.seed, "rsa:" + problem.id, sample));
                if (r.error) throw Error("RsaAborted", *r.error);
                // Reported answer: majority over the final pool.
                std::vector<std::string> answers;
                for (const auto& member : r.final_pool) {
                    if (auto a = detect_termination(member).answer) answers.push_back(*a);
                }
                std::string pick = r.final_pool.front();
                if (!answers.empty()) {
                    const std::string winner = maj_at_k(answers, static_cast<int>(answers.size()));
                    for (const auto& member : r.final_pool) {
                        auto a = detect_termination(member).answer;
                        if (a && normalize_answer(*a) == winner) {
                            pick = member;
                            break;
                        }
                    }
                }
                json details{{"pool_sizes", r.pool_sizes}, {"transcript", r.transcript}, {"final_pool", r.final_pool}};
                t = scaffold_trajectory(problem, "rsa", budget, pick, r.total_tokens, details);
            } else if (d.decoder == "dsm") {
                const auto r = run_dsm(problem, dsm, prompts, p, backend.get(), derive_seed(s.seed, "dsm:" + problem.id, sample));
                json details{{"best_index", r.best_index},
                             {"best_score", r.best_score},
                             {"refinement_rounds", r.refinement_rounds},
                             {"transcript", r.transcript}};
                t = scaffold_trajectory(problem, "dsm", budget, r.best_solution, r.total_tokens, details);
            } else {
                t = run_baseline(baseline, problem, prompts, budget, p, backend.get());
            }
            write_file_atomic(trajectory_path(run, problem.id, job.sample), pretty(json(t)));
        } catch (const Error& e) {
            errors[i] = json{{"problem_id", problem.id}, {"sample", job.sample}, {"error", e.kind()}, {"message", e.what()}};
        }
    });

    std::vector<json> failures;
    for (auto& e : errors) {
        if (e) failures.push_back(std::move(*e));
    }
    if (!failures.empty()) {
        throw CommandFailed(failures.front().at("error").get<std::string>(), failures_message(failures), failures);
    }
    out << json{{"command", "decode"}, {"written", jobs.size()}, {"skipped", skipped}}.dump() << "\n";
    return 0;
}

// ---- rollouts ----

int cmd_rollouts(const SamplingFlags& s, const RolloutFlags& r, const BackendFlags& b, std::ostream& out) {
    const auto problems = read_dataset(s.dataset);
    const PromptLibrary prompts = load_prompts(s);
    const GenerationParams params = base_params(s);

    RolloutJobConfig cfg;
    cfg.t_train = r.t_train;
    cfg.n_summ = r.n_summ;
    cfg.k_group = r.k_group;
    cfg.budget = BudgetSpec{s.h_r, s.h_s, r.t_train};
    cfg.mode = rollout_mode_from_string(r.mode);
    cfg.epoch = r.epoch;
    cfg.trace_baseline = baseline_type_from_string(r.trace_baseline);
    if (r.std_kind == "population") {
        cfg.std_kind = StdKind::population;
    } else if (r.std_kind == "sample") {
        cfg.std_kind = StdKind::sample;
    } else {
        throw InvalidArgument("--std must be population or sample");
    }
    cfg.concurrency = s.concurrency;
    const fs::path run = s.out;
    const fs::path buffer_path = r.replay.empty() ? run / "buffer.jsonl" : fs::path(r.replay);
    if (r.use_replay == "on") {
        cfg.use_replay = true;
    } else if (r.use_replay == "off") {
        cfg.use_replay = false;
    } else if (r.use_replay == "auto") {
        cfg.use_replay = r.epoch > 1;
    } else {
        throw InvalidArgument("--use-replay must be auto, on or off");
    }
    cfg.validate();
    const std::size_t capacity =
        r.replay_capacity == 0 ? static_cast<std::size_t>(cfg.t_train) : r.replay_capacity;

    // Epoch-independent description; each epoch's batch has its own sidecar.
    json manifest{{"schema_version", kSchemaVersion},
                  {"command", "rollouts"},
                  {"dataset", dataset_json(s, problems.size())},
                  {"seed", s.seed},
                  {"mode", r.mode},
                  {"t_train", cfg.t_train},
                  {"n_summ", cfg.n_summ},
                  {"k_group", cfg.k_group},
                  {"budget", budget_to_json(cfg.budget)},
                  {"params", params},
                  {"summary_detail", s.summary_detail},
                  {"replay_capacity", capacity},
                  {"trace_baseline", r.trace_baseline},
                  {"std", r.std_kind},
                  {"templates", {{"dir", s.templates}, {"sha256", template_hashes(prompts)}}},
                  {"backend", backend_json(b)}};
    fs::create_directories(run / "batches");
    reconcile_manifest(run, manifest);

    const std::string stem = "epoch" + std::to_string(r.epoch);
    const fs::path batch_path = run / "batches" / (stem + ".jsonl");
    const fs::path sidecar_path = run / "batches" / (stem + ".manifest.json");
    if (fs::exists(batch_path) && fs::exists(sidecar_path)) {
        try {
            const auto rows = read_batch_jsonl(batch_path);
            const json sidecar = json::parse(read_file(sidecar_path));
            if (sidecar.at("row_count").get<std::size_t>() == rows.size()) {
                out << json{{"command", "rollouts"}, {"epoch", r.epoch}, {"rows", rows.size()}, {"skipped", true}}.dump()
                    << "\n";
                return 0;
            }
        } catch (const std::exception&) {
            // fall through and regenerate
        }
    }

    const std::uint64_t epoch_seed = derive_seed(s.seed, "rollouts", static_cast<std::uint64_t>(r.epoch));
    std::unique_ptr<ReplayBuffer> buffer;
    if (fs::exists(buffer_path)) {
        buffer = ReplayBuffer::load(buffer_path, capacity, derive_seed(epoch_seed, "replay"));
    } else {
        buffer = std::make_unique<ReplayBuffer>(capacity, derive_seed(epoch_seed, "replay"));
    }

    BackendStack backend = make_backend(b);
    const BatchResult result = generate_rollouts(problems, cfg, prompts, params, buffer.get(), backend.get(), epoch_seed);
    json sidecar = batch_manifest(cfg, prompts, result, epoch_seed);
    sidecar["epoch"] = r.epoch;
    sidecar["buffer"] = buffer_path.string();

    // Buffer first: a crash between the two writes leaves the batch missing,
    // so the epoch reruns rather than being skipped with a stale buffer.
    buffer->save(buffer_path);
    std::ostringstream rows;
    for (const auto& row : result.rows) rows << json(row).dump() << "\n";
    write_file_atomic(batch_path, rows.str());
    write_file_atomic(sidecar_path, pretty(sidecar));

    out << json{{"command", "rollouts"},
                {"epoch", r.epoch},
                {"rows", result.rows.size()},
                {"zero_variance_groups", result.zero_variance_groups.size()},
                {"skipped_problems", result.skipped.size()}}
               .dump()
        << "\n";
    if (!result.skipped.empty() && result.rows.empty()) {
        std::vector<json> failures;
        for (const auto& sk : result.skipped) failures.push_back({{"problem_id", sk.problem_id}, {"message", sk.error}});
        throw CommandFailed("RolloutsFailed", "every problem failed", failures);
    }
    return 0;
}

// ---- eval ----

json read_manifest(const fs::path& run) {
    const fs::path path = run / "manifest.json";
    if (!fs::exists(path)) throw MalformedRunDir(run.string() + " has no manifest.json");
    try {
        json m = json::parse(read_file(path));
        if (m.value("command", "") != "decode") throw MalformedRunDir(path.string() + " is not a decode run");
        return m;
    } catch (const json::exception& e) {
        throw MalformedRunDir(path.string() + ": " + e.what());
    }
}

EvalRun load_run(const fs::path& run, const std::string& dataset_override) {
    const json manifest = read_manifest(run);
    EvalRun ev;
    std::vector<ProblemInstance> problems;
    int samples = 0;
    try {
        const std::string dataset = dataset_override.empty() ? manifest.at("dataset").at("path").get<std::string>()
                                                             : dataset_override;
        if (sha256_hex(read_file(dataset)) != manifest.at("dataset").at("sha256").get<std::string>()) {
            throw MalformedRunDir("dataset " + dataset + " does not match the manifest hash");
        }
        problems = read_dataset(dataset);
        samples = manifest.at("samples").get<int>();
        ev.dataset_id = dataset;
        ev.protocol = manifest;
        ev.protocol.erase("backend");
    } catch (const json::exception& e) {
        throw MalformedRunDir("manifest: " + std::string(e.what()));
    } catch (const IoError& e) {
        throw MalformedRunDir(e.what());
    }
    std::vector<std::string> missing;
    for (const auto& p : problems) {
        ProblemRuns pr{p, {}};
        for (int i = 0; i < samples; ++i) {
            const fs::path path = trajectory_path(run, p.id, i);
            try {
                pr.samples.push_back(trajectory_from_json(json::parse(read_file(path))));
            } catch (const std::exception&) {
                missing.push_back(path.filename().string());
            }
        }
        ev.problems.push_back(std::move(pr));
    }
    if (!missing.empty()) {
        throw MalformedRunDir(std::to_string(missing.size()) + " trajectory file(s) missing or invalid, first: " +
                              missing.front());
    }
    return ev;
}

std::vector<int> k_values(int n) {
    std::vector<int> ks;
    for (int k = 1; k <= n; k *= 2) ks.push_back(k);
    if (ks.empty() || ks.back() != n) ks.push_back(n);
    return ks;
}

int cmd_eval(const EvalFlags& e, std::ostream& out) {
    const fs::path run = e.run;
    const EvalRun ev = load_run(run, e.dataset);
    const std::size_t n = ev.validate();
    const fs::path metrics = run / "metrics";
    fs::create_directories(metrics);

    const bool labeled = std::all_of(ev.problems.begin(), ev.problems.end(),
                                     [](const ProblemRuns& p) { return p.problem.answer.has_value(); });
    std::ostringstream summary;
    summary.precision(17);
    summary << "metric,value\n";
    if (labeled && n > 0) {
        write_file_atomic(metrics / "accuracy_vs_budget.csv", curve_csv(accuracy_vs_budget(ev)));
        const auto counts = final_correct_counts(ev);
        std::ostringstream pass;
        pass.precision(17);
        pass << "k,pass_at_k\n";
        std::ostringstream maj;
        maj.precision(17);
        maj << "k,maj_at_k\n";
        for (int k : k_values(static_cast<int>(n))) {
            pass << k << ',' << pass_at_k(counts, k) << '\n';
            maj << k << ',' << maj_accuracy(ev, k) << '\n';
        }
        write_file_atomic(metrics / "pass_at_k.csv", pass.str());
        write_file_atomic(metrics / "maj_at_k.csv", maj.str());
    }
    const auto term = termination_stats(ev, e.bin_width);
    write_file_atomic(metrics / "termination_cdf.csv", termination_csv(term));
    summary << "problems," << ev.problems.size() << "\n";
    summary << "samples_per_problem," << n << "\n";
    summary << "turns," << term.turns << "\n";
    summary << "termination_rate," << term.overall_rate << "\n";
    write_file_atomic(metrics / "summary.csv", summary.str());
    out << json{{"command", "eval"}, {"labeled", labeled}, {"metrics", metrics.string()}}.dump() << "\n";
    return 0;
}

// ---- annotate ----

int cmd_annotate(const EvalFlags& e, const SamplingFlags& s, const BackendFlags& b, std::ostream& out) {
    const fs::path run = e.run;
    const EvalRun ev = load_run(run, s.dataset);
    const PromptLibrary prompts = load_prompts(s);
    GenerationParams params = base_params(s);
    params.max_tokens = 256;
    BackendStack backend = make_backend(b);
    const auto labels = annotate_strategies(ev, prompts, params, backend.get(), s.concurrency);
    std::ostringstream csv;
    csv << "problem_id,sample,turn,label,flagged,error\n";
    std::map<std::string, std::size_t> counts;
    for (const auto& l : labels) {
        const std::string name(to_string(l.label));
        if (!l.error) ++counts[name];
        csv << json(l.problem_id).dump() << ',' << l.sample << ',' << l.turn << ',' << name << ','
            << (l.flagged ? 1 : 0) << ',' << (l.error ? json(*l.error).dump() : "") << '\n';
    }
    write_file_atomic(run / "metrics" / "strategies.csv", csv.str());
    std::ostringstream dist;
    dist << "label,count\n";
    for (Strategy st : {Strategy::verification, Strategy::exploration, Strategy::refinement, Strategy::none}) {
        dist << to_string(st) << ',' << counts[std::string(to_string(st))] << '\n';
    }
    write_file_atomic(run / "metrics" / "strategy_counts.csv", dist.str());
    out << json{{"command", "annotate"}, {"pairs", labels.size()}}.dump() << "\n";
    return 0;
}

// ---- difficulty ----

std::vector<double> parse_weights(const std::string& text) {
    std::vector<double> weights;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            weights.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw InvalidArgument("bad weight '" + item + "'");
        }
        if (weights.back() < 0) throw InvalidArgument("weights must be >= 0");
    }
    return weights;
}

// Per-problem pass rate over K samples; the weight comes from user-supplied
// per-bin weights over equal-width pass-rate bins.
int cmd_difficulty(const SamplingFlags& s, const DifficultyFlags& f, const BackendFlags& b, std::ostream& out) {
    if (f.k < 1) throw InvalidArgument("--k must be >= 1");
    const auto problems = read_dataset(s.dataset);
    for (const auto& p : problems) {
        if (!p.answer) throw InvalidArgument("problem '" + p.id + "' has no answer; difficulty needs labels");
    }
    const std::vector<double> weights = f.bin_weights.empty() ? std::vector<double>{1.0} : parse_weights(f.bin_weights);
    const BudgetSpec budget{s.h_r, s.h_s, f.turns};
    const PromptLibrary prompts = load_prompts(s);
    const GenerationParams params = base_params(s);
    BackendStack backend = make_backend(b);

    const std::size_t k = static_cast<std::size_t>(f.k);
    std::vector<double> rewards(problems.size() * k, 0.0);
    std::vector<std::size_t> failed(problems.size() * k, 0);
    parallel_for(rewards.size(), s.concurrency, [&](std::size_t i) {
        const auto& problem = problems[i / k];
        GenerationParams p = params;
        p.seed = derive_seed(s.seed, "difficulty:" + problem.id, i % k);
        try {
            const auto t = run_rc(problem, prompts.rc, budget, p, backend.get());
            rewards[i] = score(t.final_output, *problem.answer).reward;
        } catch (const Error&) {
            failed[i] = 1;
        }
    });

    std::ostringstream jsonl;
    std::ostringstream csv;
    csv.precision(17);
    csv << "problem_id,samples,correct,pass_rate,weight,failed\n";
    for (std::size_t pi = 0; pi < problems.size(); ++pi) {
        double correct = 0.0;
        std::size_t fails = 0;
        for (std::size_t j = 0; j < k; ++j) {
            correct += rewards[pi * k + j];
            fails += failed[pi * k + j];
        }
        const double rate = correct / static_cast<double>(k);
        const auto bin = std::min(weights.size() - 1, static_cast<std::size_t>(rate * static_cast<double>(weights.size())));
        const double w = weights[bin];
        csv << json(problems[pi].id).dump() << ',' << k << ',' << correct << ',' << rate << ',' << w << ',' << fails << '\n';
        jsonl << json{{"id", problems[pi].id}, {"pass_rate", rate}, {"weight", w}, {"failed", fails}}.dump() << "\n";
    }
    const fs::path run = s.out;
    write_file_atomic(run / "metrics" / "difficulty.csv", csv.str());
    write_file_atomic(run / "difficulty_weights.jsonl", jsonl.str());
    out << json{{"command", "difficulty"}, {"problems", problems.size()}, {"k", f.k}}.dump() << "\n";
    return 0;
}

// ---- cost ----

std::pair<int, int> parse_range(const std::string& text) {
    try {
        const auto dots = text.find("..");
        if (dots == std::string::npos) {
            const int t = std::stoi(text);
            return {t, t};
        }
        return {std::stoi(text.substr(0, dots)), std::stoi(text.substr(dots + 2))};
    } catch (const std::exception&) {
        throw InvalidArgument("--t expects N or A..B, got '" + text + "'");
    }
}

int cmd_cost(const CostFlags& c, std::ostream& out) {
    const auto [lo, hi] = parse_range(c.t);
    const std::string csv = cost::sweep_csv(cost::sweep(c.c, c.h_r, c.h_s, lo, hi));
    if (c.out.empty()) {
        out << csv;
    } else {
        write_file_atomic(c.out, csv);
    }
    return 0;
}

void report(std::ostream& err, const std::string& kind, const std::string& message, const json& details = nullptr) {
    json j{{"error", kind}, {"message", message}};
    if (!details.is_null()) j["details"] = details;
    err << j.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"rcache: reasoning-cache decoding, rollout generation and evaluation"};
    app.set_config("--config", "", "TOML config file; command-line flags take precedence");
    app.require_subcommand(1);

    SamplingFlags sampling;
    DecodeFlags decode;
    RolloutFlags rollouts;
    EvalFlags eval;
    CostFlags cost_flags;
    DifficultyFlags difficulty;
    BackendFlags backend;

    auto* decode_cmd = app.add_subcommand("decode", "run a decoder over a dataset");
    add_sampling_flags(decode_cmd, sampling, true);
    add_backend_flags(decode_cmd, backend);
    decode_cmd->add_option("--decoder", decode.decoder, "rc | self_refine | self_verify | budget_force | delethink | rsa | dsm");
    decode_cmd->add_option("--turns", decode.turns);
    decode_cmd->add_option("--samples", decode.samples);
    decode_cmd->add_flag("--summarize-final-turn", decode.summarize_final_turn);
    decode_cmd->add_option("--chunk-tokens", decode.chunk_tokens, "delethink carryover; 0 means h_r/2");
    decode_cmd->add_option("--force-phrase", decode.force_phrase);
    decode_cmd->add_option("--inner", decode.inner, "scaffold inner solver: plain | rc");
    decode_cmd->add_option("--rsa-pool", decode.rsa_pool);
    decode_cmd->add_option("--rsa-k", decode.rsa_k);
    decode_cmd->add_option("--rsa-rounds", decode.rsa_rounds);
    decode_cmd->add_option("--dsm-generations", decode.dsm_generations);
    decode_cmd->add_option("--dsm-verifications", decode.dsm_verifications);
    decode_cmd->add_option("--dsm-rounds", decode.dsm_rounds);

    auto* rollouts_cmd = app.add_subcommand("rollouts", "generate a training batch and update the replay buffer");
    add_sampling_flags(rollouts_cmd, sampling, true);
    add_backend_flags(rollouts_cmd, backend);
    rollouts_cmd->add_option("--mode", rollouts.mode, "rc | baseline-trace | summary-reward | both");
    rollouts_cmd->add_option("--t-train", rollouts.t_train);
    rollouts_cmd->add_option("--n-summ", rollouts.n_summ);
    rollouts_cmd->add_option("--k", rollouts.k_group, "group size K");
    rollouts_cmd->add_option("--replay", rollouts.replay, "buffer file (default <out>/buffer.jsonl)");
    rollouts_cmd->add_option("--replay-capacity", rollouts.replay_capacity, "summaries kept per problem; 0 means t_train");
    rollouts_cmd->add_option("--epoch", rollouts.epoch);
    rollouts_cmd->add_option("--use-replay", rollouts.use_replay, "auto | on | off (auto: on from epoch 2)");
    rollouts_cmd->add_option("--trace-baseline", rollouts.trace_baseline, "self_refine | self_verify");
    rollouts_cmd->add_option("--std", rollouts.std_kind, "population | sample");

    auto* eval_cmd = app.add_subcommand("eval", "metrics CSVs from a decode run directory");
    eval_cmd->add_option("--run", eval.run, "run directory")->required();
    eval_cmd->add_option("--dataset", eval.dataset, "dataset path override");
    eval_cmd->add_option("--bin-width", eval.bin_width)->check(CLI::PositiveNumber);

    auto* annotate_cmd = app.add_subcommand("annotate", "label summary-to-trace strategies in a decode run");
    annotate_cmd->add_option("--run", eval.run, "run directory")->required();
    add_sampling_flags(annotate_cmd, sampling, false);
    add_backend_flags(annotate_cmd, backend);

    auto* cost_cmd = app.add_subcommand("cost", "cost-model sweep CSV");
    cost_cmd->add_option("--c", cost_flags.c, "prompt tokens");
    cost_cmd->add_option("--h-r", cost_flags.h_r);
    cost_cmd->add_option("--h-s", cost_flags.h_s);
    cost_cmd->add_option("--t", cost_flags.t, "turn count or range A..B");
    cost_cmd->add_option("--out", cost_flags.out, "write CSV here instead of stdout");

    auto* difficulty_cmd = app.add_subcommand("difficulty", "per-problem pass rates and resampling weights");
    add_sampling_flags(difficulty_cmd, sampling, true);
    add_backend_flags(difficulty_cmd, backend);
    difficulty_cmd->add_option("--k", difficulty.k, "samples per problem");
    difficulty_cmd->add_option("--turns", difficulty.turns);
    difficulty_cmd->add_option("--bin-weights", difficulty.bin_weights,
                               "comma-separated weights over equal-width pass-rate bins");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        report(err, "UsageError", e.what());
        return 2;
    }

    std::replace(decode.decoder.begin(), decode.decoder.end(), '-', '_');
    try {
        if (*decode_cmd) return cmd_decode(sampling, decode, backend, out);
        if (*rollouts_cmd) return cmd_rollouts(sampling, rollouts, backend, out);
        if (*eval_cmd) return cmd_eval(eval, out);
        if (*annotate_cmd) return cmd_annotate(eval, sampling, backend, out);
        if (*cost_cmd) return cmd_cost(cost_flags, out);
        if (*difficulty_cmd) return cmd_difficulty(sampling, difficulty, backend, out);
    } catch (const CommandFailed& e) {
        report(err, e.kind(), e.what(), e.details);
        return 1;
    } catch (const Error& e) {
        report(err, e.kind(), e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        report(err, "IoError", e.what());
        return 1;
    } catch (const std::exception& e) {
        report(err, "InternalError", e.what());
        return 1;
    }
    return 1;
}

}  // namespace rcache::cli
