#pragma once

// Per-problem summary replay buffer.
//
// Stores summaries produced while generating training rollouts so later
// epochs can start RC from them instead of from scratch. Each entry records
// its lineage depth: how many RC turns separate it from a fresh start.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

namespace rcache {

struct ReplayEntry {
    std::string summary;
    int epoch = 0;
    int source_turn = 1;
    int lineage_depth = 1;

    friend bool operator==(const ReplayEntry&, const ReplayEntry&) = default;
};

struct SummaryInsert {
    std::string text;
    int source_turn = 1;
};

struct ReplaySample {
    std::string summary;
    int lineage_depth = 0;
};

class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity_per_problem, std::uint64_t rng_seed);

    ReplayBuffer(const ReplayBuffer&) = delete;
    ReplayBuffer& operator=(const ReplayBuffer&) = delete;

    // Appends with lineage_depth = parent_depth + source_turn, then evicts the
    // oldest-epoch entries (earliest inserted first among equals) until the
    // problem is back within capacity.
    void insert(const std::string& problem_id, const std::vector<SummaryInsert>& summaries, int parent_depth,
                int epoch);

    // Uniform over the problem's entries. Each problem draws from its own
    // stream seeded by (rng_seed, problem_id), so draws do not depend on
    // activity for other problems. Throws NoEntry.
    ReplaySample sample(const std::string& problem_id);

    [[nodiscard]] bool contains(const std::string& problem_id) const;
    [[nodiscard]] std::vector<ReplayEntry> entries(const std::string& problem_id) const;
    [[nodiscard]] std::vector<std::string> problem_ids() const;
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::size_t capacity_per_problem() const noexcept { return capacity_; }
    [[nodiscard]] int max_lineage_depth() const;

    // JSONL, one entry per line: {problem_id, summary, epoch, source_turn, lineage_depth}.
    void save(const std::filesystem::path& path) const;
    static std::unique_ptr<ReplayBuffer> load(const std::filesystem::path& path, std::size_t capacity_per_problem,
                                              std::uint64_t rng_seed);

    // Same entries for every problem, in the same order.
    [[nodiscard]] bool same_entries(const ReplayBuffer& other) const;

private:
    struct Slot {
        mutable std::mutex mutex;
        std::vector<ReplayEntry> entries;
        std::mt19937_64 rng;
    };

    Slot& slot_for(const std::string& problem_id);
    const Slot* find_slot(const std::string& problem_id) const;
    void evict_to_capacity(Slot& slot) const;

    std::size_t capacity_;
    std::uint64_t seed_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;
};

}  // namespace rcache
