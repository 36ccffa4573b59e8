#include "rcache/replay.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "rcache/core.hpp"
#include "rcache/errors.hpp"

namespace rcache {

using nlohmann::json;

ReplayBuffer::ReplayBuffer(std::size_t capacity_per_problem, std::uint64_t rng_seed)
    : capacity_(capacity_per_problem), seed_(rng_seed) {
    if (capacity_ < 1) throw InvalidArgument("replay capacity must be >= 1");
}

ReplayBuffer::Slot& ReplayBuffer::slot_for(const std::string& problem_id) {
    {
        std::shared_lock lock(map_mutex_);
        if (auto it = slots_.find(problem_id); it != slots_.end()) return *it->second;
    }
    std::unique_lock lock(map_mutex_);
    auto& slot = slots_[problem_id];
    if (!slot) {
        slot = std::make_unique<Slot>();
        slot->rng.seed(derive_seed(seed_, problem_id));
    }
    return *slot;
}

const ReplayBuffer::Slot* ReplayBuffer::find_slot(const std::string& problem_id) const {
    std::shared_lock lock(map_mutex_);
    auto it = slots_.find(problem_id);
    return it == slots_.end() ? nullptr : it->second.get();
}

void ReplayBuffer::insert(const std::string& problem_id, const std::vector<SummaryInsert>& summaries,
                          int parent_depth, int epoch) {
    if (summaries.empty()) throw InvalidArgument("insert needs at least one summary");
    if (parent_depth < 0) throw InvalidArgument("parent depth must be >= 0");
    Slot& slot = slot_for(problem_id);
    std::lock_guard lock(slot.mutex);
    for (const auto& s : summaries) {
        if (s.source_turn < 1) throw InvalidArgument("source turn must be >= 1");
        slot.entries.push_back({s.text, epoch, s.source_turn, parent_depth + s.source_turn});
    }
    evict_to_capacity(slot);
}

void ReplayBuffer::evict_to_capacity(Slot& slot) const {
    while (slot.entries.size() > capacity_) {
        // Oldest epoch first; stable among equal epochs.
        auto oldest = std::min_element(slot.entries.begin(), slot.entries.end(),
                                       [](const ReplayEntry& a, const ReplayEntry& b) { return a.epoch < b.epoch; });
        slot.entries.erase(oldest);
    }
}

ReplaySample ReplayBuffer::sample(const std::string& problem_id) {
    Slot* slot = nullptr;
    {
        std::shared_lock lock(map_mutex_);
        if (auto it = slots_.find(problem_id); it != slots_.end()) slot = it->second.get();
    }
    if (slot == nullptr) throw NoEntry(problem_id);
    std::lock_guard lock(slot->mutex);
    if (slot->entries.empty()) throw NoEntry(problem_id);
    std::uniform_int_distribution<std::size_t> pick(0, slot->entries.size() - 1);
    const ReplayEntry& e = slot->entries[pick(slot->rng)];
    return {e.summary, e.lineage_depth};
}

bool ReplayBuffer::contains(const std::string& problem_id) const {
    const Slot* slot = find_slot(problem_id);
    if (slot == nullptr) return false;
    std::lock_guard lock(slot->mutex);
    return !slot->entries.empty();
}

std::vector<ReplayEntry> ReplayBuffer::entries(const std::string& problem_id) const {
    const Slot* slot = find_slot(problem_id);
    if (slot == nullptr) return {};
    std::lock_guard lock(slot->mutex);
    return slot->entries;
}

std::vector<std::string> ReplayBuffer::problem_ids() const {
    std::shared_lock lock(map_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, slot] : slots_) ids.push_back(id);
    return ids;
}

std::size_t ReplayBuffer::size() const {
    std::size_t n = 0;
    for (const auto& id : problem_ids()) n += entries(id).size();
    return n;
}

int ReplayBuffer::max_lineage_depth() const {
    int depth = 0;
    for (const auto& id : problem_ids()) {
        for (const auto& e : entries(id)) depth = std::max(depth, e.lineage_depth);
    }
    return depth;
}

void ReplayBuffer::save(const std::filesystem::path& path) const {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write replay buffer " + tmp.string());
        for (const auto& id : problem_ids()) {
            for (const auto& e : entries(id)) {
                out << json{{"problem_id", id},
                            {"summary", e.summary},
                            {"epoch", e.epoch},
                            {"source_turn", e.source_turn},
                            {"lineage_depth", e.lineage_depth}}
                           .dump()
                    << '\n';
            }
        }
        if (!out) throw IoError("failed writing replay buffer " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::unique_ptr<ReplayBuffer> ReplayBuffer::load(const std::filesystem::path& path, std::size_t capacity_per_problem,
                                                 std::uint64_t rng_seed) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open replay buffer " + path.string());
    auto buffer = std::make_unique<ReplayBuffer>(capacity_per_problem, rng_seed);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ReplayEntry entry;
        std::string problem_id;
        try {
            const json j = json::parse(line);
            problem_id = j.at("problem_id").get<std::string>();
            entry.summary = j.at("summary").get<std::string>();
            entry.epoch = j.at("epoch").get<int>();
            entry.source_turn = j.at("source_turn").get<int>();
            entry.lineage_depth = j.at("lineage_depth").get<int>();
        } catch (const json::exception& e) {
            throw CorruptBuffer(line_no, e.what());
        }
        if (problem_id.empty() || entry.source_turn < 1 || entry.lineage_depth < entry.source_turn) {
            throw CorruptBuffer(line_no, "invalid field values");
        }
        buffer->slot_for(problem_id).entries.push_back(std::move(entry));
    }
    // A file written with a larger capacity is trimmed by the usual policy.
    for (auto& [id, slot] : buffer->slots_) buffer->evict_to_capacity(*slot);
    return buffer;
}

bool ReplayBuffer::same_entries(const ReplayBuffer& other) const {
    const auto ids = problem_ids();
    if (ids != other.problem_ids()) return false;
    return std::all_of(ids.begin(), ids.end(), [&](const std::string& id) { return entries(id) == other.entries(id); });
}

}  // namespace rcache
