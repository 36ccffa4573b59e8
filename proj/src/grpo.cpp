#include "rcache/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "rcache/errors.hpp"

namespace rcache {

namespace {

struct Moments {
    double mean;
    double stddev;
};

Moments moments(std::span<const double> values, StdKind kind) {
    const auto n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    const double dof = kind == StdKind::population ? n : n - 1.0;
    return {mean, std::sqrt(sq / dof)};
}

}  // namespace

void GrpoGroup::validate() const {
    if (rewards.size() < 2) throw GroupTooSmall(rewards.size());
    for (double r : rewards) {
        if (!std::isfinite(r)) throw InvalidArgument("group '" + group_id + "' has a non-finite reward");
    }
    if (epsilon_low < 0 || epsilon_high < 0) throw InvalidArgument("clip ranges must be nonnegative");
}

std::vector<double> compute_advantages(std::span<const double> rewards, StdKind kind) {
    if (rewards.size() < 2) throw GroupTooSmall(rewards.size());
    const Moments m = moments(rewards, kind);
    std::vector<double> advantages(rewards.size(), 0.0);
    if (m.stddev < kZeroVarianceThreshold) return advantages;
    std::transform(rewards.begin(), rewards.end(), advantages.begin(),
                   [&](double r) { return (r - m.mean) / m.stddev; });
    return advantages;
}

bool is_zero_variance(std::span<const double> rewards) {
    if (rewards.size() < 2) return true;
    return moments(rewards, StdKind::population).stddev < kZeroVarianceThreshold;
}

double clipped_objective_term(double ratio, double advantage, double eps_low, double eps_high) {
    if (!(ratio > 0.0)) throw InvalidArgument("probability ratio must be positive");
    const double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high);
    return std::min(ratio * advantage, clipped * advantage);
}

}  // namespace rcache
