#pragma once

#include <span>
#include <string>
#include <vector>

namespace rcache {

enum class StdKind { population, sample };

inline constexpr double kZeroVarianceThreshold = 1e-8;

struct GrpoGroup {
    std::string group_id;
    std::vector<double> rewards;
    double epsilon_low = 0.2;
    double epsilon_high = 0.28;

    void validate() const;
};

// A_i = (r_i - mean(r)) / std(r). Groups whose std is below 1e-8 get all-zero
// advantages. Throws GroupTooSmall for fewer than two rewards.
std::vector<double> compute_advantages(std::span<const double> rewards, StdKind kind = StdKind::population);

// True when the group carries no learning signal (all rewards equal).
bool is_zero_variance(std::span<const double> rewards);

// min(ratio * A, clip(ratio, 1 - eps_low, 1 + eps_high) * A). Diagnostic only.
double clipped_objective_term(double ratio, double advantage, double eps_low, double eps_high);

}  // namespace rcache
