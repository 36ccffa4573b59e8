#include "rcache/cost_model.hpp"

#include <limits>
#include <sstream>

#include "rcache/errors.hpp"

namespace rcache::cost {

void CostQuery::validate() const {
    if (prompt_tokens < 0 || total_tokens < 0 || reasoning_tokens < 0 || summary_tokens < 0) {
        throw InvalidArgument("token counts must be >= 0");
    }
    if (turns < 1) throw InvalidArgument("turns must be >= 1");
    if (k_group < 1 || n_summ < 0 || t_train < 0 || t_target < 1) throw InvalidArgument("invalid training counts");
}

double ic_standard(double c, double n) {
    if (n < 1) throw InvalidArgument("ic_standard needs n >= 1");
    return n * c + n * (n + 1) / 2.0;
}

std::uint64_t ic_standard_exact(std::uint64_t c, std::uint64_t n) {
    if (n < 1) throw InvalidArgument("ic_standard needs n >= 1");
    constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
    // n(n+1)/2 without overflowing the intermediate product.
    const std::uint64_t a = (n % 2 == 0) ? n / 2 : n;
    const std::uint64_t b = (n % 2 == 0) ? n + 1 : (n + 1) / 2;
    if (a != 0 && b > kMax / a) throw InvalidArgument("ic_standard_exact overflow");
    const std::uint64_t triangle = a * b;
    if (c != 0 && n > kMax / c) throw InvalidArgument("ic_standard_exact overflow");
    const std::uint64_t prompt = n * c;
    if (prompt > kMax - triangle) throw InvalidArgument("ic_standard_exact overflow");
    return prompt + triangle;
}

double ic_rc(double c, double h_r, double h_s, int t) {
    if (t < 1) throw InvalidArgument("ic_rc needs t >= 1");
    return t * h_r * (c + h_s + h_r);
}

double speedup(double c, double h_r, double h_s, int t) {
    if (t < 1) throw InvalidArgument("speedup needs t >= 1");
    if (h_r < 1) throw InvalidArgument("speedup needs h_r >= 1");
    return (c + t * h_r) / (c + h_s + h_r);
}

double memory_ratio(double c, double h_r, double h_s, int t) { return speedup(c, h_r, h_s, t); }

double train_compute_ratio(const CostQuery& q, NumeratorForm form) {
    q.validate();
    const double k = q.k_group;
    const double numerator = form == NumeratorForm::sum ? q.t_train + k * q.n_summ : q.t_train * k * q.n_summ;
    return numerator / (k * static_cast<double>(q.t_target) * q.t_target);
}

std::vector<SweepRow> sweep(double c, double h_r, double h_s, int t_min, int t_max) {
    if (t_min < 1 || t_max < t_min) throw InvalidArgument("sweep needs 1 <= t_min <= t_max");
    std::vector<SweepRow> rows;
    for (int t = t_min; t <= t_max; ++t) {
        rows.push_back({t, t * h_r, speedup(c, h_r, h_s, t), memory_ratio(c, h_r, h_s, t), ic_standard(c, t * h_r),
                        ic_rc(c, h_r, h_s, t)});
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "turns,budget,speedup,memory_ratio,ic_standard,ic_rc\n";
    for (const auto& r : rows) {
        out << r.turns << ',' << r.effective_budget << ',' << r.speedup << ',' << r.memory_ratio << ','
            << r.ic_standard << ',' << r.ic_rc << '\n';
    }
    return out.str();
}

}  // namespace rcache::cost
