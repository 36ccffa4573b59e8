#pragma once

// Closed-form inference/training cost ratios. Proportionality constants are
// dropped: values are in unitless "attention-token units".

#include <cstdint>
#include <string>
#include <vector>

namespace rcache::cost {

struct CostQuery {
    double prompt_tokens = 0;      // C
    double total_tokens = 0;       // N
    double reasoning_tokens = 0;   // H_R
    double summary_tokens = 0;     // H_S
    int turns = 1;                 // T
    double gamma_train = 1.0;
    int k_group = 8;               // K
    int n_summ = 2;
    int t_train = 3;
    int t_target = 12;

    void validate() const;
};

// Sum over i = 1..n of (c + i) = n*c + n(n+1)/2.
double ic_standard(double c, double n);

// Same sum in exact integer arithmetic; throws on uint64 overflow.
std::uint64_t ic_standard_exact(std::uint64_t c, std::uint64_t n);

// T * H_R * (C + H_S + H_R).
double ic_rc(double c, double h_r, double h_s, int t);

// (C + T*H_R) / (C + H_S + H_R): how many times cheaper RC is than plain
// decoding over the same effective horizon.
double speedup(double c, double h_r, double h_s, int t);

// KV-memory ratio at the same horizon; same expression as speedup.
double memory_ratio(double c, double h_r, double h_s, int t);

enum class NumeratorForm { sum, product };

// (T_train + K*N_summ) / (K * T_target^2), or with the numerator
// T_train*K*N_summ when `form` is product.
double train_compute_ratio(const CostQuery& q, NumeratorForm form = NumeratorForm::sum);

struct SweepRow {
    int turns;
    double effective_budget;
    double speedup;
    double memory_ratio;
    double ic_standard;
    double ic_rc;
};

std::vector<SweepRow> sweep(double c, double h_r, double h_s, int t_min, int t_max);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace rcache::cost
