#pragma once

#include <vector>

#include "rdmpc/types.hpp"

namespace rdmpc {

// Running per-channel statistics of identified attack suspicions.
struct AttackStats {
    int channels = 0;
    long count = 0;
    Vec mean;
    Vec m2;
    std::vector<Vec> history;

    explicit AttackStats(int n_channels = 0);
    Vec sigma() const;  // n-1 denominator, 0 while count < 2
};

AttackStats update_stats(AttackStats stats, const Vec& a_star);
void update_stats_in_place(AttackStats& stats, const Vec& a_star);

// Cartesian product over channels of {mu - sigma, mu, mu + sigma}, duplicates removed.
std::vector<Vec> attack_scenarios(const AttackStats& stats, double dedup_tol = 1e-9);
std::vector<Vec> attack_scenarios(const Vec& mu, const Vec& sigma, double dedup_tol = 1e-9);

}  // namespace rdmpc
