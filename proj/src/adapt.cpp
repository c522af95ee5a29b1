#include "rdmpc/adapt.hpp"

#include <cmath>
#include <stdexcept>

namespace rdmpc {

AttackStats::AttackStats(int n_channels)
    : channels(n_channels), mean(Vec::Zero(n_channels)), m2(Vec::Zero(n_channels)) {}

Vec AttackStats::sigma() const {
    if (count < 2) return Vec::Zero(channels);
    return (m2 / static_cast<double>(count - 1)).cwiseMax(0.0).cwiseSqrt();
}

void update_stats_in_place(AttackStats& stats, const Vec& a_star) {
    if (a_star.size() != stats.channels)
        throw std::invalid_argument("update_stats: channel count mismatch");
    stats.history.push_back(a_star);
    ++stats.count;
    const Vec delta = a_star - stats.mean;
    stats.mean += delta / static_cast<double>(stats.count);
    stats.m2 += delta.cwiseProduct(a_star - stats.mean);
}

AttackStats update_stats(AttackStats stats, const Vec& a_star) {
    update_stats_in_place(stats, a_star);
    return stats;
}

std::vector<Vec> attack_scenarios(const Vec& mu, const Vec& sigma, double dedup_tol) {
    std::vector<Vec> out{Vec::Zero(mu.size())};
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        std::vector<double> values{mu[i]};
        for (double v : {mu[i] - sigma[i], mu[i] + sigma[i]}) {
            bool dup = false;
            for (double u : values) dup = dup || std::abs(u - v) <= dedup_tol;
            if (!dup) values.push_back(v);
        }
        std::vector<Vec> next;
        for (const Vec& base : out)
            for (double v : values) {
                Vec s = base;
                s[i] = v;
                next.push_back(s);
            }
        out = std::move(next);
    }
    return out;
}

std::vector<Vec> attack_scenarios(const AttackStats& stats, double dedup_tol) {
    return attack_scenarios(stats.mean, stats.sigma(), dedup_tol);
}

}  // namespace rdmpc
