#pragma once

#include <cstdint>
#include <vector>

#include "rdmpc/dynamics.hpp"

namespace chain {

using rdmpc::Vec;

// 1 - 2 - 3, two states, two input channels, full state output, one coupling value per edge.
std::vector<rdmpc::SubsystemModel> make_chain();

// Single-channel support enumeration: least-squares fit of each channel alone; returns the
// channel with the smallest feasible magnitude (or smallest residual), -1 if a = 0 fits.
int oracle_support(const rdmpc::SubsystemModel& m, const Vec& x, const Vec& u, const Vec& y1,
                   const Vec& z_n, double dt, double eps);

struct TrialResult {
    int node = 0;
    int truth = 0;
    int oracle = 0;
    int v1 = 0;
    int v2 = 0;
    double magnitude = 0.0;
    double v1_error = 0.0;
    double v2_error = 0.0;
};

// One randomized attack-identification trial: unattacked step, then a single-channel attack.
TrialResult run_trial(std::uint64_t seed, double tau_d = 0.01, double eps = 1e-3);

int argmax_abs(const Vec& v);

}  // namespace chain
