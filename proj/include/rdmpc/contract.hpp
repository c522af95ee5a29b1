#pragma once

#include <vector>

#include "rdmpc/dynamics.hpp"
#include "rdmpc/types.hpp"

namespace rdmpc {

// Interval corridors [lo, hi] on coupling components, one entry per interval starting at
// first_interval.
struct Contract {
    int subsystem = 0;
    int first_interval = 0;
    double dt = 0.25;
    std::vector<Vec> lo;
    std::vector<Vec> hi;

    int stages() const { return static_cast<int>(lo.size()); }
    bool covers(int interval) const;
    const Vec& lo_at(int interval) const;
    const Vec& hi_at(int interval) const;
    double time_at(int interval) const { return interval * dt; }
    bool valid() const;

    // Components addressed to `receiver`.
    Contract for_receiver(const SubsystemModel& model, int receiver) const;

    static Contract degenerate(int subsystem, const Vec& z, int first_interval, int stages,
                               double dt);
};

}  // namespace rdmpc
