#pragma once

#include <functional>
#include <map>
#include <vector>

#include "rdmpc/types.hpp"

namespace rdmpc {

// x' = (v - x) / T for a single state driven by a single input channel.
struct FirstOrderLag {
    int state = 0;
    int input = 0;
    double time_constant = 1.0;
};

using RhsFn = std::function<Vec(const Vec& x, const Vec& v, const Vec& z_n, const Vec& w)>;
using StateMap = std::function<Vec(const Vec& x)>;

struct SubsystemModel {
    int id = 0;
    int n_x = 0;
    int n_u = 0;
    int n_y = 0;
    int n_z = 0;
    int n_w = 0;
    int n_g = 0;

    std::vector<int> neighbors;
    // receiver id of every component of z, and number of components received from each neighbor
    std::vector<int> coupling_targets;
    std::vector<int> incoming;

    RhsFn rhs;
    StateMap coupling_fn;
    StateMap output_fn;
    RhsFn constraint_fn;

    Vec x_lower, x_upper, u_lower, u_upper;

    std::vector<FirstOrderLag> lags;
    int substeps = 4;

    int n_a() const { return n_u; }
    int n_zn() const;
    void validate() const;
};

Vec integrate_step(const SubsystemModel& model, const Vec& x, const Vec& v, const Vec& z_n,
                   const Vec& w, double dt, int substeps = 0);

Vec chained_output(const SubsystemModel& model, const Vec& x, const Vec& v, const Vec& z_n,
                   const Vec& w, double dt);

Vec chained_coupling(const SubsystemModel& model, const Vec& x, const Vec& v, const Vec& z_n,
                     const Vec& w, double dt);

// Components of a coupling vector z that are sent to `receiver`.
Vec outgoing_coupling(const SubsystemModel& model, const Vec& z, int receiver);

// Stacks per-neighbor incoming couplings in neighbor order.
Vec gather_incoming(const SubsystemModel& model, const std::map<int, Vec>& from_neighbors);

// Offset of neighbor `id` inside the stacked z_N vector.
int incoming_offset(const SubsystemModel& model, int neighbor);

struct CouplingParameterization {
    int n_hat = 1;
    std::function<double(int j, double t, double t_k, double t_k1)> basis;

    static CouplingParameterization piecewise_constant();
    double evaluate(const Mat& coeffs, int row, double t, double t_k, double t_k1) const;
};

struct CouplingBlock {
    int subsystem = 0;
    int stage = 0;
    Mat nominal;
    Mat measured;

    Mat deviation() const { return measured - nominal; }
};

// Nominal coupling coefficients for the next interval (a = 0, w = 0, neighbors on nominal).
Mat nominal_coupling_step(const SubsystemModel& model, const Vec& x, const Vec& u,
                          const std::map<int, Mat>& neighbor_nominals, double dt);

void check_topology(const std::vector<SubsystemModel>& models);

}  // namespace rdmpc
