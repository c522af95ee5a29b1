#pragma once

#include <utility>
#include <vector>

#include "rdmpc/cost.hpp"
#include "rdmpc/dynamics.hpp"
#include "rdmpc/types.hpp"

namespace rdmpc {

// Units: kW, V, kA, kAh, hours. State layout (s, p_g, p_m, p_tr...), input (u_g, u_m, u_tr...).
namespace mg {
constexpr int soc = 0;
constexpr int gen = 1;
constexpr int grid = 2;
constexpr int tr0 = 3;
constexpr int u_gen = 0;
constexpr int u_main = 1;
constexpr int u_tr0 = 2;
}  // namespace mg

constexpr double soc_eps = 1e-3;

struct OcvParams {
    double alpha = 2.23;
    double beta = -0.001;
    double gamma = -0.35;
    double delta = 0.6851;
    double mu = 3.0;
    double nu = 1.6;
};

struct CostParams {
    double c_g = 0.2;
    double c_tr = 4.0;
    double c_st = 1.0;
    double c_dis = 2000.0;
    double c_flow_im = 4.0;
    double c_flow_ex = 0.04;
};

struct PriceBand {
    double from = 0.0;
    double to = 24.0;
    double value = 0.0;
};

// Piecewise-constant time-of-day prices; first matching band wins, no match means 0.
struct PriceSchedule {
    std::vector<PriceBand> import_bands;
    std::vector<PriceBand> export_bands;

    static PriceSchedule paper();
    std::pair<double, double> at(double t_hours) const;
    bool import_dominates() const;
};

struct MicrogridParams {
    double t_g = 0.1;
    double t_m = 0.001;
    double t_tr = 0.001;
    double q_st_kah = 100.0;
    double r_st_mohm = 1.5;
    // ohms per milliohm: the power balance is evaluated with R in ohms against kW, V and kA
    double resistance_scale = 1e-3;
    OcvParams ocv;
    double p_load = -2.0;
    CostParams cost;

    double soc_min = 0.0;
    double soc_max = 1.0;
    double p_g_min = 0.0, p_g_max = 1000.0;
    double p_m_min = -1000.0, p_m_max = 2000.0;
    double p_tr_min = -100.0, p_tr_max = 100.0;

    double r_st() const { return r_st_mohm * resistance_scale; }
    void validate() const;
};

double ocv(double s, const OcvParams& p);

// Root of p = U I + R I^2 with I(0) = 0.
double battery_current(double u_ocv, double p_st, double r);
double battery_current(double s, double p_st, const MicrogridParams& p);
double soc_rate(double s, double p_st, const MicrogridParams& p);

// p_st = -p_g - p_m - p_l - sum_L (p_tr_LI - p_tr_IL); z_n holds p_tr_LI in neighbor order.
double storage_power(const Vec& x, const Vec& z_n, const MicrogridParams& p);

Vec microgrid_rhs(const Vec& x, const Vec& u, const Vec& a, const Vec& z_n,
                  const MicrogridParams& p);

// Net inflow from each neighbor, p_tr_LI - p_tr_IL.
Vec flow_in(const Vec& x, const Vec& z_n);

double stage_cost_q(double p_g, const Vec& p_tr, double p_st, const CostParams& c);
double trade_cost_l(const Vec& p_flow, double p_m, std::pair<double, double> prices,
                    const CostParams& c);
double terminal_cost_m(double s0, double s_t, const MicrogridParams& p);
std::pair<double, double> price_at(double t_hours);

// Stage cost of an interval evaluated at its end state and interval coupling value.
double realized_stage_cost(const Vec& x_next, const Vec& z_n, double t_start,
                           const MicrogridParams& p, const PriceSchedule& prices);

SubsystemModel make_microgrid_model(int id, const std::vector<int>& neighbors,
                                    const MicrogridParams& p);

// Output mask diag(1, 1, 1, 0, ...): SoC, generation and main-grid power are measured.
Vec microgrid_output(const Vec& x);

// Costs of one prediction window starting at t_k with state x_k.
OcpCost microgrid_ocp_cost(const MicrogridParams& p, const PriceSchedule& prices, const Vec& x_k,
                           double t_k, double dt, int n_p);

}  // namespace rdmpc
