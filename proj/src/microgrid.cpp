#include "rdmpc/microgrid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rdmpc/errors.hpp"

namespace rdmpc {

PriceSchedule PriceSchedule::paper() {
    PriceSchedule s;
    s.import_bands = {{15, 20, 275}, {6, 9, 200}, {20, 22, 200}, {9, 15, 150},
                      {22, 24, 150}, {0, 24, 100}};
    s.export_bands = {{15, 20, 15}, {6, 9, 10}, {20, 22, 10}, {0, 24, 0}};
    return s;
}

namespace {

double band_value(const std::vector<PriceBand>& bands, double tod) {
    for (const auto& b : bands)
        if (tod >= b.from && tod < b.to) return b.value;
    return 0.0;
}

double time_of_day(double t) {
    double tod = std::fmod(t, 24.0);
    if (tod < 0) tod += 24.0;
    return tod;
}

}  // namespace

std::pair<double, double> PriceSchedule::at(double t_hours) const {
    const double tod = time_of_day(t_hours);
    return {band_value(import_bands, tod), band_value(export_bands, tod)};
}

bool PriceSchedule::import_dominates() const {
    // both schedules are piecewise constant, so checking every band edge and midpoint suffices
    std::vector<double> probes;
    for (const auto* bands : {&import_bands, &export_bands})
        for (const auto& b : *bands) {
            probes.push_back(b.from);
            probes.push_back(0.5 * (b.from + b.to));
        }
    for (double t = 0.0; t < 24.0; t += 0.125) probes.push_back(t);
    for (double t : probes) {
        if (t < 0 || t >= 24) continue;
        auto [im, ex] = at(t);
        if (im < ex) return false;
    }
    return true;
}

void MicrogridParams::validate() const {
    if (!(t_g > 0 && t_m > 0 && t_tr > 0)) throw ConfigError("delay time constants must be > 0");
    if (!(q_st_kah > 0)) throw ConfigError("battery capacity must be > 0");
    if (!(r_st_mohm > 0) || !(resistance_scale > 0))
        throw ConfigError("internal resistance must be > 0");
    if (p_load > 0) throw ConfigError("load must be <= 0");
    const auto& c = cost;
    if (c.c_g < 0 || c.c_tr < 0 || c.c_st < 0 || c.c_dis < 0 || c.c_flow_im < 0 || c.c_flow_ex < 0)
        throw ConfigError("cost parameters must be nonnegative");
    if (c.c_flow_im < c.c_flow_ex) throw ConfigError("flow import price below export price");
}

double ocv(double s, const OcvParams& p) {
    if (!(s >= soc_eps)) throw SocOutOfRange("state of charge " + std::to_string(s) + " below " +
                                             std::to_string(soc_eps));
    const double l = -std::log(s);
    // odd extension of (-ln s)^mu above s = 1
    const double term = std::copysign(std::pow(std::abs(l), p.mu), l);
    return p.alpha + p.beta * term + p.gamma * s + p.delta * std::exp(p.nu * (s - 1.0));
}

double battery_current(double u_ocv, double p_st, double r) {
    const double disc = u_ocv * u_ocv + 4.0 * r * p_st;
    if (disc < 0)
        throw InfeasibleChargePower("charging power " + std::to_string(p_st) +
                                    " kW exceeds the battery limit");
    return 2.0 * p_st / (u_ocv + std::sqrt(disc));
}

double battery_current(double s, double p_st, const MicrogridParams& p) {
    return battery_current(ocv(s, p.ocv), p_st, p.r_st());
}

double soc_rate(double s, double p_st, const MicrogridParams& p) {
    return -battery_current(s, p_st, p) / p.q_st_kah;
}

double storage_power(const Vec& x, const Vec& z_n, const MicrogridParams& p) {
    double ps = -x[mg::gen] - x[mg::grid] - p.p_load;
    for (Eigen::Index j = 0; j < z_n.size(); ++j) ps -= z_n[j] - x[mg::tr0 + j];
    return ps;
}

Vec microgrid_rhs(const Vec& x, const Vec& u, const Vec& a, const Vec& z_n,
                  const MicrogridParams& p) {
    const Vec v = u + a;
    Vec d(x.size());
    d[mg::soc] = soc_rate(x[mg::soc], storage_power(x, z_n, p), p);
    d[mg::gen] = (v[mg::u_gen] - x[mg::gen]) / p.t_g;
    d[mg::grid] = (v[mg::u_main] - x[mg::grid]) / p.t_m;
    for (Eigen::Index j = 0; j < z_n.size(); ++j)
        d[mg::tr0 + j] = (v[mg::u_tr0 + j] - x[mg::tr0 + j]) / p.t_tr;
    return d;
}

Vec flow_in(const Vec& x, const Vec& z_n) {
    return z_n - x.segment(mg::tr0, z_n.size());
}

double stage_cost_q(double p_g, const Vec& p_tr, double p_st, const CostParams& c) {
    return c.c_g * p_g * p_g + c.c_tr * p_tr.squaredNorm() + c.c_st * p_st * p_st;
}

double trade_cost_l(const Vec& p_flow, double p_m, std::pair<double, double> prices,
                    const CostParams& c) {
    double cost = hinge(p_m, prices.first, prices.second);
    for (Eigen::Index j = 0; j < p_flow.size(); ++j)
        cost += hinge(p_flow[j], c.c_flow_im, c.c_flow_ex);
    return cost;
}

double terminal_cost_m(double s0, double s_t, const MicrogridParams& p) {
    return p.cost.c_dis * std::max(s0 - s_t, 0.0) * p.q_st_kah;
}

std::pair<double, double> price_at(double t_hours) {
    static const PriceSchedule schedule = PriceSchedule::paper();
    return schedule.at(t_hours);
}

double realized_stage_cost(const Vec& x_next, const Vec& z_n, double t_start,
                           const MicrogridParams& p, const PriceSchedule& prices) {
    const Vec p_tr = x_next.segment(mg::tr0, z_n.size());
    const double ps = storage_power(x_next, z_n, p);
    return stage_cost_q(x_next[mg::gen], p_tr, ps, p.cost) +
           trade_cost_l(flow_in(x_next, z_n), x_next[mg::grid], prices.at(t_start), p.cost);
}

Vec microgrid_output(const Vec& x) {
    Vec y = Vec::Zero(x.size());
    y.head(3) = x.head(3);
    return y;
}

SubsystemModel make_microgrid_model(int id, const std::vector<int>& neighbors,
                                    const MicrogridParams& p) {
    p.validate();
    const int nn = static_cast<int>(neighbors.size());
    SubsystemModel m;
    m.id = id;
    m.n_x = 3 + nn;
    m.n_u = 2 + nn;
    m.n_y = m.n_x;
    m.n_z = nn;
    m.neighbors = neighbors;
    m.coupling_targets = neighbors;
    m.incoming.assign(nn, 1);
    m.rhs = [p](const Vec& x, const Vec& v, const Vec& z_n, const Vec&) {
        return microgrid_rhs(x, v, Vec::Zero(v.size()), z_n, p);
    };
    m.coupling_fn = [nn](const Vec& x) -> Vec { return x.segment(mg::tr0, nn); };
    m.output_fn = [](const Vec& x) { return microgrid_output(x); };

    m.x_lower.resize(m.n_x);
    m.x_upper.resize(m.n_x);
    m.u_lower.resize(m.n_u);
    m.u_upper.resize(m.n_u);
    m.x_lower.head(3) << p.soc_min, p.p_g_min, p.p_m_min;
    m.x_upper.head(3) << p.soc_max, p.p_g_max, p.p_m_max;
    m.x_lower.tail(nn).setConstant(p.p_tr_min);
    m.x_upper.tail(nn).setConstant(p.p_tr_max);
    m.u_lower.head(2) << p.p_g_min, p.p_m_min;
    m.u_upper.head(2) << p.p_g_max, p.p_m_max;
    m.u_lower.tail(nn).setConstant(p.p_tr_min);
    m.u_upper.tail(nn).setConstant(p.p_tr_max);

    m.lags.push_back({mg::gen, mg::u_gen, p.t_g});
    m.lags.push_back({mg::grid, mg::u_main, p.t_m});
    for (int j = 0; j < nn; ++j) m.lags.push_back({mg::tr0 + j, mg::u_tr0 + j, p.t_tr});
    m.substeps = 4;
    return m;
}

OcpCost microgrid_ocp_cost(const MicrogridParams& p, const PriceSchedule& prices, const Vec& x_k,
                           double t_k, double dt, int n_p) {
    const int nx = static_cast<int>(x_k.size());
    const int nn = nx - 3;
    const int nu = 2 + nn;
    auto functional = [&]() {
        LinearFunctional f;
        f.cx = Vec::Zero(nx);
        f.cu = Vec::Zero(nu);
        f.cz = Vec::Zero(nn);
        return f;
    };
    OcpCost cost;

    LinearFunctional gen = functional();
    gen.cx[mg::gen] = 1.0;
    cost.quadratic.push_back({p.cost.c_g, gen});
    for (int j = 0; j < nn; ++j) {
        LinearFunctional tr = functional();
        tr.cx[mg::tr0 + j] = 1.0;
        cost.quadratic.push_back({p.cost.c_tr, tr});
    }
    LinearFunctional st = functional();
    st.cx[mg::gen] = -1.0;
    st.cx[mg::grid] = -1.0;
    for (int j = 0; j < nn; ++j) {
        st.cx[mg::tr0 + j] = 1.0;
        st.cz[j] = -1.0;
    }
    st.d = -p.p_load;
    cost.quadratic.push_back({p.cost.c_st, st});

    HingeTerm grid_trade;
    grid_trade.f = functional();
    grid_trade.f.cx[mg::grid] = 1.0;
    for (int l = 0; l < n_p; ++l) {
        auto [im, ex] = prices.at(t_k + l * dt);
        grid_trade.price_pos.push_back(im);
        grid_trade.price_neg.push_back(ex);
    }
    cost.hinge.push_back(grid_trade);
    for (int j = 0; j < nn; ++j) {
        HingeTerm flow;
        flow.f = functional();
        flow.f.cz[j] = 1.0;
        flow.f.cx[mg::tr0 + j] = -1.0;
        flow.price_pos.assign(n_p, p.cost.c_flow_im);
        flow.price_neg.assign(n_p, p.cost.c_flow_ex);
        cost.hinge.push_back(flow);
    }

    TerminalHinge degradation;
    degradation.f.cx = Vec::Zero(nx);
    degradation.f.cx[mg::soc] = -1.0;
    degradation.f.d = x_k[mg::soc];
    degradation.price_pos = p.cost.c_dis * p.q_st_kah;
    degradation.price_neg = 0.0;
    cost.terminal.push_back(degradation);
    return cost;
}

}  // namespace rdmpc
