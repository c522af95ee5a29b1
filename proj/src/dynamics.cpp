#include "rdmpc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "rdmpc/errors.hpp"

namespace rdmpc {

int SubsystemModel::n_zn() const {
    return std::accumulate(incoming.begin(), incoming.end(), 0);
}

void SubsystemModel::validate() const {
    auto fail = [this](const std::string& what) {
        throw AssemblyError("subsystem " + std::to_string(id) + ": " + what);
    };
    if (n_x <= 0 || n_u < 0 || n_y < 0 || n_z < 0) fail("invalid dimensions");
    if (!rhs || !coupling_fn || !output_fn) fail("missing callback");
    if (static_cast<int>(coupling_targets.size()) != n_z) fail("coupling_targets size != n_z");
    if (incoming.size() != neighbors.size()) fail("incoming size != neighbor count");
    if (x_lower.size() != n_x || x_upper.size() != n_x) fail("state bounds size");
    if (u_lower.size() != n_u || u_upper.size() != n_u) fail("input bounds size");
    if ((x_lower.array() > x_upper.array()).any() || (u_lower.array() > u_upper.array()).any())
        fail("lower bound above upper bound");
    for (int t : coupling_targets)
        if (std::find(neighbors.begin(), neighbors.end(), t) == neighbors.end())
            fail("coupling target " + std::to_string(t) + " is not a neighbor");
    for (const auto& lag : lags) {
        if (lag.state < 0 || lag.state >= n_x || lag.input < 0 || lag.input >= n_u)
            fail("lag index out of range");
        if (!(lag.time_constant > 0)) fail("lag time constant must be positive");
    }
    if (substeps < 1) fail("substeps < 1");
}

namespace {

void check_dims(const SubsystemModel& m, const Vec& x, const Vec& v, const Vec& z_n, const Vec& w) {
    if (x.size() != m.n_x || v.size() != m.n_u || z_n.size() != m.n_zn() || w.size() != m.n_w)
        throw AssemblyError("integrate_step: dimension mismatch for subsystem " +
                            std::to_string(m.id));
}

void check_finite(const SubsystemModel& m, const Vec& x) {
    if (!x.allFinite())
        throw IntegrationDiverged("non-finite state in subsystem " + std::to_string(m.id));
}

}  // namespace

Vec integrate_step(const SubsystemModel& model, const Vec& x, const Vec& v, const Vec& z_n,
                   const Vec& w, double dt, int substeps) {
    if (!(dt > 0)) throw std::invalid_argument("integrate_step: dt must be positive");
    check_dims(model, x, v, z_n, w);
    const int n = substeps > 0 ? substeps : model.substeps;
    const double h = dt / n;

    if (model.lags.empty()) {
        Vec y = x;
        for (int i = 0; i < n; ++i) {
            Vec k1 = model.rhs(y, v, z_n, w);
            Vec k2 = model.rhs(y + 0.5 * h * k1, v, z_n, w);
            Vec k3 = model.rhs(y + 0.5 * h * k2, v, z_n, w);
            Vec k4 = model.rhs(y + h * k3, v, z_n, w);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            check_finite(model, y);
        }
        return y;
    }

    // lag states follow their exact solution, the rest is integrated with RK4
    auto lag_value = [&](const FirstOrderLag& lag, double t) {
        const double target = v[lag.input];
        return target + (x[lag.state] - target) * std::exp(-t / lag.time_constant);
    };
    auto eval = [&](Vec y, double t) {
        for (const auto& lag : model.lags) y[lag.state] = lag_value(lag, t);
        Vec d = model.rhs(y, v, z_n, w);
        for (const auto& lag : model.lags) d[lag.state] = 0.0;
        return d;
    };

    Vec y = x;
    double t = 0.0;
    for (int i = 0; i < n; ++i) {
        Vec k1 = eval(y, t);
        Vec k2 = eval(y + 0.5 * h * k1, t + 0.5 * h);
        Vec k3 = eval(y + 0.5 * h * k2, t + 0.5 * h);
        Vec k4 = eval(y + h * k3, t + h);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        check_finite(model, y);
    }
    for (const auto& lag : model.lags) y[lag.state] = lag_value(lag, dt);
    check_finite(model, y);
    return y;
}

Vec chained_output(const SubsystemModel& model, const Vec& x, const Vec& v, const Vec& z_n,
                   const Vec& w, double dt) {
    return model.output_fn(integrate_step(model, x, v, z_n, w, dt));
}

Vec chained_coupling(const SubsystemModel& model, const Vec& x, const Vec& v, const Vec& z_n,
                     const Vec& w, double dt) {
    return model.coupling_fn(integrate_step(model, x, v, z_n, w, dt));
}

Vec outgoing_coupling(const SubsystemModel& model, const Vec& z, int receiver) {
    std::vector<double> out;
    for (int i = 0; i < model.n_z; ++i)
        if (model.coupling_targets[i] == receiver) out.push_back(z[i]);
    return Eigen::Map<Vec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

int incoming_offset(const SubsystemModel& model, int neighbor) {
    int offset = 0;
    for (std::size_t i = 0; i < model.neighbors.size(); ++i) {
        if (model.neighbors[i] == neighbor) return offset;
        offset += model.incoming[i];
    }
    throw TopologyViolation("subsystem " + std::to_string(neighbor) + " is not a neighbor of " +
                            std::to_string(model.id));
}

Vec gather_incoming(const SubsystemModel& model, const std::map<int, Vec>& from_neighbors) {
    Vec z_n(model.n_zn());
    int offset = 0;
    for (std::size_t i = 0; i < model.neighbors.size(); ++i) {
        const int l = model.neighbors[i];
        auto it = from_neighbors.find(l);
        if (it == from_neighbors.end())
            throw MissingNeighborData("subsystem " + std::to_string(model.id) +
                                      " has no coupling data from " + std::to_string(l));
        if (it->second.size() != model.incoming[i])
            throw AssemblyError("coupling data from " + std::to_string(l) + " has wrong size");
        z_n.segment(offset, model.incoming[i]) = it->second;
        offset += model.incoming[i];
    }
    return z_n;
}

CouplingParameterization CouplingParameterization::piecewise_constant() {
    CouplingParameterization p;
    p.n_hat = 1;
    p.basis = [](int, double, double, double) { return 1.0; };
    return p;
}

double CouplingParameterization::evaluate(const Mat& coeffs, int row, double t, double t_k,
                                          double t_k1) const {
    double value = 0.0;
    for (int j = 0; j < n_hat; ++j) value += coeffs(row, j) * basis(j + 1, t, t_k, t_k1);
    return value;
}

Mat nominal_coupling_step(const SubsystemModel& model, const Vec& x, const Vec& u,
                          const std::map<int, Mat>& neighbor_nominals, double dt) {
    std::map<int, Vec> zs;
    for (const auto& [id, coeffs] : neighbor_nominals) zs[id] = coeffs.col(0);
    const Vec z_n = gather_incoming(model, zs);
    const Vec z = chained_coupling(model, x, u, z_n, Vec::Zero(model.n_w), dt);
    return z;
}

void check_topology(const std::vector<SubsystemModel>& models) {
    std::map<int, const SubsystemModel*> by_id;
    for (const auto& m : models) {
        m.validate();
        if (!by_id.emplace(m.id, &m).second)
            throw TopologyViolation("duplicate subsystem id " + std::to_string(m.id));
    }
    for (const auto& m : models) {
        std::set<int> seen;
        for (std::size_t i = 0; i < m.neighbors.size(); ++i) {
            const int l = m.neighbors[i];
            if (l == m.id || !seen.insert(l).second)
                throw TopologyViolation("invalid neighbor list of " + std::to_string(m.id));
            auto it = by_id.find(l);
            if (it == by_id.end())
                throw TopologyViolation("unknown neighbor " + std::to_string(l));
            const auto& other = *it->second;
            if (std::find(other.neighbors.begin(), other.neighbors.end(), m.id) ==
                other.neighbors.end())
                throw TopologyViolation("neighbor relation " + std::to_string(m.id) + "-" +
                                        std::to_string(l) + " is not symmetric");
            const auto sent = std::count(other.coupling_targets.begin(),
                                         other.coupling_targets.end(), m.id);
            if (sent != m.incoming[i])
                throw TopologyViolation("coupling size mismatch between " +
                                        std::to_string(l) + " and " + std::to_string(m.id));
        }
    }
}

}  // namespace rdmpc
