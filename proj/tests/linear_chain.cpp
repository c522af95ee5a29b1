#include "linear_chain.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "rdmpc/adi.hpp"
#include "rdmpc/exchange.hpp"
#include "rdmpc/solver.hpp"

namespace chain {

using namespace rdmpc;

namespace {

constexpr double dt = 0.25;

SubsystemModel node(int id, const std::vector<int>& neighbors) {
    SubsystemModel m;
    m.id = id;
    m.n_x = 2;
    m.n_u = 2;
    m.n_y = 2;
    m.n_z = static_cast<int>(neighbors.size());
    m.neighbors = neighbors;
    m.coupling_targets = neighbors;
    m.incoming.assign(neighbors.size(), 1);
    const double s = 1.0 + 0.1 * id;
    Mat a(2, 2), b(2, 2);
    a << -1.0 * s, 0.2, 0.1, -0.5 * s;
    b << 1.0, 0.3, 0.2, 0.8 * s;
    m.rhs = [a, b](const Vec& x, const Vec& v, const Vec& z, const Vec&) {
        Vec d = a * x + b * v;
        for (int i = 0; i < z.size(); ++i) {
            d[0] += 0.4 * z[i];
            d[1] += 0.1 * z[i];
        }
        return d;
    };
    const int nz = m.n_z;
    m.coupling_fn = [nz, id](const Vec& x) {
        Vec z(nz);
        for (int i = 0; i < nz; ++i) z[i] = x[0] - 0.2 * (i + 1) * x[1] + 0.05 * id;
        return z;
    };
    m.output_fn = [](const Vec& x) { return x; };
    m.x_lower = Vec::Constant(2, -1e6);
    m.x_upper = Vec::Constant(2, 1e6);
    m.u_lower = Vec::Constant(2, -1e6);
    m.u_upper = Vec::Constant(2, 1e6);
    return m;
}

}  // namespace

std::vector<SubsystemModel> make_chain() { return {node(1, {2}), node(2, {1, 3}), node(3, {2})}; }

int argmax_abs(const Vec& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    return best;
}

int oracle_support(const SubsystemModel& m, const Vec& x, const Vec& u, const Vec& y1, const Vec& z_n,
                   double dt_, double eps) {
    const Vec w = Vec::Zero(m.n_w);
    auto residual = [&](const Vec& a) { return Vec(y1 - chained_output(m, x, u + a, z_n, w, dt_)); };
    if (residual(Vec::Zero(m.n_u)).norm() <= eps) return -1;
    int best = -1;
    double best_mag = std::numeric_limits<double>::infinity();
    double best_res = std::numeric_limits<double>::infinity();
    int best_res_channel = 0;
    for (int j = 0; j < m.n_u; ++j) {
        double aj = 0.0;
        for (int it = 0; it < 5; ++it) {
            Vec a = Vec::Zero(m.n_u);
            a[j] = aj;
            const Vec r = residual(a);
            const double h = 1e-6 * std::max(1.0, std::abs(aj));
            Vec ap = a, am = a;
            ap[j] += h;
            am[j] -= h;
            const Vec col = (residual(am) - residual(ap)) / (2 * h);  // d eta / d a_j
            aj += col.dot(r) / col.squaredNorm();
        }
        Vec a = Vec::Zero(m.n_u);
        a[j] = aj;
        const double res = residual(a).norm();
        if (res < best_res) {
            best_res = res;
            best_res_channel = j;
        }
        if (res <= eps && std::abs(aj) < best_mag) {
            best_mag = std::abs(aj);
            best = j;
        }
    }
    return best >= 0 ? best : best_res_channel;
}

TrialResult run_trial(std::uint64_t seed, double tau_d, double eps) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> mag(0.1, 2.0);
    const auto models = make_chain();
    const int n = static_cast<int>(models.size());
    auto rnd = [&](int size) {
        Vec v(size);
        for (int i = 0; i < size; ++i) v[i] = unit(gen);
        return v;
    };

    TrialResult res;
    res.node = static_cast<int>(gen() % n);
    res.truth = static_cast<int>(gen() % 2);
    res.magnitude = mag(gen) * (gen() % 2 ? 1.0 : -1.0);

    std::vector<Vec> x0(n), u0(n), u1(n);
    for (int i = 0; i < n; ++i) {
        x0[i] = rnd(2);
        u0[i] = rnd(2);
        u1[i] = rnd(2);
    }
    auto incoming = [&](int i, const std::vector<Vec>& z_full) {
        std::map<int, Vec> from;
        for (int l : models[i].neighbors) from[l] = outgoing_coupling(models[l - 1], z_full[l - 1], models[i].id);
        return gather_incoming(models[i], from);
    };
    const Vec w0 = Vec::Zero(0);

    // step k-1, unattacked; nominals equal measurements
    std::vector<Vec> z0(n), x1(n), nom1(n), z1(n), x2(n), a(n), nom2(n), nom_in0(n);
    for (int i = 0; i < n; ++i) z0[i] = models[i].coupling_fn(x0[i]);
    for (int i = 0; i < n; ++i) {
        x1[i] = integrate_step(models[i], x0[i], u0[i], incoming(i, z0), w0, dt);
        nom_in0[i] = incoming(i, z0);
        std::map<int, Mat> nn;
        for (int l : models[i].neighbors) nn[l] = outgoing_coupling(models[l - 1], z0[l - 1], models[i].id);
        nom1[i] = nominal_coupling_step(models[i], x0[i], u0[i], nn, dt).col(0);
    }
    // step k, attack on one channel of one node
    for (int i = 0; i < n; ++i) {
        z1[i] = models[i].coupling_fn(x1[i]);
        a[i] = Vec::Zero(2);
    }
    a[res.node][res.truth] = res.magnitude;
    for (int i = 0; i < n; ++i) {
        x2[i] = integrate_step(models[i], x1[i], u1[i] + a[i], incoming(i, z1), w0, dt);
        std::map<int, Mat> nn;
        for (int l : models[i].neighbors) nn[l] = outgoing_coupling(models[l - 1], nom1[l - 1], models[i].id);
        nom2[i] = nominal_coupling_step(models[i], x1[i], u1[i], nn, dt).col(0);
    }

    std::vector<AdiInput> snap(n);
    for (int i = 0; i < n; ++i) {
        AdiInput& in = snap[i];
        in.model = &models[i];
        in.x_k = x1[i];
        in.u_k = u1[i];
        in.y_k1 = models[i].output_fn(x2[i]);
        in.nominal_k = nom1[i];
        in.measured_k = z1[i];
        in.deviation_k1 = models[i].coupling_fn(x2[i]) - nom2[i];
        in.has_prev = true;
        in.x_prev = x0[i];
        in.u_prev = u0[i];
        in.nominal_in_prev = nom_in0[i];
    }
    DetectionConfig cfg;
    cfg.tau_d = tau_d;
    cfg.eps = eps;
    std::map<int, std::vector<int>> topo;
    for (const auto& m : models) topo[m.id] = m.neighbors;
    Bus bus(topo);
    const AdiOutput o1 = run_distributed_adi(snap, 1, cfg, bus, 0, dt, true);
    const AdiOutput o2 = run_distributed_adi(snap, 2, cfg, bus, 1, dt, true);
    const int id = models[res.node].id;
    const Vec s1 = o1.suspicions.at(id).a_star;
    const Vec s2 = o2.suspicions.at(id).a_star;
    res.v1 = argmax_abs(s1);
    res.v2 = argmax_abs(s2);
    res.v1_error = (s1 - a[res.node]).cwiseAbs().maxCoeff();
    res.v2_error = (s2 - a[res.node]).cwiseAbs().maxCoeff();
    res.oracle = oracle_support(models[res.node], x1[res.node], u1[res.node], snap[res.node].y_k1,
                                incoming(res.node, z1), dt, eps);
    return res;
}

}  // namespace chain
