#include "rdmpc/adi.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "rdmpc/errors.hpp"

namespace rdmpc {

bool detect(const Vec& deviation, const DetectionConfig& cfg) {
    if (deviation.size() == 0) return false;
    return deviation.cwiseAbs().maxCoeff() > cfg.tau_d;
}

namespace {

// Residual constraint (r'r - eps^2) / (2 eps) <= 0 over a split of `n_signed` variables.
NlpProblem residual_problem(const std::function<Vec(const Vec&)>& residual, int n_signed,
                            double eps) {
    const double scale = 2.0 * std::max(eps, 1e-6);
    const L1Split split(n_signed);
    NlpProblem p;
    p.n_vars = split.n_split();
    p.objective = [](const Vec& v) { return v.sum(); };
    p.objective_grad = [](const Vec& v) { return Vec::Ones(v.size()); };
    p.n_ineq = 1;
    p.ineq_constraints = [residual, split, eps, scale](const Vec& v) {
        const Vec r = residual(split.signed_values(v));
        Vec c(1);
        c[0] = (r.squaredNorm() - eps * eps) / scale;
        return c;
    };
    p.ineq_jacobian = [residual, split, scale](const Vec& v) {
        const Vec a = split.signed_values(v);
        const Vec r = residual(a);
        const Mat jr = fd_jacobian(residual, a);
        const Mat row = (2.0 / scale) * (r.transpose() * jr) * split.jacobian();
        return SpMat(row.sparseView(0.0, 0.0));
    };
    p.lower = Vec::Zero(p.n_vars);
    p.upper = Vec::Constant(p.n_vars, std::numeric_limits<double>::infinity());
    return p;
}

Suspicion run_identification(const std::function<Vec(const Vec&)>& residual, int n_signed,
                             const DetectionConfig& cfg, int subsystem) {
    NlpProblem p = residual_problem(residual, n_signed, cfg.eps);
    SolveReport rep = solve(p, Vec::Zero(p.n_vars), cfg.solver);
    if (rep.status == SolveStatus::Infeasible)
        throw IdentificationFailed("identification infeasible in subsystem " +
                                   std::to_string(subsystem));
    const L1Split split(n_signed);
    Suspicion s;
    s.a_star = split.signed_values(rep.solution);
    s.residual_norm = residual(s.a_star).norm();
    s.objective = rep.objective;
    s.status = rep.status;
    s.iterations = rep.iterations;
    return s;
}

}  // namespace

Suspicion identify_v1(const SubsystemModel& model, const Vec& x_k, const Vec& u_k, const Vec& y_k1,
                      const Vec& nominal_n, const Vec& deviation_n, double dt,
                      const DetectionConfig& cfg) {
    const Vec z_n = nominal_n + deviation_n;
    const Vec w = Vec::Zero(model.n_w);
    auto residual = [&](const Vec& a) {
        return Vec(y_k1 - chained_output(model, x_k, u_k + a, z_n, w, dt));
    };
    return run_identification(residual, model.n_u, cfg, model.id);
}

Mat local_sensitivity(const SubsystemModel& model, const Vec& x_k, const Vec& u_k, const Vec& a,
                      const Vec& nominal_n, double dt) {
    const Vec v = u_k + a;
    const Vec w = Vec::Zero(model.n_w);
    if (nominal_n.size() == 0) return Mat::Zero(model.n_y, 0);
    return fd_jacobian([&](const Vec& z) { return chained_output(model, x_k, v, z, w, dt); },
                       nominal_n);
}

NeighborSensitivity neighbor_sensitivities(const SubsystemModel& model_n, const Vec& x_n,
                                           const Vec& u_n, const Vec& nominal_nn, int receiver,
                                           double dt) {
    const Vec w = Vec::Zero(model_n.n_w);
    NeighborSensitivity s;
    s.s_a = fd_jacobian(
        [&](const Vec& a) {
            return outgoing_coupling(model_n,
                                     chained_coupling(model_n, x_n, u_n + a, nominal_nn, w, dt),
                                     receiver);
        },
        Vec::Zero(model_n.n_u));
    s.s_z = fd_jacobian(
        [&](const Vec& z) {
            return outgoing_coupling(model_n, chained_coupling(model_n, x_n, u_n, z, w, dt),
                                     receiver);
        },
        nominal_nn);
    return s;
}

SensitivityBundle assemble_bundle(const std::vector<NeighborSensitivity>& in_neighbor_order) {
    Eigen::Index rows = 0, ca = 0, cz = 0;
    for (const auto& s : in_neighbor_order) {
        rows += s.s_a.rows();
        ca += s.s_a.cols();
        cz += s.s_z.cols();
    }
    SensitivityBundle b;
    b.s_hat_a = Mat::Zero(rows, ca);
    b.s_hat_z = Mat::Zero(rows, cz);
    Eigen::Index r = 0, c1 = 0, c2 = 0;
    for (const auto& s : in_neighbor_order) {
        b.s_hat_a.block(r, c1, s.s_a.rows(), s.s_a.cols()) = s.s_a;
        b.s_hat_z.block(r, c2, s.s_z.rows(), s.s_z.cols()) = s.s_z;
        r += s.s_a.rows();
        c1 += s.s_a.cols();
        c2 += s.s_z.cols();
    }
    return b;
}

Vec residual_v2(const SubsystemModel& model, const Vec& x_k, const Vec& u_k, const Vec& y_k1,
                const Vec& nominal_n, const SensitivityBundle& bundle, const Vec& a_i,
                const Vec& a_n, const Vec& dz_nn, double dt, bool freeze) {
    const Vec w = Vec::Zero(model.n_w);
    const Mat s = local_sensitivity(model, x_k, u_k, freeze ? Vec::Zero(model.n_u) : a_i,
                                    nominal_n, dt);
    Vec dz = Vec::Zero(nominal_n.size());
    if (a_n.size()) dz += bundle.s_hat_a * a_n;
    if (dz_nn.size()) dz += bundle.s_hat_z * dz_nn;
    return y_k1 - chained_output(model, x_k, u_k + a_i, nominal_n, w, dt) - s * dz;
}

Suspicion identify_v2(const SubsystemModel& model, const Vec& x_k, const Vec& u_k, const Vec& y_k1,
                      const Vec& nominal_n, const SensitivityBundle& bundle, double dt,
                      const DetectionConfig& cfg) {
    const int nu = model.n_u;
    const int na = static_cast<int>(bundle.s_hat_a.cols());
    const int nz = static_cast<int>(bundle.s_hat_z.cols());
    if (bundle.s_hat_a.rows() != nominal_n.size() || bundle.s_hat_z.rows() != nominal_n.size())
        throw AssemblyError("sensitivity bundle does not match incoming couplings");
    const Vec w = Vec::Zero(model.n_w);

    // the local sensitivity depends only on a_I; keep the last evaluation
    struct Cache {
        Vec a;
        Mat s;
    };
    auto cache = std::make_shared<Cache>();
    auto sens = [&, cache](const Vec& a_i) -> const Mat& {
        const Vec key = cfg.freeze_sensitivity ? Vec::Zero(nu) : a_i;
        if (cache->a.size() != key.size() || cache->a != key) {
            cache->s = local_sensitivity(model, x_k, u_k, key, nominal_n, dt);
            cache->a = key;
        }
        return cache->s;
    };
    auto residual = [&](const Vec& v) {
        const Vec a_i = v.head(nu);
        Vec dz = bundle.s_hat_a * v.segment(nu, na) + bundle.s_hat_z * v.segment(nu + na, nz);
        return Vec(y_k1 - chained_output(model, x_k, u_k + a_i, nominal_n, w, dt) -
                   sens(a_i) * dz);
    };
    Suspicion s = run_identification(residual, nu + na + nz, cfg, model.id);
    const Vec all = s.a_star;
    s.a_star = all.head(nu);
    s.a_star_n = all.segment(nu, na);
    s.dz_star_nn = all.segment(nu + na, nz);
    return s;
}

AdiOutput run_distributed_adi(const std::vector<AdiInput>& snapshot, int version,
                              const DetectionConfig& cfg, Bus& bus, long round, double dt,
                              bool always_identify) {
    if (version != 1 && version != 2) throw std::invalid_argument("ADI version must be 1 or 2");
    std::map<int, const AdiInput*> by_id;
    for (const auto& in : snapshot) by_id[in.model->id] = &in;

    for (const auto& in : snapshot) {
        const SubsystemModel& m = *in.model;
        for (int l : m.neighbors) {
            Message nominal{m.id, l, round, NominalCoeffs{outgoing_coupling(m, in.nominal_k, l)}};
            bus.post(nominal);
            Message deviation{m.id, l, round,
                              DeviationMsg{outgoing_coupling(m, in.measured_k - in.nominal_k, l)}};
            bus.post(deviation);
            if (version == 2) {
                NeighborSensitivity s;
                if (in.has_prev) {
                    s = neighbor_sensitivities(m, in.x_prev, in.u_prev, in.nominal_in_prev, l, dt);
                } else {
                    const auto rows = outgoing_coupling(m, Vec::Zero(m.n_z), l).size();
                    s.s_a = Mat::Zero(rows, m.n_u);
                    s.s_z = Mat::Zero(rows, m.n_zn());
                }
                bus.post(Message{m.id, l, round, SensitivityMsg{s.s_a, s.s_z}});
            }
        }
    }

    AdiOutput out;
    for (const auto& in : snapshot) {
        const bool local = detect(in.deviation_k1, cfg);
        out.local_detection[in.model->id] = local;
        out.detected = out.detected || local;
    }

    std::vector<MessageKind> kinds{MessageKind::Nominal, MessageKind::Deviation};
    if (version == 2) kinds.push_back(MessageKind::Sensitivities);
    for (const auto& in : snapshot) {
        const SubsystemModel& m = *in.model;
        const auto msgs = bus.collect(m.id, round, kinds);
        std::map<int, Vec> nominal, deviation;
        std::map<int, NeighborSensitivity> sens;
        for (const auto& msg : msgs) {
            if (auto* p = std::get_if<NominalCoeffs>(&msg.payload)) nominal[msg.sender] = p->coeffs.col(0);
            if (auto* p = std::get_if<DeviationMsg>(&msg.payload)) deviation[msg.sender] = p->deviation;
            if (auto* p = std::get_if<SensitivityMsg>(&msg.payload))
                sens[msg.sender] = NeighborSensitivity{p->s_a, p->s_z};
        }
        Suspicion s;
        s.a_star = Vec::Zero(m.n_u);
        if (out.detected || always_identify) {
            const Vec nom_n = gather_incoming(m, nominal);
            const Vec dev_n = gather_incoming(m, deviation);
            try {
                if (version == 1) {
                    s = identify_v1(m, in.x_k, in.u_k, in.y_k1, nom_n, dev_n, dt, cfg);
                } else {
                    std::vector<NeighborSensitivity> ordered;
                    for (int l : m.neighbors) ordered.push_back(sens.at(l));
                    s = identify_v2(m, in.x_k, in.u_k, in.y_k1, nom_n, assemble_bundle(ordered),
                                    dt, cfg);
                }
            } catch (const Error& e) {
                out.errors[m.id] = e.what();
                s = Suspicion{};
                s.a_star = Vec::Zero(m.n_u);
                s.status = SolveStatus::Infeasible;
            }
        }
        out.suspicions[m.id] = s;
    }
    bus.close_round(round);
    return out;
}

}  // namespace rdmpc
