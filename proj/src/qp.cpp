#include "rdmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/SparseCholesky>

namespace rdmpc {

const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::MaxIter: return "max_iter";
        case QpStatus::NumericalFailure: return "numerical_failure";
    }
    return "unknown";
}

namespace {

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Largest step in (0, 1] keeping v + alpha * dv > 0 on the masked entries.
double max_step(const Vec& v, const Vec& dv, const std::vector<char>& mask) {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (mask[i] && dv[i] < 0) alpha = std::min(alpha, -v[i] / dv[i]);
    return alpha;
}

class KktSystem {
public:
    KktSystem(const SpMat& h_lower, const SpMat& a_hat, int n_primal) : np_(n_primal) {
        const int m = static_cast<int>(a_hat.rows());
        const int n = np_ + m;
        std::vector<Triplet> trips;
        trips.reserve(h_lower.nonZeros() + a_hat.nonZeros() + n);
        for (int i = 0; i < n; ++i) trips.emplace_back(i, i, 0.0);
        for (int k = 0; k < h_lower.outerSize(); ++k)
            for (SpMat::InnerIterator it(h_lower, k); it; ++it)
                if (it.row() >= it.col()) trips.emplace_back(it.row(), it.col(), it.value());
        for (int k = 0; k < a_hat.outerSize(); ++k)
            for (SpMat::InnerIterator it(a_hat, k); it; ++it)
                trips.emplace_back(np_ + it.row(), it.col(), it.value());
        k_.resize(n, n);
        k_.setFromTriplets(trips.begin(), trips.end());
        k_.makeCompressed();
        diag_pos_.resize(n);
        base_diag_.resize(n);
        for (int j = 0; j < n; ++j) {
            const int p = k_.outerIndexPtr()[j];
            diag_pos_[j] = p;
            base_diag_[j] = k_.valuePtr()[p];
        }
        reg_.setZero(n);
        solver_.analyzePattern(k_);
    }

    bool factorize(const Vec& sigma, double rho, double delta) {
        const int n = static_cast<int>(k_.rows());
        for (int j = 0; j < n; ++j) {
            const bool primal = j < np_;
            reg_[j] = primal ? rho : -delta;
            k_.valuePtr()[diag_pos_[j]] = base_diag_[j] + (primal ? sigma[j] : 0.0) + reg_[j];
        }
        solver_.factorize(k_);
        return solver_.info() == Eigen::Success;
    }

    Vec solve(const Vec& rhs) const {
        Vec sol = solver_.solve(rhs);
        for (int r = 0; r < 3; ++r) {
            Vec kx = k_.selfadjointView<Eigen::Lower>() * sol - reg_.cwiseProduct(sol);
            Vec res = rhs - kx;
            if (inf_norm(res) <= 1e-14 * (1.0 + inf_norm(rhs))) break;
            sol += solver_.solve(res);
        }
        return sol;
    }

private:
    int np_;
    SpMat k_;
    std::vector<int> diag_pos_;
    Vec base_diag_;
    Vec reg_;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> solver_;
};

}  // namespace

QpResult solve_qp(const QpProblem& qp, const QpOptions& options, const Vec* x0) {
    const int n = static_cast<int>(qp.g.size());
    const int me = static_cast<int>(qp.b.size());
    const int mi = static_cast<int>(qp.d.size());
    const int nv = n + mi;
    const int m = me + mi;
    constexpr double inf = std::numeric_limits<double>::infinity();

    // extended variables (x, s) with C x + s = d, s >= 0
    std::vector<Triplet> trips;
    for (int k = 0; k < qp.a.outerSize(); ++k)
        for (SpMat::InnerIterator it(qp.a, k); it; ++it)
            trips.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < qp.c.outerSize(); ++k)
        for (SpMat::InnerIterator it(qp.c, k); it; ++it)
            trips.emplace_back(me + it.row(), it.col(), it.value());
    for (int i = 0; i < mi; ++i) trips.emplace_back(me + i, n + i, 1.0);
    SpMat a_hat(m, nv);
    a_hat.setFromTriplets(trips.begin(), trips.end());
    SpMat a_hat_t = a_hat.transpose();

    SpMat h(nv, nv);
    {
        std::vector<Triplet> ht;
        for (int k = 0; k < qp.h.outerSize(); ++k)
            for (SpMat::InnerIterator it(qp.h, k); it; ++it)
                ht.emplace_back(it.row(), it.col(), it.value());
        h.setFromTriplets(ht.begin(), ht.end());
    }
    SpMat h_lower = h.triangularView<Eigen::Lower>();

    Vec g = Vec::Zero(nv);
    g.head(n) = qp.g;
    Vec b_hat(m);
    b_hat << qp.b, qp.d;

    Vec lo(nv), up(nv);
    lo.head(n) = qp.lower;
    up.head(n) = qp.upper;
    lo.tail(mi).setZero();
    up.tail(mi).setConstant(inf);
    std::vector<char> has_l(nv), has_u(nv);
    for (int i = 0; i < nv; ++i) {
        if (std::isfinite(lo[i]) && std::isfinite(up[i]) && up[i] - lo[i] < 1e-10) {
            const double mid = 0.5 * (lo[i] + up[i]);
            lo[i] = mid - 5e-11;
            up[i] = mid + 5e-11;
        }
        has_l[i] = std::isfinite(lo[i]);
        has_u[i] = std::isfinite(up[i]);
    }
    int nb = 0;
    for (int i = 0; i < nv; ++i) nb += has_l[i] + has_u[i];

    Vec x = Vec::Zero(nv);
    if (x0 && x0->size() == n) x.head(n) = *x0;
    if (mi) x.tail(mi) = qp.d - qp.c * x.head(n);
    for (int i = 0; i < nv; ++i) {
        if (has_l[i] && has_u[i]) {
            const double margin = std::min(1.0, 0.25 * (up[i] - lo[i]));
            x[i] = std::clamp(x[i], lo[i] + margin, up[i] - margin);
        } else if (has_l[i]) {
            x[i] = std::max(x[i], lo[i] + 1.0);
        } else if (has_u[i]) {
            x[i] = std::min(x[i], up[i] - 1.0);
        }
    }
    Vec y = Vec::Zero(m);
    Vec zl = Vec::Zero(nv), zu = Vec::Zero(nv);
    for (int i = 0; i < nv; ++i) {
        if (has_l[i]) zl[i] = 1.0;
        if (has_u[i]) zu[i] = 1.0;
    }

    KktSystem kkt(h_lower, a_hat, nv);
    double rho = options.reg_primal, delta = options.reg_dual;
    const double scale_p = 1.0 + inf_norm(b_hat);
    const double scale_d = 1.0 + inf_norm(g);

    QpResult res;
    auto finish = [&](QpStatus status, int iters) {
        res.status = status;
        res.iterations = iters;
        res.x = x.head(n);
        res.y_eq = y.head(me);
        res.y_ineq = y.tail(mi);
        res.z_lower = zl.head(n);
        res.z_upper = zu.head(n);
        return res;
    };

    Vec t(nv), w(nv);
    for (int it = 0; it < options.max_iter; ++it) {
        for (int i = 0; i < nv; ++i) {
            t[i] = has_l[i] ? x[i] - lo[i] : 1.0;
            w[i] = has_u[i] ? up[i] - x[i] : 1.0;
        }
        Vec rd = h.selfadjointView<Eigen::Lower>() * x;
        rd += g + a_hat_t * y - zl + zu;
        Vec rp = a_hat * x - b_hat;
        double comp = 0.0;
        for (int i = 0; i < nv; ++i) {
            if (has_l[i]) comp += t[i] * zl[i];
            if (has_u[i]) comp += w[i] * zu[i];
        }
        const double mu = nb ? comp / nb : 0.0;
        const double obj = 0.5 * x.dot(h.selfadjointView<Eigen::Lower>() * x) + g.dot(x);
        res.primal_residual = inf_norm(rp) / scale_p;
        res.dual_residual = inf_norm(rd) / scale_d;
        res.gap = comp / (1.0 + std::abs(obj));
        if (res.primal_residual <= options.tol && res.dual_residual <= options.tol &&
            res.gap <= options.tol)
            return finish(QpStatus::Optimal, it);
        if (inf_norm(y) > 1e14 || inf_norm(zl) > 1e14 || inf_norm(zu) > 1e14)
            return finish(QpStatus::Infeasible, it);

        Vec sigma = Vec::Zero(nv);
        for (int i = 0; i < nv; ++i) {
            if (has_l[i]) sigma[i] += zl[i] / t[i];
            if (has_u[i]) sigma[i] += zu[i] / w[i];
        }
        bool ok = false;
        for (int attempt = 0; attempt < 6 && !ok; ++attempt) {
            ok = kkt.factorize(sigma, rho, delta);
            if (!ok) {
                rho *= 100.0;
                delta *= 100.0;
            }
        }
        if (!ok) return finish(QpStatus::NumericalFailure, it);

        auto newton = [&](const Vec& rhs_l, const Vec& rhs_u, Vec& dx, Vec& dy, Vec& dzl,
                          Vec& dzu) {
            Vec r(nv + m);
            Vec r1 = -rd;
            for (int i = 0; i < nv; ++i) {
                if (has_l[i]) r1[i] += rhs_l[i] / t[i];
                if (has_u[i]) r1[i] -= rhs_u[i] / w[i];
            }
            r << r1, -rp;
            Vec sol = kkt.solve(r);
            dx = sol.head(nv);
            dy = sol.tail(m);
            dzl = Vec::Zero(nv);
            dzu = Vec::Zero(nv);
            for (int i = 0; i < nv; ++i) {
                if (has_l[i]) dzl[i] = (rhs_l[i] - zl[i] * dx[i]) / t[i];
                if (has_u[i]) dzu[i] = (rhs_u[i] + zu[i] * dx[i]) / w[i];
            }
        };

        Vec dx, dy, dzl, dzu;
        if (nb == 0) {
            newton(Vec::Zero(nv), Vec::Zero(nv), dx, dy, dzl, dzu);
            x += dx;
            y += dy;
            continue;
        }

        Vec rhs_l = Vec::Zero(nv), rhs_u = Vec::Zero(nv);
        for (int i = 0; i < nv; ++i) {
            if (has_l[i]) rhs_l[i] = -t[i] * zl[i];
            if (has_u[i]) rhs_u[i] = -w[i] * zu[i];
        }
        newton(rhs_l, rhs_u, dx, dy, dzl, dzu);
        auto step_length = [&](const Vec& ddx, const Vec& ddzl, const Vec& ddzu) {
            double a = max_step(t, ddx, has_l);
            a = std::min(a, max_step(w, -ddx, has_u));
            a = std::min(a, max_step(zl, ddzl, has_l));
            a = std::min(a, max_step(zu, ddzu, has_u));
            return a;
        };
        const double a_aff = step_length(dx, dzl, dzu);
        double comp_aff = 0.0;
        for (int i = 0; i < nv; ++i) {
            if (has_l[i]) comp_aff += (t[i] + a_aff * dx[i]) * (zl[i] + a_aff * dzl[i]);
            if (has_u[i]) comp_aff += (w[i] - a_aff * dx[i]) * (zu[i] + a_aff * dzu[i]);
        }
        const double mu_aff = comp_aff / nb;
        const double sig = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3.0);

        for (int i = 0; i < nv; ++i) {
            if (has_l[i]) rhs_l[i] = sig * mu - t[i] * zl[i] - dx[i] * dzl[i];
            if (has_u[i]) rhs_u[i] = sig * mu - w[i] * zu[i] + dx[i] * dzu[i];
        }
        newton(rhs_l, rhs_u, dx, dy, dzl, dzu);
        const double alpha = std::min(1.0, 0.995 * step_length(dx, dzl, dzu));
        x += alpha * dx;
        y += alpha * dy;
        zl += alpha * dzl;
        zu += alpha * dzu;
        for (int i = 0; i < nv; ++i) {
            if (has_l[i]) zl[i] = std::max(zl[i], 1e-300);
            if (has_u[i]) zu[i] = std::max(zu[i], 1e-300);
        }
    }
    const bool primal_ok = res.primal_residual <= 1e3 * options.tol;
    return finish(primal_ok ? QpStatus::MaxIter : QpStatus::Infeasible, options.max_iter);
}

}  // namespace rdmpc
