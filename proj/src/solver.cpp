#include "rdmpc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "rdmpc/errors.hpp"
#include "rdmpc/qp.hpp"

namespace rdmpc {

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::MaxIter: return "max_iter";
        case SolveStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

Mat fd_jacobian(const VecFn& fn, const Vec& v, double h) {
    const double base = h > 0 ? h : 1e-6;
    Vec probe = v;
    Mat jac;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        const double step = base * std::max(1.0, std::abs(v[j]));
        probe[j] = v[j] + step;
        const Vec fp = fn(probe);
        probe[j] = v[j] - step;
        const Vec fm = fn(probe);
        probe[j] = v[j];
        if (!fp.allFinite() || !fm.allFinite())
            throw DerivativeFailure("non-finite value in finite-difference evaluation");
        if (j == 0) jac.resize(fp.size(), v.size());
        jac.col(j) = (fp - fm) / (2.0 * step);
    }
    if (v.size() == 0) jac.resize(fn(v).size(), 0);
    return jac;
}

Vec fd_gradient(const ScalarFn& fn, const Vec& v, double h) {
    VecFn wrapped = [&fn](const Vec& x) {
        Vec out(1);
        out[0] = fn(x);
        return out;
    };
    return fd_jacobian(wrapped, v, h).row(0).transpose();
}

L1Split::L1Split(int count) : n(count) {
    if (count < 1) throw std::invalid_argument("l1_split: n must be >= 1");
}

Vec L1Split::signed_values(const Vec& split) const { return split.head(n) - split.tail(n); }

Vec L1Split::split_of(const Vec& a) const {
    Vec s(2 * n);
    s.head(n) = a.cwiseMax(0.0);
    s.tail(n) = (-a).cwiseMax(0.0);
    return s;
}

Mat L1Split::jacobian() const {
    Mat j(n, 2 * n);
    j << Mat::Identity(n, n), -Mat::Identity(n, n);
    return j;
}

L1Split l1_split(int n) { return L1Split(n); }

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct Point {
    Vec v;
    double f = 0.0;
    Vec g;
    Vec ce, ci;
    SpMat je, ji;
};

class Sqp {
public:
    Sqp(const NlpProblem& p, const SolverOptions& o) : p_(p), o_(o), n_(p.n_vars) {
        lo_ = p.lower.size() ? p.lower : Vec::Constant(n_, -inf);
        up_ = p.upper.size() ? p.upper : Vec::Constant(n_, inf);
        if (lo_.size() != n_ || up_.size() != n_)
            throw std::invalid_argument("solve: bound vectors do not match n_vars");
        if ((lo_.array() > up_.array()).any())
            throw std::invalid_argument("solve: lower bound above upper bound");
        dense_ = !p.objective_hess;
        if (dense_) bfgs_ = Mat::Identity(n_, n_);
    }

    SolveReport run(const Vec& v0) {
        SolveReport rep;
        Point x = evaluate(v0.cwiseMax(lo_).cwiseMin(up_), true);
        double radius = o_.initial_radius;
        double nu = 1.0;
        int failures = 0;
        Vec y_eq = Vec::Zero(p_.n_eq), y_in = Vec::Zero(p_.n_ineq);

        for (int it = 0; it < o_.max_iter; ++it) {
            rep.iterations = it + 1;
            QpResult qp = subproblem(x, radius, x.ce, x.ci, Vec());
            if (qp.status != QpStatus::Optimal && std::isfinite(radius)) {
                qp = subproblem(x, inf, x.ce, x.ci, Vec());
                if (qp.status == QpStatus::Optimal) radius = std::max(radius, 2 * inf_norm(qp.x));
            }
            if (qp.status != QpStatus::Optimal) {
                ++rep.restorations;
                if (!augmented_lagrangian(x, nu)) {
                    fill(rep, x, y_eq, y_in, SolveStatus::Infeasible);
                    return rep;
                }
                if (dense_) bfgs_ = Mat::Identity(n_, n_);
                continue;
            }
            const Vec& d = qp.x;
            y_eq = qp.y_eq;
            y_in = qp.y_ineq;
            const double viol = violation(x.ce, x.ci);
            const double stat = stationarity(x, qp);
            rep.stationarity = stat;
            if (o_.verbose)
                std::fprintf(stderr, "sqp %3d f=%.10g viol=%.3e stat=%.3e |d|=%.3e nu=%.3e\n", it,
                             x.f, viol, stat, inf_norm(d), nu);
            if (viol <= o_.tol_feas && stat <= o_.tol_opt) {
                fill(rep, x, y_eq, y_in, SolveStatus::Converged);
                return rep;
            }

            nu = std::max(nu, 1.1 * std::max(inf_norm(y_eq), inf_norm(y_in)) + 1e-6);
            const double phi0 = x.f + nu * l1_violation(x.ce, x.ci);
            double slope = x.g.dot(d) - nu * l1_violation(x.ce, x.ci);
            slope = std::min(slope, -1e-16 * (1.0 + std::abs(phi0)));

            Point next;
            bool accepted = false;
            double alpha = 1.0;
            {
                Point trial = evaluate(x.v + d, false);
                if (merit(trial, nu) <= phi0 + 1e-4 * slope) {
                    next = std::move(trial);
                    accepted = true;
                } else if (p_.n_eq + p_.n_ineq > 0) {
                    // second-order correction
                    Vec ce = trial.ce - x.je * d;
                    Vec ci = trial.ci - x.ji * d;
                    QpResult soc = subproblem(x, radius, ce, ci, d);
                    if (soc.status == QpStatus::Optimal) {
                        Point corrected = evaluate((x.v + soc.x).cwiseMax(lo_).cwiseMin(up_), false);
                        if (merit(corrected, nu) <= phi0 + 1e-4 * slope) {
                            next = std::move(corrected);
                            accepted = true;
                        }
                    }
                }
            }
            while (!accepted && alpha > 1e-8) {
                alpha *= 0.5;
                Point trial = evaluate((x.v + alpha * d).cwiseMax(lo_).cwiseMin(up_), false);
                if (merit(trial, nu) <= phi0 + 1e-4 * alpha * slope) {
                    next = std::move(trial);
                    accepted = true;
                }
            }
            if (!accepted) {
                ++failures;
                radius = std::max(0.25 * inf_norm(d), 1e-12);
                if (dense_) bfgs_ = Mat::Identity(n_, n_);
                if (failures > 20) break;
                continue;
            }
            const double step_norm = inf_norm(next.v - x.v);
            if (alpha == 1.0)
                radius = std::min(std::max(radius, 2.0 * step_norm), o_.initial_radius);
            else
                radius = std::max(step_norm, 1e-12);

            next = evaluate(next.v, true);
            if (dense_) update_bfgs(x, next, y_eq, y_in);
            x = std::move(next);
        }
        QpResult qp = subproblem(x, inf, x.ce, x.ci, Vec());
        if (qp.status == QpStatus::Optimal) {
            y_eq = qp.y_eq;
            y_in = qp.y_ineq;
            rep.stationarity = stationarity(x, qp);
            if (violation(x.ce, x.ci) <= o_.tol_feas && rep.stationarity <= o_.tol_opt) {
                fill(rep, x, y_eq, y_in, SolveStatus::Converged);
                return rep;
            }
        }
        fill(rep, x, y_eq, y_in, SolveStatus::MaxIter);
        return rep;
    }

private:
    const NlpProblem& p_;
    SolverOptions o_;
    int n_;
    Vec lo_, up_;
    bool dense_;
    Mat bfgs_;

    Point evaluate(const Vec& v, bool derivatives) const {
        Point x;
        x.v = v;
        x.f = p_.objective(v);
        x.ce = p_.n_eq ? p_.eq_constraints(v) : Vec();
        x.ci = p_.n_ineq ? p_.ineq_constraints(v) : Vec();
        if (!std::isfinite(x.f) || !x.ce.allFinite() || !x.ci.allFinite()) {
            x.f = inf;
            return x;
        }
        if (derivatives) {
            x.g = p_.objective_grad ? p_.objective_grad(v) : fd_gradient(p_.objective, v);
            x.je = jacobian(p_.eq_jacobian, p_.eq_constraints, p_.n_eq, v);
            x.ji = jacobian(p_.ineq_jacobian, p_.ineq_constraints, p_.n_ineq, v);
        }
        return x;
    }

    SpMat jacobian(const SparseFn& jac, const VecFn& fn, int rows, const Vec& v) const {
        if (rows == 0) return SpMat(0, n_);
        if (jac) return jac(v);
        Mat dense = fd_jacobian(fn, v);
        return dense.sparseView();
    }

    SpMat hessian(const Point& x) const {
        if (dense_) return bfgs_.sparseView();
        return p_.objective_hess(x.v);
    }

    // Linearized subproblem at x with constraint offsets ce, ci.
    QpResult subproblem(const Point& x, double radius, const Vec& ce, const Vec& ci,
                        const Vec& start) const {
        QpProblem qp;
        qp.h = hessian(x);
        qp.g = x.g;
        qp.a = x.je;
        qp.b = -ce;
        qp.c = x.ji;
        qp.d = -ci;
        qp.lower = (lo_ - x.v).cwiseMax(-radius);
        qp.upper = (up_ - x.v).cwiseMin(radius);
        return solve_qp(qp, {}, start.size() ? &start : nullptr);
    }

    double violation(const Vec& ce, const Vec& ci) const {
        double v = inf_norm(ce);
        if (ci.size()) v = std::max(v, ci.maxCoeff());
        return std::max(v, 0.0);
    }

    double l1_violation(const Vec& ce, const Vec& ci) const {
        double v = ce.size() ? ce.cwiseAbs().sum() : 0.0;
        if (ci.size()) v += ci.cwiseMax(0.0).sum();
        return v;
    }

    double merit(const Point& x, double nu) const {
        if (!std::isfinite(x.f)) return inf;
        return x.f + nu * l1_violation(x.ce, x.ci);
    }

    Vec lagrangian_grad(const Point& x, const Vec& y_eq, const Vec& y_in) const {
        Vec r = x.g;
        if (p_.n_eq) r += x.je.transpose() * y_eq;
        if (p_.n_ineq) r += x.ji.transpose() * y_in;
        return r;
    }

    // KKT residual with the subproblem's bound duals, plus bound complementarity
    double stationarity(const Point& x, const QpResult& qp) const {
        Vec r = lagrangian_grad(x, qp.y_eq, qp.y_ineq) - qp.z_lower + qp.z_upper;
        double comp = 0.0;
        for (int i = 0; i < n_; ++i) {
            if (std::isfinite(lo_[i])) comp = std::max(comp, qp.z_lower[i] * std::min(x.v[i] - lo_[i], 1.0));
            if (std::isfinite(up_[i])) comp = std::max(comp, qp.z_upper[i] * std::min(up_[i] - x.v[i], 1.0));
        }
        return std::max(inf_norm(r), comp) / std::max(1.0, inf_norm(x.g));
    }

    void update_bfgs(const Point& x, const Point& next, const Vec& y_eq, const Vec& y_in) {
        const Vec s = next.v - x.v;
        Vec y = lagrangian_grad(next, y_eq, y_in) - lagrangian_grad(x, y_eq, y_in);
        const double ss = s.squaredNorm();
        if (ss < 1e-24) return;
        const Vec bs = bfgs_ * s;
        const double sbs = s.dot(bs);
        if (sbs <= 0) {
            bfgs_ = Mat::Identity(n_, n_);
            return;
        }
        double sy = s.dot(y);
        if (sy < 0.2 * sbs) {
            const double theta = 0.8 * sbs / (sbs - sy);
            y = theta * y + (1.0 - theta) * bs;
            sy = s.dot(y);
        }
        bfgs_ += y * y.transpose() / sy - bs * bs.transpose() / sbs;
    }

    void fill(SolveReport& rep, const Point& x, const Vec& y_eq, const Vec& y_in,
              SolveStatus status) const {
        rep.solution = x.v;
        rep.objective = x.f;
        rep.max_violation = violation(x.ce, x.ci);
        rep.eq_multipliers = y_eq;
        rep.ineq_multipliers = y_in;
        rep.status = status;
    }

    // Bound-constrained augmented-Lagrangian phase used when the QP subproblem fails.
    bool augmented_lagrangian(Point& x, double& nu) {
        double rho = 10.0 * std::max(1.0, nu);
        Vec lam_e = Vec::Zero(p_.n_eq), lam_i = Vec::Zero(p_.n_ineq);
        double prev = violation(x.ce, x.ci);
        auto value = [&](const Point& pt) {
            if (!std::isfinite(pt.f)) return inf;
            double v = pt.f;
            if (p_.n_eq) v += lam_e.dot(pt.ce) + 0.5 * rho * pt.ce.squaredNorm();
            if (p_.n_ineq) {
                Vec s = (lam_i + rho * pt.ci).cwiseMax(0.0);
                v += (s.squaredNorm() - lam_i.squaredNorm()) / (2.0 * rho);
            }
            return v;
        };
        for (int outer = 0; outer < 40; ++outer) {
            for (int inner = 0; inner < 50; ++inner) {
                Vec grad = x.g;
                SpMat h = hessian(x);
                if (p_.n_eq) {
                    grad += x.je.transpose() * (lam_e + rho * x.ce);
                    h += rho * SpMat(x.je.transpose() * x.je);
                }
                if (p_.n_ineq) {
                    Vec s = lam_i + rho * x.ci;
                    Vec act = (s.array() > 0).cast<double>();
                    grad += x.ji.transpose() * s.cwiseMax(0.0);
                    SpMat ja = act.asDiagonal() * x.ji;
                    h += rho * SpMat(ja.transpose() * ja);
                }
                QpProblem qp;
                qp.h = h;
                qp.g = grad;
                qp.a = SpMat(0, n_);
                qp.b = Vec();
                qp.c = SpMat(0, n_);
                qp.d = Vec();
                qp.lower = lo_ - x.v;
                qp.upper = up_ - x.v;
                QpResult r = solve_qp(qp);
                if (r.status != QpStatus::Optimal && r.status != QpStatus::MaxIter) break;
                const Vec& d = r.x;
                const double v0 = value(x);
                const double slope = std::min(grad.dot(d), 0.0);
                double alpha = 1.0;
                bool moved = false;
                while (alpha > 1e-10) {
                    Point trial = evaluate((x.v + alpha * d).cwiseMax(lo_).cwiseMin(up_), false);
                    if (value(trial) <= v0 + 1e-4 * alpha * slope) {
                        x = evaluate(trial.v, true);
                        moved = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if (!moved || alpha * inf_norm(d) <= 1e-12 * (1.0 + inf_norm(x.v))) break;
            }
            if (p_.n_eq) lam_e += rho * x.ce;
            if (p_.n_ineq) lam_i = (lam_i + rho * x.ci).cwiseMax(0.0);
            const double viol = violation(x.ce, x.ci);
            if (viol <= o_.tol_feas) {
                nu = std::max(nu, 1.1 * std::max(inf_norm(lam_e), inf_norm(lam_i)));
                return true;
            }
            if (viol > 0.25 * prev) rho *= 10.0;
            prev = viol;
            if (rho > 1e12) return false;
        }
        return false;
    }
};

}  // namespace

SolveReport solve(const NlpProblem& problem, const Vec& v0, const SolverOptions& options) {
    if (v0.size() != problem.n_vars) throw std::invalid_argument("solve: v0 size != n_vars");
    Sqp sqp(problem, options);
    return sqp.run(v0);
}

SolveReport solve(const NlpProblem& problem, const Vec& v0, double tol_feas, double tol_opt,
                  int max_iter) {
    SolverOptions o;
    o.tol_feas = tol_feas;
    o.tol_opt = tol_opt;
    o.max_iter = max_iter;
    return solve(problem, v0, o);
}

}  // namespace rdmpc
