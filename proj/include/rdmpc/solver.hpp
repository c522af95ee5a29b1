#pragma once

#include <functional>
#include <string>

#include "rdmpc/types.hpp"

namespace rdmpc {

using VecFn = std::function<Vec(const Vec&)>;
using ScalarFn = std::function<double(const Vec&)>;
using SparseFn = std::function<SpMat(const Vec&)>;

// Inequalities use the convention g(v) <= 0. Missing derivative callbacks fall back to
// central finite differences; a missing Hessian selects a damped BFGS approximation.
struct NlpProblem {
    int n_vars = 0;
    ScalarFn objective;
    VecFn objective_grad;
    SparseFn objective_hess;
    int n_eq = 0;
    int n_ineq = 0;
    VecFn eq_constraints;
    VecFn ineq_constraints;
    SparseFn eq_jacobian;
    SparseFn ineq_jacobian;
    Vec lower;
    Vec upper;
};

enum class SolveStatus { Converged, MaxIter, Infeasible };

const char* to_string(SolveStatus s);

struct SolveReport {
    Vec solution;
    double objective = 0.0;
    double max_violation = 0.0;
    double stationarity = 0.0;
    int iterations = 0;
    SolveStatus status = SolveStatus::MaxIter;
    Vec eq_multipliers;
    Vec ineq_multipliers;
    int restorations = 0;
};

struct SolverOptions {
    double tol_feas = 1e-6;
    double tol_opt = 1e-6;
    int max_iter = 200;
    double initial_radius = 1e4;
    bool verbose = false;
};

SolveReport solve(const NlpProblem& problem, const Vec& v0, const SolverOptions& options = {});
SolveReport solve(const NlpProblem& problem, const Vec& v0, double tol_feas, double tol_opt,
                  int max_iter);

// Central differences with step h_j = h * max(1, |v_j|); h <= 0 selects 1e-6.
Mat fd_jacobian(const VecFn& fn, const Vec& v, double h = 0.0);
Vec fd_gradient(const ScalarFn& fn, const Vec& v, double h = 0.0);

// ||a||_1 as sum(a+ + a-) with a = a+ - a-, both nonnegative; split layout (a+, a-).
struct L1Split {
    int n = 0;

    explicit L1Split(int count);
    int n_split() const { return 2 * n; }
    Vec cost() const { return Vec::Ones(2 * n); }
    Vec signed_values(const Vec& split) const;
    Vec split_of(const Vec& a) const;
    double norm(const Vec& split) const { return split.sum(); }
    Mat jacobian() const;
};

L1Split l1_split(int n);

}  // namespace rdmpc
