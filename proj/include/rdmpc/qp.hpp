#pragma once

#include "rdmpc/types.hpp"

namespace rdmpc {

// min 1/2 x'Hx + g'x  s.t.  A x = b,  C x <= d,  lower <= x <= upper
struct QpProblem {
    SpMat h;
    Vec g;
    SpMat a;
    Vec b;
    SpMat c;
    Vec d;
    Vec lower;
    Vec upper;
};

enum class QpStatus { Optimal, Infeasible, MaxIter, NumericalFailure };

// Stationarity: Hx + g + A'y_eq + C'y_ineq - z_lower + z_upper = 0, y_ineq, z >= 0.
struct QpResult {
    QpStatus status = QpStatus::NumericalFailure;
    Vec x;
    Vec y_eq;
    Vec y_ineq;
    Vec z_lower;
    Vec z_upper;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
};

struct QpOptions {
    double tol = 1e-9;
    int max_iter = 80;
    double reg_primal = 1e-9;
    double reg_dual = 1e-9;
};

QpResult solve_qp(const QpProblem& qp, const QpOptions& options = {}, const Vec* x0 = nullptr);

const char* to_string(QpStatus s);

}  // namespace rdmpc
