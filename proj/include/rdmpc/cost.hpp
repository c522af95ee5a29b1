#pragma once

#include <vector>

#include "rdmpc/types.hpp"

namespace rdmpc {

// f = cx'x + cu'u + cz'z + d, with x the end-of-interval state
struct LinearFunctional {
    Vec cx, cu, cz;
    double d = 0.0;

    double eval(const Vec& x, const Vec& u, const Vec& z) const;
};

struct QuadraticTerm {
    double weight = 0.0;
    LinearFunctional f;
};

// price_pos * (f)_+ + price_neg * (f)_-, prices given per stage
struct HingeTerm {
    LinearFunctional f;
    std::vector<double> price_pos;
    std::vector<double> price_neg;
};

struct TerminalHinge {
    LinearFunctional f;
    double price_pos = 0.0;
    double price_neg = 0.0;
};

struct OcpCost {
    std::vector<QuadraticTerm> quadratic;
    std::vector<HingeTerm> hinge;
    std::vector<TerminalHinge> terminal;

    double stage(int l, const Vec& x_next, const Vec& u, const Vec& z) const;
    double terminal_value(const Vec& x) const;
};

double hinge(double f, double price_pos, double price_neg);

}  // namespace rdmpc
