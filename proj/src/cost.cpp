#include "rdmpc/cost.hpp"

#include <algorithm>

namespace rdmpc {

double LinearFunctional::eval(const Vec& x, const Vec& u, const Vec& z) const {
    double v = d;
    if (cx.size()) v += cx.dot(x);
    if (cu.size()) v += cu.dot(u);
    if (cz.size()) v += cz.dot(z);
    return v;
}

double hinge(double f, double price_pos, double price_neg) {
    return price_pos * std::max(f, 0.0) + price_neg * std::min(f, 0.0);
}

double OcpCost::stage(int l, const Vec& x_next, const Vec& u, const Vec& z) const {
    double c = 0.0;
    for (const auto& q : quadratic) {
        const double f = q.f.eval(x_next, u, z);
        c += q.weight * f * f;
    }
    for (const auto& h : hinge) c += rdmpc::hinge(h.f.eval(x_next, u, z), h.price_pos[l], h.price_neg[l]);
    return c;
}

double OcpCost::terminal_value(const Vec& x) const {
    double c = 0.0;
    for (const auto& t : terminal) c += rdmpc::hinge(t.f.eval(x, Vec(), Vec()), t.price_pos, t.price_neg);
    return c;
}

}  // namespace rdmpc
