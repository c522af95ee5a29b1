#include "rdmpc/dmpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rdmpc/errors.hpp"

namespace rdmpc {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr double nan = std::numeric_limits<double>::quiet_NaN();

bool close(const Vec& a, const Vec& b, double tol) {
    return a.size() == b.size() && (a.size() == 0 || (a - b).cwiseAbs().maxCoeff() <= tol);
}

// Central differences that fall back to one-sided steps when a side leaves the model domain.
Mat robust_jacobian(const VecFn& fn, const Vec& v, const Vec& f0) {
    Mat j(f0.size(), v.size());
    Vec p = v;
    for (int c = 0; c < v.size(); ++c) {
        const double h = 1e-6 * std::max(1.0, std::abs(v[c]));
        Vec fp, fm;
        bool okp = true, okm = true;
        p[c] = v[c] + h;
        try {
            fp = fn(p);
        } catch (const Error&) {
            okp = false;
        }
        p[c] = v[c] - h;
        try {
            fm = fn(p);
        } catch (const Error&) {
            okm = false;
        }
        p[c] = v[c];
        if (okp && okm) j.col(c) = (fp - fm) / (2 * h);
        else if (okp) j.col(c) = (fp - f0) / h;
        else if (okm) j.col(c) = (f0 - fm) / h;
        else throw DerivativeFailure("no admissible difference step in column " + std::to_string(c));
        if (!j.col(c).allFinite()) throw DerivativeFailure("non-finite derivative");
    }
    return j;
}

}  // namespace

std::map<int, std::vector<int>> ScenarioTree::groups() const {
    std::map<int, std::vector<int>> g;
    for (int li = 0; li < n_leaves(); ++li) {
        int n = nodes[leaves[li]].parent;
        while (n >= 0) {
            g[n].push_back(li);
            n = nodes[n].parent;
        }
    }
    for (auto& [n, ls] : g) std::sort(ls.begin(), ls.end());
    return g;
}

std::vector<int> ScenarioTree::path(int leaf) const {
    std::vector<int> p;
    for (int n = leaves.at(leaf); n >= 0; n = nodes[n].parent) p.push_back(n);
    std::reverse(p.begin(), p.end());
    return p;
}

ScenarioTree build_tree(const SubsystemModel& model, const Vec& x_k, int k,
                        const std::vector<Vec>& attack_set,
                        const std::map<int, Contract>& neighbor_contracts,
                        const std::vector<Vec>& param_set, int n_p, const TreeOptions& options) {
    if (n_p < 1) throw std::invalid_argument("prediction horizon must be >= 1");
    if (options.robust_horizon < 0) throw std::invalid_argument("robust horizon must be >= 0");
    const std::vector<Vec> attacks = attack_set.empty() ? std::vector<Vec>{Vec::Zero(model.n_u)} : attack_set;
    const std::vector<Vec> params = param_set.empty() ? std::vector<Vec>{Vec::Zero(model.n_w)} : param_set;
    for (const auto& a : attacks)
        if (a.size() != model.n_u) throw AssemblyError("attack scenario has wrong size");
    for (const auto& w : params)
        if (w.size() != model.n_w) throw AssemblyError("parameter scenario has wrong size");

    // incoming component -> (contract, local row)
    struct Source {
        const Contract* contract;
        int row;
    };
    std::vector<Source> sources;
    for (std::size_t i = 0; i < model.neighbors.size(); ++i) {
        const int l = model.neighbors[i];
        auto it = neighbor_contracts.find(l);
        if (it == neighbor_contracts.end())
            throw MissingNeighborData("no contract from subsystem " + std::to_string(l) +
                                      " for subsystem " + std::to_string(model.id));
        for (int r = 0; r < model.incoming[i]; ++r) sources.push_back({&it->second, r});
    }
    const int nzn = static_cast<int>(sources.size());

    auto coupling = [&](const std::vector<int>& label, int interval) {
        Vec z(nzn);
        for (int c = 0; c < nzn; ++c) {
            const Contract& ct = *sources[c].contract;
            const double lo = ct.lo_at(interval)[sources[c].row];
            const double hi = ct.hi_at(interval)[sources[c].row];
            const int choice = label[1 + c];
            z[c] = choice == 0 ? lo : choice == 2 ? hi : 0.5 * (lo + hi);
        }
        return z;
    };
    auto realize = [&](const std::vector<int>& label, int interval) {
        Realization r;
        r.label = label;
        r.a = attacks[label[0]];
        r.z = coupling(label, interval);
        r.w = params[label.back()];
        return r;
    };

    // mid first so that a degenerate corridor keeps the midpoint label
    const std::vector<int> order = options.coupling_bounds ? std::vector<int>{1, 0, 2} : std::vector<int>{1};
    std::vector<std::vector<int>> labels{{}};
    {
        std::vector<std::vector<int>> next;
        for (int ia = 0; ia < static_cast<int>(attacks.size()); ++ia) next.push_back({ia});
        labels = next;
        for (int c = 0; c < nzn; ++c) {
            next.clear();
            for (const auto& l : labels)
                for (int ch : order) {
                    auto e = l;
                    e.push_back(ch);
                    next.push_back(e);
                }
            labels = next;
        }
        next.clear();
        for (const auto& l : labels)
            for (int iw = 0; iw < static_cast<int>(params.size()); ++iw) {
                auto e = l;
                e.push_back(iw);
                next.push_back(e);
            }
        labels = next;
    }
    std::vector<int> nominal_label(nzn + 2, 0);
    for (int c = 0; c < nzn; ++c) nominal_label[1 + c] = 1;

    ScenarioTree tree;
    tree.n_p = n_p;
    tree.first_interval = k;
    tree.x0 = x_k;
    TreeNode root;
    root.edge.label = nominal_label;
    tree.nodes.push_back(root);
    std::vector<int> frontier{0};
    for (int t = 0; t < n_p; ++t) {
        const int interval = k + t;
        std::vector<int> next;
        for (int n : frontier) {
            std::vector<Realization> kids;
            if (t < options.robust_horizon) {
                for (const auto& label : labels) {
                    Realization r = realize(label, interval);
                    bool dup = false;
                    for (const auto& o : kids)
                        if (close(o.a, r.a, options.dedup_tol) && close(o.z, r.z, options.dedup_tol) &&
                            close(o.w, r.w, options.dedup_tol)) {
                            dup = true;
                            break;
                        }
                    if (!dup) kids.push_back(std::move(r));
                }
            } else {
                kids.push_back(realize(tree.nodes[n].edge.label, interval));
            }
            for (auto& r : kids) {
                TreeNode child;
                child.stage = t + 1;
                child.parent = n;
                child.edge = std::move(r);
                tree.nodes[n].children.push_back(static_cast<int>(tree.nodes.size()));
                next.push_back(static_cast<int>(tree.nodes.size()));
                tree.nodes.push_back(std::move(child));
            }
        }
        if (static_cast<int>(next.size()) > options.max_leaves)
            throw TreeTooLarge("scenario tree of subsystem " + std::to_string(model.id) + " has " +
                               std::to_string(next.size()) + " branches, limit " +
                               std::to_string(options.max_leaves));
        frontier = std::move(next);
    }
    tree.leaves = frontier;
    const double alpha = 1.0 / static_cast<double>(tree.leaves.size());
    tree.alpha.assign(tree.leaves.size(), alpha);
    for (int n : tree.leaves) tree.nodes[n].weight = alpha;
    for (int n = static_cast<int>(tree.nodes.size()) - 1; n > 0; --n)
        tree.nodes[tree.nodes[n].parent].weight += tree.nodes[n].weight;
    return tree;
}

namespace {

struct ContractRow {
    int node;
    Vec lo, hi;
};

class Assembly {
public:
    std::shared_ptr<const ScenarioTree> tree;
    std::shared_ptr<const SubsystemModel> model;
    OcpCost cost;
    OcpLayout L;
    double dt = 0.25;
    int n_h = 0, n_t = 0;
    SpMat hess;
    Vec grad_lin;
    double c0 = 0.0;
    std::vector<ContractRow> contract_rows;

    Vec state(const Vec& v, int n) const {
        return n == 0 ? tree->x0 : Vec(v.segment(L.state[n], model->n_x));
    }
    Vec input(const Vec& v, int n) const { return v.segment(L.input[n], model->n_u); }

    Vec edge_step(const Vec& xp, const Vec& up, const Realization& r) const {
        return integrate_step(*model, xp, up + r.a, r.z, r.w, dt);
    }

    Vec eq(const Vec& v) const {
        if (cached_eq_.size() && cached_key_.size() == v.size() && cached_key_ == v) return cached_eq_;
        const int nx = model->n_x;
        Vec c(L.n_eq);
        int row = 0;
        for (std::size_t n = 1; n < tree->nodes.size(); ++n) {
            const TreeNode& node = tree->nodes[n];
            const Vec xn = state(v, n);
            const Vec up = input(v, node.parent);
            try {
                c.segment(row, nx) = xn - edge_step(state(v, node.parent), up, node.edge);
            } catch (const Error&) {
                c.segment(row, nx).setConstant(nan);
            }
            row += nx;
            for (int h = 0; h < n_h; ++h) {
                const int s = L.split[n] + 2 * h;
                c[row++] = cost.hinge[h].f.eval(xn, up, node.edge.z) - v[s] + v[s + 1];
            }
            if (L.terminal[n] >= 0) {
                const Vec zero_u = Vec::Zero(model->n_u);
                for (int h = 0; h < n_t; ++h) {
                    const int s = L.terminal[n] + 2 * h;
                    c[row++] = cost.terminal[h].f.eval(xn, zero_u, Vec::Zero(cost.terminal[h].f.cz.size())) -
                               v[s] + v[s + 1];
                }
            }
        }
        cached_key_ = v;
        cached_eq_ = c;
        return c;
    }

    SpMat eq_jac(const Vec& v) const {
        const int nx = model->n_x, nu = model->n_u;
        std::vector<Triplet> t;
        int row = 0;
        for (std::size_t n = 1; n < tree->nodes.size(); ++n) {
            const TreeNode& node = tree->nodes[n];
            const int p = node.parent;
            const Vec xp = state(v, p);
            const Vec up = input(v, p);
            Vec arg(nx + nu);
            arg << xp, up;
            auto f = [&](const Vec& a) { return edge_step(a.head(nx), a.tail(nu), node.edge); };
            const Mat j = robust_jacobian(f, arg, f(arg));
            for (int r = 0; r < nx; ++r) {
                t.emplace_back(row + r, L.state[n] + r, 1.0);
                for (int c = 0; c < nx; ++c)
                    if (p != 0 && j(r, c) != 0.0) t.emplace_back(row + r, L.state[p] + c, -j(r, c));
                for (int c = 0; c < nu; ++c)
                    if (j(r, nx + c) != 0.0) t.emplace_back(row + r, L.input[p] + c, -j(r, nx + c));
            }
            row += nx;
            for (int h = 0; h < n_h; ++h) {
                const LinearFunctional& fh = cost.hinge[h].f;
                for (int c = 0; c < nx; ++c)
                    if (fh.cx[c] != 0.0) t.emplace_back(row, L.state[n] + c, fh.cx[c]);
                for (int c = 0; c < nu; ++c)
                    if (fh.cu.size() && fh.cu[c] != 0.0) t.emplace_back(row, L.input[p] + c, fh.cu[c]);
                t.emplace_back(row, L.split[n] + 2 * h, -1.0);
                t.emplace_back(row, L.split[n] + 2 * h + 1, 1.0);
                ++row;
            }
            if (L.terminal[n] >= 0) {
                for (int h = 0; h < n_t; ++h) {
                    const LinearFunctional& fh = cost.terminal[h].f;
                    for (int c = 0; c < nx; ++c)
                        if (fh.cx[c] != 0.0) t.emplace_back(row, L.state[n] + c, fh.cx[c]);
                    t.emplace_back(row, L.terminal[n] + 2 * h, -1.0);
                    t.emplace_back(row, L.terminal[n] + 2 * h + 1, 1.0);
                    ++row;
                }
            }
        }
        SpMat m(L.n_eq, L.n_vars);
        m.setFromTriplets(t.begin(), t.end());
        return m;
    }

    Vec ineq(const Vec& v) const {
        Vec c(L.n_ineq);
        int row = 0;
        const int ng = model->n_g;
        if (ng > 0) {
            for (std::size_t n = 1; n < tree->nodes.size(); ++n) {
                const TreeNode& node = tree->nodes[n];
                c.segment(row, ng) = model->constraint_fn(state(v, node.parent),
                                                          input(v, node.parent) + node.edge.a,
                                                          node.edge.z, node.edge.w);
                row += ng;
            }
        }
        for (const auto& cr : contract_rows) {
            const Vec h = model->coupling_fn(state(v, cr.node));
            const int nz = static_cast<int>(h.size());
            c.segment(row, nz) = h - cr.hi;
            c.segment(row + nz, nz) = cr.lo - h;
            row += 2 * nz;
        }
        return c;
    }

    SpMat ineq_jac(const Vec& v) const {
        const int nx = model->n_x, nu = model->n_u, ng = model->n_g;
        std::vector<Triplet> t;
        int row = 0;
        if (ng > 0) {
            for (std::size_t n = 1; n < tree->nodes.size(); ++n) {
                const TreeNode& node = tree->nodes[n];
                const int p = node.parent;
                Vec arg(nx + nu);
                arg << state(v, p), input(v, p);
                auto f = [&](const Vec& a) {
                    return model->constraint_fn(a.head(nx), a.tail(nu) + node.edge.a, node.edge.z,
                                                node.edge.w);
                };
                const Mat j = robust_jacobian(f, arg, f(arg));
                for (int r = 0; r < ng; ++r) {
                    for (int c = 0; c < nx; ++c)
                        if (p != 0 && j(r, c) != 0.0) t.emplace_back(row + r, L.state[p] + c, j(r, c));
                    for (int c = 0; c < nu; ++c)
                        if (j(r, nx + c) != 0.0) t.emplace_back(row + r, L.input[p] + c, j(r, nx + c));
                }
                row += ng;
            }
        }
        for (const auto& cr : contract_rows) {
            const Vec xn = state(v, cr.node);
            const Mat j = robust_jacobian(model->coupling_fn, xn, model->coupling_fn(xn));
            const int nz = static_cast<int>(j.rows());
            for (int r = 0; r < nz; ++r)
                for (int c = 0; c < nx; ++c)
                    if (j(r, c) != 0.0) {
                        t.emplace_back(row + r, L.state[cr.node] + c, j(r, c));
                        t.emplace_back(row + nz + r, L.state[cr.node] + c, -j(r, c));
                    }
            row += 2 * nz;
        }
        SpMat m(L.n_ineq, L.n_vars);
        m.setFromTriplets(t.begin(), t.end());
        return m;
    }

    double objective(const Vec& v) const {
        return 0.5 * v.dot(hess * v) + grad_lin.dot(v) + c0;
    }

private:
    mutable Vec cached_key_, cached_eq_;
};

double price(const std::vector<double>& prices, int l) {
    if (prices.empty()) return 0.0;
    return prices[std::min<std::size_t>(l, prices.size() - 1)];
}

}  // namespace

OcpProblem assemble_ocp(const ScenarioTree& tree_in, const SubsystemModel& model_in,
                        const OcpCost& cost, const std::optional<Contract>& prev_contract,
                        const OcpBounds& bounds, double dt) {
    auto a = std::make_shared<Assembly>();
    a->tree = std::make_shared<const ScenarioTree>(tree_in);
    a->model = std::make_shared<const SubsystemModel>(model_in);
    a->cost = cost;
    a->dt = dt;
    a->n_h = static_cast<int>(cost.hinge.size());
    a->n_t = static_cast<int>(cost.terminal.size());
    const ScenarioTree& tree = *a->tree;
    const SubsystemModel& model = *a->model;
    const int nx = model.n_x, nu = model.n_u;
    const int n_nodes = static_cast<int>(tree.nodes.size());
    if (tree.x0.size() != nx) throw AssemblyError("tree root state has wrong size");
    for (const auto& q : cost.quadratic)
        if (q.f.cx.size() != nx) throw AssemblyError("cost functional has wrong state size");

    OcpLayout& L = a->L;
    L.input.assign(n_nodes, -1);
    L.state.assign(n_nodes, -1);
    L.split.assign(n_nodes, -1);
    L.terminal.assign(n_nodes, -1);
    int off = 0;
    for (int n = 0; n < n_nodes; ++n) {
        const bool leaf = tree.nodes[n].children.empty();
        if (n > 0) {
            L.state[n] = off;
            off += nx;
            L.split[n] = off;
            off += 2 * a->n_h;
        }
        if (leaf) {
            L.terminal[n] = off;
            off += 2 * a->n_t;
        } else {
            L.input[n] = off;
            off += nu;
        }
    }
    L.n_vars = off;
    L.n_eq = (n_nodes - 1) * (nx + a->n_h) + tree.n_leaves() * a->n_t;

    if (prev_contract) {
        for (int n = 1; n < n_nodes; ++n) {
            const int stage = tree.nodes[n].stage;
            const int interval = tree.first_interval + stage;
            if (stage >= tree.n_p || !prev_contract->covers(interval)) continue;
            a->contract_rows.push_back({n, prev_contract->lo_at(interval), prev_contract->hi_at(interval)});
        }
    }
    L.n_contract_rows = 0;
    for (const auto& cr : a->contract_rows) L.n_contract_rows += 2 * static_cast<int>(cr.lo.size());
    L.n_ineq = (n_nodes - 1) * model.n_g + L.n_contract_rows;

    // objective: constant Hessian, linear split prices
    std::vector<Triplet> ht;
    a->grad_lin = Vec::Zero(L.n_vars);
    a->c0 = 0.0;
    for (int n = 1; n < n_nodes; ++n) {
        const TreeNode& node = tree.nodes[n];
        const int p = node.parent;
        const double omega = node.weight;
        for (const auto& q : cost.quadratic) {
            std::vector<std::pair<int, double>> c;
            for (int i = 0; i < nx; ++i)
                if (q.f.cx[i] != 0.0) c.push_back({L.state[n] + i, q.f.cx[i]});
            for (int i = 0; i < q.f.cu.size(); ++i)
                if (q.f.cu[i] != 0.0) c.push_back({L.input[p] + i, q.f.cu[i]});
            double e = q.f.d;
            if (q.f.cz.size()) e += q.f.cz.dot(node.edge.z);
            const double w = omega * q.weight;
            for (const auto& [i, ci] : c) {
                for (const auto& [j, cj] : c) ht.emplace_back(i, j, 2 * w * ci * cj);
                a->grad_lin[i] += 2 * w * e * ci;
            }
            a->c0 += w * e * e;
        }
        for (int h = 0; h < a->n_h; ++h) {
            a->grad_lin[L.split[n] + 2 * h] += omega * price(cost.hinge[h].price_pos, node.stage - 1);
            a->grad_lin[L.split[n] + 2 * h + 1] -= omega * price(cost.hinge[h].price_neg, node.stage - 1);
        }
    }
    for (int li = 0; li < tree.n_leaves(); ++li) {
        const int n = tree.leaves[li];
        for (int h = 0; h < a->n_t; ++h) {
            a->grad_lin[L.terminal[n] + 2 * h] += tree.alpha[li] * cost.terminal[h].price_pos;
            a->grad_lin[L.terminal[n] + 2 * h + 1] -= tree.alpha[li] * cost.terminal[h].price_neg;
        }
    }
    a->hess.resize(L.n_vars, L.n_vars);
    a->hess.setFromTriplets(ht.begin(), ht.end());

    OcpProblem out;
    out.layout = L;
    out.tree = a->tree;
    out.model = a->model;
    out.cost = cost;
    out.bounds = bounds;
    out.dt = dt;

    auto fill = [](const Vec& b, int size, double dflt) {
        return b.size() == size ? b : Vec::Constant(size, dflt);
    };
    const Vec xl = fill(bounds.x_lower.size() ? bounds.x_lower : model.x_lower, nx, -inf);
    const Vec xu = fill(bounds.x_upper.size() ? bounds.x_upper : model.x_upper, nx, inf);
    const Vec ul = fill(bounds.u_lower.size() ? bounds.u_lower : model.u_lower, nu, -inf);
    const Vec uu = fill(bounds.u_upper.size() ? bounds.u_upper : model.u_upper, nu, inf);
    out.bounds = OcpBounds{xl, xu, ul, uu};

    NlpProblem& nlp = out.nlp;
    nlp.n_vars = L.n_vars;
    nlp.lower = Vec::Zero(L.n_vars);
    nlp.upper = Vec::Constant(L.n_vars, inf);
    for (int n = 0; n < n_nodes; ++n) {
        if (L.state[n] >= 0) {
            nlp.lower.segment(L.state[n], nx) = xl;
            nlp.upper.segment(L.state[n], nx) = xu;
        }
        if (L.input[n] >= 0) {
            nlp.lower.segment(L.input[n], nu) = ul;
            nlp.upper.segment(L.input[n], nu) = uu;
        }
    }
    nlp.objective = [a](const Vec& v) { return a->objective(v); };
    nlp.objective_grad = [a](const Vec& v) { return Vec(a->hess * v + a->grad_lin); };
    nlp.objective_hess = [a](const Vec&) { return a->hess; };
    nlp.n_eq = L.n_eq;
    nlp.eq_constraints = [a](const Vec& v) { return a->eq(v); };
    nlp.eq_jacobian = [a](const Vec& v) { return a->eq_jac(v); };
    nlp.n_ineq = L.n_ineq;
    if (L.n_ineq > 0) {
        nlp.ineq_constraints = [a](const Vec& v) { return a->ineq(v); };
        nlp.ineq_jacobian = [a](const Vec& v) { return a->ineq_jac(v); };
    }
    return out;
}

Vec OcpProblem::initial_guess(const std::vector<Vec>& input_plan) const {
    const OcpLayout& L = layout;
    const SubsystemModel& m = *model;
    Vec v = Vec::Zero(L.n_vars);
    std::vector<Vec> xs(tree->nodes.size());
    xs[0] = tree->x0;
    const Vec zero_u = Vec::Zero(m.n_u);
    for (std::size_t n = 0; n < tree->nodes.size(); ++n) {
        const TreeNode& node = tree->nodes[n];
        if (n > 0) {
            const Vec up = v.segment(L.input[node.parent], m.n_u);
            Vec x;
            try {
                x = integrate_step(m, xs[node.parent], up + node.edge.a, node.edge.z, node.edge.w, dt);
            } catch (const Error&) {
                x = xs[node.parent];
            }
            x = x.cwiseMax(bounds.x_lower).cwiseMin(bounds.x_upper);
            xs[n] = x;
            v.segment(L.state[n], m.n_x) = x;
            for (std::size_t h = 0; h < cost.hinge.size(); ++h) {
                const double f = cost.hinge[h].f.eval(x, up, node.edge.z);
                v[L.split[n] + 2 * h] = std::max(f, 0.0);
                v[L.split[n] + 2 * h + 1] = std::max(-f, 0.0);
            }
            if (L.terminal[n] >= 0)
                for (std::size_t h = 0; h < cost.terminal.size(); ++h) {
                    const double f = cost.terminal[h].f.eval(
                        x, zero_u, Vec::Zero(cost.terminal[h].f.cz.size()));
                    v[L.terminal[n] + 2 * h] = std::max(f, 0.0);
                    v[L.terminal[n] + 2 * h + 1] = std::max(-f, 0.0);
                }
        }
        if (L.input[n] >= 0) {
            Vec u = zero_u;
            if (!input_plan.empty())
                u = input_plan[std::min<std::size_t>(node.stage, input_plan.size() - 1)];
            v.segment(L.input[n], m.n_u) = u.cwiseMax(bounds.u_lower).cwiseMin(bounds.u_upper);
        }
    }
    return v;
}

OcpSolution extract_solution(const OcpProblem& problem, const Vec& v) {
    const ScenarioTree& tree = *problem.tree;
    const SubsystemModel& m = *problem.model;
    OcpSolution s;
    s.states.resize(tree.nodes.size());
    s.inputs.resize(tree.nodes.size());
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        s.states[n] = n == 0 ? tree.x0 : Vec(v.segment(problem.layout.state[n], m.n_x));
        if (problem.layout.input[n] >= 0) s.inputs[n] = v.segment(problem.layout.input[n], m.n_u);
    }
    for (int n : tree.path(0))
        if (s.inputs[n].size()) s.plan.push_back(s.inputs[n]);
    s.u0 = s.inputs[0];
    s.objective = problem.nlp.objective(v);
    s.report.solution = v;
    return s;
}

OcpSolution solve_ocp(const OcpProblem& problem, const Vec& warm_start,
                      const SolverOptions& options) {
    SolveReport rep = solve(problem.nlp, warm_start, options);
    OcpSolution s = extract_solution(problem, rep.solution);
    s.objective = rep.objective;
    s.report = std::move(rep);
    return s;
}

Contract derive_contracts(const OcpSolution& solution, const ScenarioTree& tree,
                          const SubsystemModel& model, double margin, double dt) {
    Contract c;
    c.subsystem = model.id;
    c.first_interval = tree.first_interval + 1;
    c.dt = dt;
    for (int j = 1; j <= tree.n_p; ++j) {
        Vec lo, hi;
        for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
            if (tree.nodes[n].stage != j) continue;
            const Vec h = model.coupling_fn(solution.states[n]);
            if (lo.size() == 0) {
                lo = h;
                hi = h;
            } else {
                lo = lo.cwiseMin(h);
                hi = hi.cwiseMax(h);
            }
        }
        c.lo.push_back(lo.array() - margin);
        c.hi.push_back(hi.array() + margin);
    }
    return c;
}

LocalController::LocalController(SubsystemModel model, ControllerConfig config, CostBuilder cost)
    : model_(std::make_shared<const SubsystemModel>(std::move(model))),
      config_(std::move(config)),
      cost_(std::move(cost)) {
    model_->validate();
}

ControllerStep LocalController::step(int k, const Vec& x_k, const std::vector<Vec>& attack_set,
                                     const std::map<int, Contract>& neighbor_contracts,
                                     const std::vector<Vec>& param_set) {
    const SubsystemModel& m = *model_;
    const ScenarioTree tree =
        build_tree(m, x_k, k, attack_set, neighbor_contracts, param_set, config_.n_p, config_.tree);
    const OcpCost cost = cost_(x_k, k * config_.dt);

    std::vector<Vec> shifted;
    if (plan_.size() > 1) shifted.assign(plan_.begin() + 1, plan_.end());
    else shifted = plan_;

    ControllerStep out;
    out.leaves = tree.n_leaves();

    auto attempt = [&](const std::optional<Contract>& contract, OcpProblem& problem) {
        problem = assemble_ocp(tree, m, cost, contract, config_.bounds, config_.dt);
        OcpSolution sol;
        try {
            sol = solve_ocp(problem, problem.initial_guess(shifted), config_.solver);
        } catch (const Error& e) {
            out.note = e.what();
            return std::optional<OcpSolution>{};
        }
        const auto st = sol.report.status;
        if (st == SolveStatus::Converged ||
            (st == SolveStatus::MaxIter && sol.report.max_violation <= config_.accept_violation))
            return std::optional<OcpSolution>{std::move(sol)};
        out.note = std::string("solver ") + to_string(st);
        return std::optional<OcpSolution>{};
    };

    OcpProblem problem;
    std::optional<Contract> own;
    if (config_.enforce_own_contract && own_contract_) own = own_contract_;
    std::optional<OcpSolution> sol = attempt(own, problem);
    if (!sol && own) {
        out.contract_relaxed = true;
        sol = attempt(std::nullopt, problem);
    }
    if (!sol) {
        out.fallback = true;
        out.note = "ControllerFallback: " + out.note;
        problem = assemble_ocp(tree, m, cost, std::nullopt, config_.bounds, config_.dt);
        std::vector<Vec> plan = shifted;
        if (plan.empty()) plan.push_back(Vec::Zero(m.n_u));
        sol = extract_solution(problem, problem.initial_guess(plan));
    }
    out.solution = std::move(*sol);
    out.u = out.solution.u0;
    out.contract = derive_contracts(out.solution, tree, m, config_.contract_margin, config_.dt);
    plan_ = out.solution.plan;
    own_contract_ = out.contract;
    return out;
}

}  // namespace rdmpc
