#include <doctest.h>

#include <cmath>
#include <set>

#include "linear_chain.hpp"
#include "rdmpc/dmpc.hpp"
#include "rdmpc/errors.hpp"
#include "toy_ocp.hpp"

using namespace rdmpc;

namespace {

Contract band(int sender, int first, int stages, double lo, double hi) {
    Contract c = Contract::degenerate(sender, Vec::Constant(1, lo), first, stages, 0.25);
    for (auto& h : c.hi) h.setConstant(hi);
    return c;
}

std::vector<Vec> three_attacks() {
    return {Vec::Zero(2), Vec::Constant(2, 0.5), Vec::Constant(2, -0.5)};
}

// (x_0 - 2)^2 + 0.01 |u|^2 on chain node 1
OcpCost chain_cost() {
    OcpCost c;
    LinearFunctional f;
    f.cx = Vec::Zero(2);
    f.cx[0] = 1.0;
    f.cu = Vec::Zero(2);
    f.cz = Vec::Zero(1);
    f.d = -2.0;
    c.quadratic.push_back({1.0, f});
    for (int i = 0; i < 2; ++i) {
        LinearFunctional e;
        e.cx = Vec::Zero(2);
        e.cu = Vec::Zero(2);
        e.cu[i] = 1.0;
        e.cz = Vec::Zero(1);
        c.quadratic.push_back({0.01, e});
    }
    return c;
}

}  // namespace

TEST_CASE("tree without uncertainty is a single path") {
    const auto tree = build_tree(toy::model(), Vec::Constant(1, 0.3), 5, {}, {}, {}, 3);
    CHECK(tree.nodes.size() == 4);
    CHECK(tree.n_leaves() == 1);
    CHECK(tree.alpha[0] == 1.0);
    CHECK(tree.path(0) == std::vector<int>{0, 1, 2, 3});
    CHECK(tree.first_interval == 5);
}

TEST_CASE("tree size grows with the robust horizon") {
    const auto m = chain::make_chain()[0];
    std::map<int, Contract> nc{{2, band(2, 0, 3, -1.0, 1.0)}};
    TreeOptions opt;
    opt.robust_horizon = 2;
    const auto tree = build_tree(m, Vec::Zero(2), 0, three_attacks(), nc, {}, 3, opt);
    CHECK(tree.n_leaves() == 81);
    CHECK(tree.nodes.size() == 1 + 9 + 81 + 81);
    double total = 0.0;
    for (double a : tree.alpha) total += a;
    CHECK(total == doctest::Approx(1.0));
    CHECK(tree.nodes[0].weight == doctest::Approx(1.0));

    // after the robust horizon each branch keeps its realization
    for (int leaf = 0; leaf < tree.n_leaves(); ++leaf) {
        const auto p = tree.path(leaf);
        CHECK(tree.nodes[p[3]].edge.label == tree.nodes[p[2]].edge.label);
        CHECK(tree.nodes[p[3]].edge.z[0] == tree.nodes[p[2]].edge.z[0]);
    }

    opt.robust_horizon = 1;
    CHECK(build_tree(m, Vec::Zero(2), 0, three_attacks(), nc, {}, 3, opt).n_leaves() == 9);
    opt.robust_horizon = 0;
    CHECK(build_tree(m, Vec::Zero(2), 0, three_attacks(), nc, {}, 3, opt).n_leaves() == 1);

    opt.robust_horizon = 2;
    opt.max_leaves = 10;
    CHECK_THROWS_AS(build_tree(m, Vec::Zero(2), 0, three_attacks(), nc, {}, 3, opt), TreeTooLarge);
}

TEST_CASE("identical realizations are merged") {
    const auto m = chain::make_chain()[0];
    std::map<int, Contract> flat{{2, band(2, 0, 2, 0.3, 0.3)}};
    auto tree = build_tree(m, Vec::Zero(2), 0, three_attacks(), flat, {}, 2);
    CHECK(tree.n_leaves() == 3);
    const std::vector<Vec> repeated{Vec::Zero(2), Vec::Zero(2), Vec::Constant(2, 1.0)};
    tree = build_tree(m, Vec::Zero(2), 0, repeated, flat, {}, 2);
    CHECK(tree.n_leaves() == 2);
    std::map<int, Contract> none;
    CHECK_THROWS_AS(build_tree(m, Vec::Zero(2), 0, repeated, none, {}, 2), MissingNeighborData);
}

TEST_CASE("non-anticipativity groups") {
    const auto m = chain::make_chain()[0];
    std::map<int, Contract> nc{{2, band(2, 0, 3, -1.0, 1.0)}};
    TreeOptions opt;
    opt.robust_horizon = 2;
    const auto tree = build_tree(m, Vec::Zero(2), 0, three_attacks(), nc, {}, 3, opt);
    const auto groups = tree.groups();
    CHECK(groups.at(0).size() == 81);
    std::set<int> non_leaf;
    for (std::size_t n = 0; n < tree.nodes.size(); ++n)
        if (!tree.nodes[n].children.empty()) non_leaf.insert(static_cast<int>(n));
    CHECK(groups.size() == non_leaf.size());
    for (const auto& [node, leaves] : groups) {
        // every leaf of a group passes through the group's node, and no other leaf does
        int through = 0;
        for (int i = 0; i < tree.n_leaves(); ++i) {
            const auto p = tree.path(i);
            if (std::find(p.begin(), p.end(), node) != p.end()) ++through;
        }
        CHECK(static_cast<int>(leaves.size()) == through);
        double w = 0.0;
        for (int i : leaves) w += tree.alpha[i];
        CHECK(w == doctest::Approx(tree.nodes[node].weight));
    }
}

TEST_CASE("single scenario matches deterministic single shooting") {
    const auto prob = toy::problem(1.0, {Vec::Zero(1)});
    const auto sol = solve_ocp(prob, prob.initial_guess({Vec::Zero(1)}));
    CHECK(sol.report.status == SolveStatus::Converged);
    const auto ref = solve(toy::single_shooting(1.0), Vec::Zero(4), 1e-10, 1e-10, 200);
    CHECK(ref.status == SolveStatus::Converged);
    CHECK(sol.u0[0] == doctest::Approx(ref.solution[0]).epsilon(1e-6));
    CHECK(sol.plan[1][0] == doctest::Approx(ref.solution[1]).epsilon(1e-6));
    CHECK(sol.objective == doctest::Approx(ref.objective).epsilon(1e-6));
}

TEST_CASE("multi-stage optimum agrees with exhaustive search") {
    const std::vector<double> as{-0.6, 0.0, 0.6};
    std::vector<Vec> attacks;
    for (double a : as) attacks.push_back(Vec::Constant(1, a));
    const auto prob = toy::problem(1.0, attacks);
    const auto sol = solve_ocp(prob, prob.initial_guess({Vec::Zero(1)}));
    CHECK(sol.report.status == SolveStatus::Converged);
    const auto grid = toy::grid_search(1.0, as, 0.005);
    CHECK(sol.objective <= grid.objective + 1e-9);
    CHECK(sol.objective > grid.objective - 1e-3);
    CHECK(std::abs(sol.u0[0] - grid.u0) < 0.02);

    // every scenario respects the state bound
    for (std::size_t n = 1; n < sol.states.size(); ++n) CHECK(sol.states[n][0] <= toy::x_max + 1e-7);

    // hinge splits end complementary
    for (std::size_t n = 1; n < prob.tree->nodes.size(); ++n) {
        const int s = prob.layout.split[n];
        const Vec v = sol.report.solution;
        CHECK(std::min(v[s], v[s + 1]) < 1e-6);
    }
}

TEST_CASE("previous contract bounds the predicted couplings") {
    const auto m = chain::make_chain()[0];
    std::map<int, Contract> nc{{2, band(2, 0, 3, 0.0, 0.0)}};
    const auto tree = build_tree(m, Vec::Zero(2), 0, {}, nc, {}, 3);
    Contract own = band(1, 1, 2, 0.1, 0.1);
    own.lo[1].setConstant(0.0);
    own.hi[1].setConstant(0.2);
    const auto prob = assemble_ocp(tree, m, chain_cost(), own, {}, 0.25);
    CHECK(prob.layout.n_contract_rows == 4);
    const auto sol = solve_ocp(prob, prob.initial_guess({Vec::Zero(2)}));
    CHECK(sol.report.status == SolveStatus::Converged);
    const double z1 = m.coupling_fn(sol.states[1])[0];
    const double z2 = m.coupling_fn(sol.states[2])[0];
    CHECK(z1 == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(z2 <= 0.2 + 1e-6);
    CHECK(z2 >= -1e-6);

    const auto free = assemble_ocp(tree, m, chain_cost(), std::nullopt, {}, 0.25);
    const auto unpinned = solve_ocp(free, free.initial_guess({Vec::Zero(2)}));
    CHECK(m.coupling_fn(unpinned.states[1])[0] > 0.2);
    CHECK(unpinned.objective < sol.objective);

    const Contract derived = derive_contracts(sol, tree, m, 0.01, 0.25);
    CHECK(derived.first_interval == 1);
    CHECK(derived.stages() == 3);
    CHECK(derived.lo_at(1)[0] == doctest::Approx(z1 - 0.01));
    CHECK(derived.hi_at(1)[0] == doctest::Approx(z1 + 0.01));
    CHECK(derived.valid());
}

TEST_CASE("controller shifts its plan and publishes contracts") {
    ControllerConfig cfg;
    cfg.n_p = 2;
    cfg.dt = toy::dt;
    LocalController ctl(toy::model(), cfg, [](const Vec&, double) { return toy::cost(); });
    Vec x = Vec::Constant(1, 1.0);
    const std::vector<Vec> attacks{Vec::Constant(1, -0.6), Vec::Zero(1), Vec::Constant(1, 0.6)};
    for (int k = 0; k < 3; ++k) {
        const auto st = ctl.step(k, x, attacks, {});
        CHECK_FALSE(st.fallback);
        CHECK(st.leaves == 3);
        CHECK(st.contract.first_interval == k + 1);
        x = Vec::Constant(1, toy::step(x[0], st.u[0]));
        CHECK(x[0] <= toy::x_max + 1e-7);
    }
    CHECK(ctl.last_contract().has_value());
}
