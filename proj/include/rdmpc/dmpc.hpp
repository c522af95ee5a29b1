#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rdmpc/contract.hpp"
#include "rdmpc/cost.hpp"
#include "rdmpc/dynamics.hpp"
#include "rdmpc/solver.hpp"
#include "rdmpc/types.hpp"

namespace rdmpc {

struct TreeOptions {
    int robust_horizon = 1;
    int max_leaves = 729;
    double dedup_tol = 1e-9;
    // branch on {lo, mid, hi} of neighbor contracts; false uses the midpoint only
    bool coupling_bounds = true;
};

// Values realized on the edge into a node.
struct Realization {
    Vec a;
    Vec z;
    Vec w;
    std::vector<int> label;  // attack index, coupling choice per component, parameter index
};

struct TreeNode {
    int stage = 0;
    int parent = -1;
    Realization edge;
    std::vector<int> children;
    double weight = 0.0;  // total leaf weight below this node
};

struct ScenarioTree {
    int n_p = 0;
    int first_interval = 0;
    Vec x0;
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    std::vector<int> leaves;
    std::vector<double> alpha;  // per leaf

    int n_leaves() const { return static_cast<int>(leaves.size()); }
    // Leaves sharing each non-leaf node's input (non-anticipativity groups), keyed by node.
    std::map<int, std::vector<int>> groups() const;
    std::vector<int> path(int leaf) const;  // node indices root..leaf
};

ScenarioTree build_tree(const SubsystemModel& model, const Vec& x_k, int k,
                        const std::vector<Vec>& attack_set,
                        const std::map<int, Contract>& neighbor_contracts,
                        const std::vector<Vec>& param_set, int n_p,
                        const TreeOptions& options = {});

struct OcpBounds {
    Vec x_lower, x_upper, u_lower, u_upper;
};

struct OcpLayout {
    std::vector<int> input;     // per node, -1 for leaves
    std::vector<int> state;     // per node, -1 for the root
    std::vector<int> split;     // per node, first hinge split variable, -1 for the root
    std::vector<int> terminal;  // per node, first terminal split variable, -1 for non-leaves
    int n_vars = 0;
    int n_eq = 0;
    int n_ineq = 0;
    int n_contract_rows = 0;
};

struct OcpProblem {
    NlpProblem nlp;
    OcpLayout layout;
    std::shared_ptr<const ScenarioTree> tree;
    std::shared_ptr<const SubsystemModel> model;
    OcpCost cost;
    OcpBounds bounds;
    double dt = 0.25;

    // Inputs per stage (tail repeated) simulated along every branch.
    Vec initial_guess(const std::vector<Vec>& input_plan) const;
};

OcpProblem assemble_ocp(const ScenarioTree& tree, const SubsystemModel& model, const OcpCost& cost,
                        const std::optional<Contract>& prev_contract, const OcpBounds& bounds,
                        double dt);

struct OcpSolution {
    Vec u0;
    std::vector<Vec> states;  // per node, root holds x_k
    std::vector<Vec> inputs;  // per node, empty for leaves
    std::vector<Vec> plan;    // inputs along the first leaf path, one per stage
    double objective = 0.0;
    SolveReport report;
};

OcpSolution solve_ocp(const OcpProblem& problem, const Vec& warm_start,
                      const SolverOptions& options = {});

// Per-stage coupling ranges over all nodes of a solved tree, inflated by `margin`; covers
// intervals first_interval + 1 .. first_interval + n_p.
Contract derive_contracts(const OcpSolution& solution, const ScenarioTree& tree,
                          const SubsystemModel& model, double margin = 1e-3, double dt = 0.25);

// Node states and inputs stored in an OCP variable vector.
OcpSolution extract_solution(const OcpProblem& problem, const Vec& v);

struct ControllerConfig {
    int n_p = 24;
    double dt = 0.25;
    TreeOptions tree;
    double contract_margin = 1e-3;
    bool enforce_own_contract = true;
    double accept_violation = 1e-4;
    OcpBounds bounds;
    SolverOptions solver = [] {
        SolverOptions o;
        o.max_iter = 60;
        return o;
    }();
};

using CostBuilder = std::function<OcpCost(const Vec& x_k, double t_k)>;

struct ControllerStep {
    Vec u;
    Contract contract;
    OcpSolution solution;
    int leaves = 0;
    bool fallback = false;
    bool contract_relaxed = false;
    std::string note;
};

// One multi-stage NMPC instance per subsystem.
class LocalController {
public:
    LocalController(SubsystemModel model, ControllerConfig config, CostBuilder cost);

    ControllerStep step(int k, const Vec& x_k, const std::vector<Vec>& attack_set,
                        const std::map<int, Contract>& neighbor_contracts,
                        const std::vector<Vec>& param_set = {});

    const SubsystemModel& model() const { return *model_; }
    const std::optional<Contract>& last_contract() const { return own_contract_; }

private:
    std::shared_ptr<const SubsystemModel> model_;
    ControllerConfig config_;
    CostBuilder cost_;
    std::vector<Vec> plan_;
    std::optional<Contract> own_contract_;
};

}  // namespace rdmpc
