// Acceptance driver: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "linear_chain.hpp"
#include "rdmpc/harness.hpp"
#include "rdmpc/microgrid.hpp"
#include "toy_ocp.hpp"

using namespace rdmpc;
namespace fs = std::filesystem;

namespace {

std::map<int, std::pair<bool, std::string>> results;

void report(int id, bool ok, const std::string& what) {
    results[id] = {ok, what};
    std::fprintf(stderr, "criterion %d done: %s\n", id, ok ? "pass" : "fail");
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

ExperimentResult run(const ExperimentConfig& cfg, const char* label) {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_experiment(cfg);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%s] %d steps in %.1f s, fallbacks %d\n", label, cfg.steps(), s, r.fallbacks);
    return r;
}

ExperimentConfig with_controller(ExperimentConfig c, const char* ctl) {
    c.controller = ctl;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Experiment 1: identification, constraints, costs.
void experiment1(const ExperimentConfig& cfg) {
    const auto rob = run(with_controller(cfg, "robust"), "exp1 robust");
    const auto non = run(with_controller(cfg, "nonrobust"), "exp1 nonrobust");

    const auto& recs = rob.traces[0].records;
    int close = 0;
    for (const auto& r : recs) close += std::abs(r.a_star[mg::u_gen] - 10.0) <= 0.1;
    const double share = static_cast<double>(close) / recs.size();
    const double mu = rob.summary[0].final_mu_g;
    report(1, share >= 0.95 && mu >= 9.95 && mu <= 10.05,
           fmt("a*_g within 10 +- 0.1 kW in %.1f%% of %zu steps, final mu %.6f kW", 100 * share,
               recs.size(), mu));

    const int vr = rob.summary[0].violations, vn = non.summary[0].violations;
    report(2, vr == 0 && vn >= 120,
           fmt("SoC violations robust %d, nonrobust %d (need 0 and >= 120)", vr, vn));

    const double cr = rob.summary[0].total_cost, cn = non.summary[0].total_cost;
    const double ratio = std::abs(cn) / std::max(std::abs(cr), 1e-12);
    report(3, cr < 0 && cn > 0 && ratio >= 10,
           fmt("MG1 total cost robust %.1f, nonrobust %.1f, |nonrobust/robust| = %.2f (need <0, >0, >= 10)",
               cr, cn, ratio));
}

void experiment2(const ExperimentConfig& cfg) {
    const auto rob = run(with_controller(cfg, "robust"), "exp2 robust");
    const auto non = run(with_controller(cfg, "nonrobust"), "exp2 nonrobust");
    const auto& r = rob.summary[0];
    const auto& n = non.summary[0];
    const double ratio = n.total_cost / r.total_cost;
    const bool ok = r.final_mu_g >= 8.5 && r.final_mu_g <= 11.5 && r.final_sigma_g >= 5 &&
                    r.final_sigma_g <= 11 && r.violations == 0 && n.violations >= 80 &&
                    r.total_cost < n.total_cost && r.total_cost > 0 && ratio >= 5;
    report(4, ok,
           fmt("mu %.3f, sigma %.3f, violations robust %d / nonrobust %d, cost robust %.1f / "
               "nonrobust %.1f (ratio %.2f, need >= 5)",
               r.final_mu_g, r.final_sigma_g, r.violations, n.violations, r.total_cost,
               n.total_cost, ratio));
}

void properties() {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = ExperimentConfig::paper_default();
    cfg.duration_h = 5.0;
    const auto res = run_experiment(cfg);

    // balance p_g + p_m + p_l + sum(p_tr_LI - p_tr_IL) + p_st = 0 with p_st carried by the
    // battery current; incoming transfers are the neighbors' values at the interval start
    std::map<int, const GridTrace*> by_id;
    for (const auto& t : res.traces) by_id[t.id] = &t;
    double balance = 0.0, battery = 0.0;
    int steps = 0;
    for (const auto& g : cfg.grids) {
        const auto& tr = *by_id[g.id];
        const auto p = cfg.params(g);
        for (std::size_t k = 0; k < tr.records.size(); ++k) {
            const Vec& x = tr.records[k].x;
            Vec z(g.neighbors.size());
            for (std::size_t j = 0; j < g.neighbors.size(); ++j) {
                const auto& nb = *by_id[g.neighbors[j]];
                const auto& nn = nb.neighbors;
                const int col = static_cast<int>(std::find(nn.begin(), nn.end(), g.id) - nn.begin());
                z[j] = k == 0 ? 0.0 : nb.records[k - 1].x[mg::tr0 + col];
            }
            const double ps = storage_power(x, z, p);
            double sum = x[mg::gen] + x[mg::grid] + p.p_load + ps;
            for (int j = 0; j < z.size(); ++j) sum += z[j] - x[mg::tr0 + j];
            balance = std::max(balance, std::abs(sum));
            const double u = ocv(x[mg::soc], p.ocv);
            const double cur = battery_current(x[mg::soc], ps, p);
            battery = std::max(battery, std::abs(u * cur + p.r_st() * cur * cur - ps));
            ++steps;
        }
    }

    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> s_dist(0.01, 1.0), p_dist(-200.0, 200.0);
    const MicrogridParams mp;
    double quad = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double s = s_dist(gen), pw = p_dist(gen);
        const double u = ocv(s, mp.ocv);
        const double cur = battery_current(s, pw, mp);
        quad = std::max(quad, std::abs(u * cur + mp.r_st() * cur * cur - pw));
    }

    const double v1 = ocv(1.0, mp.ocv);

    const auto m = make_microgrid_model(1, {2, 3}, mp);
    Vec x = Vec::Zero(m.n_x);
    x[mg::soc] = 0.9;
    Vec u = Vec::Zero(m.n_u);
    u[mg::u_gen] = 10.0;
    const double exact = 10.0 * (1.0 - std::exp(-2.5));
    const double rk_err = std::abs(integrate_step(m, x, u, Vec::Zero(2), Vec(), 0.25)[mg::gen] - exact);
    // the same lag through plain RK4 with 4 substeps, for reference
    SubsystemModel plain = m;
    plain.lags.clear();
    plain.rhs = [](const Vec& y, const Vec& v, const Vec&, const Vec&) {
        Vec d = Vec::Zero(y.size());
        d[mg::gen] = (v[mg::u_gen] - y[mg::gen]) / 0.1;
        return d;
    };
    const double plain_err = std::abs(integrate_step(plain, x, u, Vec::Zero(2), Vec(), 0.25)[mg::gen] - exact);

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(5, steps == 60 && balance <= 1e-9 && battery <= 1e-9 && quad <= 1e-9 && v1 == 2.5651 &&
                  rk_err <= 1e-3 && secs < 60,
           fmt("balance %.2e and battery %.2e over %d grid-steps, quadratic %.2e on 1000 points, "
               "ocv(1) = %.10g, lag step error %.2e (plain RK4 %.2e), %.1f s",
               balance, battery, steps, quad, v1, rk_err, plain_err, secs));
}

void identification_oracle() {
    int v1 = 0, v2 = 0, oracle = 0;
    constexpr int trials = 100;
    for (int t = 0; t < trials; ++t) {
        const auto r = chain::run_trial(static_cast<std::uint64_t>(t), 0.01, 1e-3);
        v1 += r.v1 == r.truth && r.v1 == r.oracle;
        v2 += r.v2 == r.truth && r.v2 == r.oracle;
        oracle += r.oracle == r.truth;
    }
    report(6, v1 == trials && v2 == trials && oracle == trials,
           fmt("attacked channel recovered: version 1 %d/%d, version 2 %d/%d, oracle %d/%d", v1,
               trials, v2, trials, oracle, trials));
}

void multistage() {
    const auto single = toy::problem(1.0, {Vec::Zero(1)});
    const auto s = solve_ocp(single, single.initial_guess({Vec::Zero(1)}));
    const auto ref = solve(toy::single_shooting(1.0), Vec::Zero(4), 1e-10, 1e-10, 200);
    const double d_single = std::max({std::abs(s.u0[0] - ref.solution[0]),
                                      std::abs(s.plan[1][0] - ref.solution[1]),
                                      std::abs(s.objective - ref.objective)});

    const std::vector<double> as{-0.6, 0.0, 0.6};
    std::vector<Vec> attacks;
    for (double a : as) attacks.push_back(Vec::Constant(1, a));
    const auto multi = toy::problem(1.0, attacks);
    const auto sol = solve_ocp(multi, multi.initial_guess({Vec::Zero(1)}));
    constexpr double h = 0.005;
    const auto grid = toy::grid_search(1.0, as, h);
    // objective is smooth in the inputs: a grid optimum is within O(h^2) of the true one
    const bool grid_ok = sol.objective <= grid.objective + 1e-9 && sol.objective > grid.objective - 1e-3 &&
                         std::abs(sol.u0[0] - grid.u0) <= 4 * h;

    const auto& tree = *multi.tree;
    bool structure = true;
    const auto groups = tree.groups();
    for (const auto& [node, leaves] : groups) {
        std::size_t through = 0;
        for (int i = 0; i < tree.n_leaves(); ++i) {
            const auto p = tree.path(i);
            through += std::find(p.begin(), p.end(), node) != p.end();
        }
        structure = structure && leaves.size() == through && multi.layout.input[node] >= 0;
    }
    // one input block per non-leaf node: inputs shared inside a group are a single variable
    int inputs = 0;
    for (int v : multi.layout.input) inputs += v >= 0;
    structure = structure && inputs == static_cast<int>(groups.size()) && groups.at(0).size() == 3;

    report(7, s.report.status == SolveStatus::Converged && d_single <= 1e-6 && grid_ok && structure,
           fmt("singleton vs deterministic %.2e, multi-stage %.6f vs grid %.6f (u0 %.4f vs %.4f), "
               "%zu groups structurally %s",
               d_single, sol.objective, grid.objective, sol.u0[0], grid.u0, groups.size(),
               structure ? "consistent" : "inconsistent"));
}

void reproducibility(ExperimentConfig cfg) {
    cfg.duration_h = 3.0;
    const fs::path base = fs::temp_directory_path() / "rdmpc_acceptance";
    fs::remove_all(base);
    write_outputs(run_experiment(cfg), (base / "a").string());
    write_outputs(run_experiment(cfg), (base / "b").string());
    int files = 0, same = 0;
    for (const auto& e : fs::directory_iterator(base / "a")) {
        ++files;
        const auto other = base / "b" / e.path().filename();
        same += fs::exists(other) && slurp(e.path()) == slurp(other);
    }
    fs::remove_all(base);
    report(8, files == 4 && same == files,
           fmt("%d of %d output files byte-identical across two seeded runs", same, files));
}

}  // namespace

int main(int argc, char** argv) {
    fs::path configs = "configs";
    bool quick = false;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--quick") quick = true;
        else configs = argv[i];
    }
    try {
        const auto e1 = ExperimentConfig::load((configs / "experiment1.json").string());
        const auto e2 = ExperimentConfig::load((configs / "experiment2.json").string());
        properties();
        identification_oracle();
        multistage();
        reproducibility(e2);
        if (!quick) {
            experiment1(e1);
            experiment2(e2);
        }
    } catch (const std::exception& e) {
        std::printf("FAIL acceptance aborted: %s\n", e.what());
        return 2;
    }
    int failures = 0;
    for (int id = 1; id <= 8; ++id) {
        auto it = results.find(id);
        const bool ok = it != results.end() && it->second.first;
        std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id,
                    it == results.end() ? "not run" : it->second.second.c_str());
        failures += !ok;
    }
    return failures == 0 ? 0 : 1;
}
