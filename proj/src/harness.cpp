#include "rdmpc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rdmpc/adapt.hpp"
#include "rdmpc/adi.hpp"
#include "rdmpc/dmpc.hpp"
#include "rdmpc/errors.hpp"
#include "rdmpc/exchange.hpp"

namespace rdmpc {

using nlohmann::json;

namespace {

int whole(double ratio, const char* what) {
    const double r = std::round(ratio);
    if (!(r >= 1) || std::abs(ratio - r) > 1e-9)
        throw ConfigError(std::string(what) + " is not an integral multiple of dt_h");
    return static_cast<int>(r);
}

const char* kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::None: return "none";
        case AttackKind::Constant: return "constant";
        case AttackKind::ConstantPlusGaussian: return "gaussian";
    }
    return "none";
}

AttackKind parse_kind(const std::string& s) {
    if (s == "none") return AttackKind::None;
    if (s == "constant") return AttackKind::Constant;
    if (s == "gaussian" || s == "constant_plus_gaussian") return AttackKind::ConstantPlusGaussian;
    throw ConfigError("unknown attack kind '" + s + "'");
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

std::vector<PriceBand> parse_bands(const json& j, const char* which) {
    std::vector<PriceBand> bands;
    if (!j.is_array()) throw ConfigError(std::string("prices.") + which + " must be a list");
    for (const auto& e : j) {
        PriceBand b;
        try {
            if (e.is_array() && e.size() == 2) {
                b.from = e[0].at(0).get<double>();
                b.to = e[0].at(1).get<double>();
                b.value = e[1].get<double>();
            } else if (e.is_object()) {
                b.from = e.at("interval").at(0).get<double>();
                b.to = e.at("interval").at(1).get<double>();
                b.value = e.at("value").get<double>();
            } else {
                throw ConfigError("price entry must be [[from, to], value]");
            }
        } catch (const json::exception& ex) {
            throw ConfigError(std::string("bad price entry: ") + ex.what());
        }
        if (!(b.from < b.to)) throw ConfigError("empty price interval");
        bands.push_back(b);
    }
    return bands;
}

json bands_json(const std::vector<PriceBand>& bands) {
    json a = json::array();
    for (const auto& b : bands) a.push_back(json::array({json::array({b.from, b.to}), b.value}));
    return a;
}

std::string fmt(double v) {
    char buf[64];
    if (v == 0.0) v = 0.0;  // no negative zero in output
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

int ExperimentConfig::steps() const { return whole(duration_h / dt_h, "duration_h"); }
int ExperimentConfig::horizon_steps() const { return whole(horizon_h / dt_h, "horizon_h"); }

MicrogridParams ExperimentConfig::params(const GridSpec& g) const {
    MicrogridParams p;
    p.q_st_kah = g.q_st_kah;
    p.r_st_mohm = g.r_st_mohm;
    p.cost.c_g = g.c_g;
    return p;
}

void ExperimentConfig::validate() const {
    if (!(dt_h > 0)) throw ConfigError("dt_h must be positive");
    if (!(duration_h > 0)) throw ConfigError("duration_h must be positive");
    steps();
    horizon_steps();
    if (robust_horizon < 0) throw ConfigError("robust_horizon must be >= 0");
    if (controller != "robust" && controller != "nonrobust")
        throw ConfigError("controller must be robust or nonrobust");
    if (adi_version != 1 && adi_version != 2) throw ConfigError("adi_version must be 1 or 2");
    if (!(tau_d_kw >= 0) || !(eps_i > 0)) throw ConfigError("tau_d_kw/eps_i out of range");
    if (grids.empty()) throw ConfigError("no grids configured");
    std::map<int, const GridSpec*> ids;
    for (const auto& g : grids) {
        if (!ids.emplace(g.id, &g).second) throw ConfigError("duplicate grid id " + std::to_string(g.id));
        if (!(g.soc0 >= 0.0 && g.soc0 <= 1.0)) throw ConfigError("soc0 outside [0, 1]");
        params(g).validate();
    }
    for (const auto& g : grids)
        for (int l : g.neighbors) {
            auto it = ids.find(l);
            if (it == ids.end() || l == g.id)
                throw ConfigError("grid " + std::to_string(g.id) + " has invalid neighbor " + std::to_string(l));
            const auto& back = it->second->neighbors;
            if (std::find(back.begin(), back.end(), g.id) == back.end())
                throw ConfigError("neighbor relation " + std::to_string(g.id) + "-" + std::to_string(l) +
                                  " is not symmetric");
        }
    for (const auto& a : attacks) {
        auto it = ids.find(a.grid);
        if (it == ids.end()) throw ConfigError("attack on unknown grid " + std::to_string(a.grid));
        channel_index(a.channel, it->second->neighbors);
        if (a.stddev_kw < 0) throw ConfigError("negative attack stddev");
    }
    if (!prices.import_dominates()) throw ConfigError("export price above import price");
}

ExperimentConfig ExperimentConfig::paper_default() {
    ExperimentConfig c;
    c.grids = {{1, 100.0, 1.5, 0.2, 0.9, {2, 3}},
               {2, 200.0, 2.0, 3.0, 0.5, {1, 3}},
               {3, 100.0, 3.0, 2.0, 0.6, {1, 2}}};
    return c;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    check_keys(j,
               {"duration_h", "dt_h", "horizon_h", "robust_horizon", "controller", "adi_version",
                "tau_d_kw", "eps_i", "seed", "grids", "attacks", "prices"},
               "config");
    ExperimentConfig c = paper_default();
    read(j, "duration_h", c.duration_h);
    read(j, "dt_h", c.dt_h);
    read(j, "horizon_h", c.horizon_h);
    read(j, "robust_horizon", c.robust_horizon);
    read(j, "controller", c.controller);
    read(j, "adi_version", c.adi_version);
    read(j, "tau_d_kw", c.tau_d_kw);
    read(j, "eps_i", c.eps_i);
    read(j, "seed", c.seed);
    if (j.contains("grids")) {
        c.grids.clear();
        for (const auto& g : j.at("grids")) {
            check_keys(g, {"id", "q_st_kah", "r_st_mohm", "c_g", "soc0", "neighbors"}, "grids[]");
            GridSpec s;
            read(g, "id", s.id);
            read(g, "q_st_kah", s.q_st_kah);
            read(g, "r_st_mohm", s.r_st_mohm);
            read(g, "c_g", s.c_g);
            read(g, "soc0", s.soc0);
            read(g, "neighbors", s.neighbors);
            c.grids.push_back(s);
        }
    }
    if (j.contains("attacks")) {
        for (const auto& a : j.at("attacks")) {
            check_keys(a, {"grid", "kind", "channel", "magnitude_kw", "stddev_kw"}, "attacks[]");
            AttackSpec s;
            std::string kind = "constant";
            read(a, "grid", s.grid);
            read(a, "kind", kind);
            read(a, "channel", s.channel);
            read(a, "magnitude_kw", s.magnitude_kw);
            read(a, "stddev_kw", s.stddev_kw);
            s.kind = parse_kind(kind);
            c.attacks.push_back(s);
        }
    }
    if (j.contains("prices")) {
        const json& p = j.at("prices");
        check_keys(p, {"import", "export"}, "prices");
        if (p.contains("import")) c.prices.import_bands = parse_bands(p.at("import"), "import");
        if (p.contains("export")) c.prices.export_bands = parse_bands(p.at("export"), "export");
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["duration_h"] = duration_h;
    j["dt_h"] = dt_h;
    j["horizon_h"] = horizon_h;
    j["robust_horizon"] = robust_horizon;
    j["controller"] = controller;
    j["adi_version"] = adi_version;
    j["tau_d_kw"] = tau_d_kw;
    j["eps_i"] = eps_i;
    j["seed"] = seed;
    j["grids"] = json::array();
    for (const auto& g : grids)
        j["grids"].push_back({{"id", g.id}, {"q_st_kah", g.q_st_kah}, {"r_st_mohm", g.r_st_mohm},
                              {"c_g", g.c_g}, {"soc0", g.soc0}, {"neighbors", g.neighbors}});
    j["attacks"] = json::array();
    for (const auto& a : attacks)
        j["attacks"].push_back({{"grid", a.grid}, {"kind", kind_name(a.kind)}, {"channel", a.channel},
                                {"magnitude_kw", a.magnitude_kw}, {"stddev_kw", a.stddev_kw}});
    j["prices"] = {{"import", bands_json(prices.import_bands)}, {"export", bands_json(prices.export_bands)}};
    return j.dump(2);
}

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t counter) const {
    // splitmix64 finalizer over a mixed key
    std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (counter + 1) + 0xd1b54a32d192ed03ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t counter) const {
    return (static_cast<double>(bits(stream, counter) >> 11) + 1.0) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t stream, std::uint64_t counter) const {
    const double u1 = uniform(stream, 2 * counter);
    const double u2 = uniform(stream, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int channel_index(const std::string& channel, const std::vector<int>& neighbors) {
    if (channel == "g") return mg::u_gen;
    if (channel == "m") return mg::u_main;
    if (channel.rfind("tr_", 0) == 0) {
        int l = 0;
        try {
            l = std::stoi(channel.substr(3));
        } catch (const std::exception&) {
            throw ConfigError("bad channel '" + channel + "'");
        }
        for (std::size_t i = 0; i < neighbors.size(); ++i)
            if (neighbors[i] == l) return mg::u_tr0 + static_cast<int>(i);
    }
    throw ConfigError("unknown channel '" + channel + "'");
}

std::vector<std::string> channel_names(const std::vector<int>& neighbors) {
    std::vector<std::string> n{"g", "m"};
    for (int l : neighbors) n.push_back("tr_" + std::to_string(l));
    return n;
}

Vec inject_attack(const AttackSpec& spec, int k, const Vec& u, const std::vector<int>& neighbors,
                  const CounterRng& rng, std::uint64_t stream) {
    Vec a = Vec::Zero(u.size());
    if (spec.kind == AttackKind::None) return a;
    const int c = channel_index(spec.channel, neighbors);
    double v = spec.magnitude_kw;
    if (spec.kind == AttackKind::ConstantPlusGaussian) {
        v += spec.stddev_kw * rng.normal(stream, static_cast<std::uint64_t>(k));
        if (c == mg::u_gen) v = std::max(v, -u[c]);
    }
    a[c] = v;
    return a;
}

namespace {

// The plant evaluates the battery with the SoC held inside the model domain; the clamp and
// violation count happen after the step.
SubsystemModel plant_model(SubsystemModel m) {
    RhsFn inner = m.rhs;
    m.rhs = [inner](const Vec& x, const Vec& v, const Vec& z, const Vec& w) {
        if (x[mg::soc] >= 2 * soc_eps) return inner(x, v, z, w);
        Vec xs = x;
        xs[mg::soc] = 2 * soc_eps;
        return inner(xs, v, z, w);
    };
    return m;
}

struct GridState {
    GridSpec spec;
    MicrogridParams params;
    SubsystemModel model;
    SubsystemModel plant;
    std::unique_ptr<LocalController> controller;
    AttackStats stats;
    Vec x;
    Vec nominal;       // own nominal coupling for the current interval
    Vec nominal_prev;  // and for the previous one
    Vec x_prev, u_prev, nominal_in_prev;
    std::map<int, Contract> inbox;
    GridTrace trace;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool verbose) {
    cfg.validate();
    const int n_steps = cfg.steps();
    const int n_p = cfg.horizon_steps();
    const double dt = cfg.dt_h;
    const bool robust = cfg.robust();
    const CounterRng rng(cfg.seed);

    std::vector<GridState> grids;
    grids.reserve(cfg.grids.size());
    std::vector<SubsystemModel> models;
    for (const auto& g : cfg.grids) {
        GridState s;
        s.spec = g;
        s.params = cfg.params(g);
        s.model = make_microgrid_model(g.id, g.neighbors, s.params);
        s.plant = plant_model(s.model);
        s.stats = AttackStats(s.model.n_u);
        s.x = Vec::Zero(s.model.n_x);
        s.x[mg::soc] = g.soc0;
        s.nominal = s.model.coupling_fn(s.x);
        s.trace.id = g.id;
        s.trace.neighbors = g.neighbors;
        s.trace.soc0 = g.soc0;
        models.push_back(s.model);

        ControllerConfig cc;
        cc.n_p = n_p;
        cc.dt = dt;
        cc.tree.robust_horizon = robust ? cfg.robust_horizon : 0;
        cc.tree.coupling_bounds = robust;
        cc.contract_margin = robust ? 1e-3 : 0.0;
        cc.enforce_own_contract = robust;
        cc.bounds.x_lower = s.model.x_lower;
        cc.bounds.x_lower[mg::soc] = 0.01;
        cc.bounds.x_upper = s.model.x_upper;
        const MicrogridParams p = s.params;
        const PriceSchedule prices = cfg.prices;
        s.controller = std::make_unique<LocalController>(
            s.model, cc, [p, prices, dt, n_p](const Vec& x_k, double t_k) {
                return microgrid_ocp_cost(p, prices, x_k, t_k, dt, n_p);
            });
        grids.push_back(std::move(s));
    }
    check_topology(models);
    std::map<int, std::size_t> index;
    for (std::size_t i = 0; i < grids.size(); ++i) index[grids[i].spec.id] = i;

    std::map<int, std::vector<int>> topology;
    for (const auto& g : grids) topology[g.spec.id] = g.spec.neighbors;
    Bus bus(topology);

    // initial contracts {h(x0)}
    for (auto& g : grids)
        for (int l : g.spec.neighbors) {
            const auto& src = grids[index[l]];
            g.inbox[l] = Contract::degenerate(l, src.model.coupling_fn(src.x), 0, n_p, dt)
                             .for_receiver(src.model, g.spec.id);
        }

    std::vector<std::vector<const AttackSpec*>> attacks(grids.size());
    std::vector<std::vector<std::uint64_t>> streams(grids.size());
    for (std::size_t a = 0; a < cfg.attacks.size(); ++a) {
        const std::size_t i = index[cfg.attacks[a].grid];
        attacks[i].push_back(&cfg.attacks[a]);
        streams[i].push_back(a);
    }

    ExperimentResult result;
    const DetectionConfig dcfg = [&] {
        DetectionConfig d;
        d.tau_d = cfg.tau_d_kw;
        d.eps = cfg.eps_i;
        return d;
    }();

    for (int k = 0; k < n_steps; ++k) {
        // (1) local solves
        std::vector<std::future<ControllerStep>> jobs;
        for (auto& g : grids) {
            std::vector<Vec> attack_set =
                robust ? attack_scenarios(g.stats) : std::vector<Vec>{Vec::Zero(g.model.n_u)};
            jobs.push_back(std::async(std::launch::async, [&g, k, attack_set] {
                return g.controller->step(k, g.x, attack_set, g.inbox);
            }));
        }
        std::vector<ControllerStep> steps;
        for (auto& j : jobs) steps.push_back(j.get());

        // (2) contract exchange
        for (std::size_t i = 0; i < grids.size(); ++i) {
            const auto& g = grids[i];
            for (int l : g.spec.neighbors)
                bus.post(Message{g.spec.id, l, 2L * k, ContractMsg{steps[i].contract.for_receiver(g.model, l)}});
            if (steps[i].fallback) ++result.fallbacks;
            if (steps[i].contract_relaxed) ++result.relaxed_contracts;
            if (verbose && (steps[i].fallback || steps[i].contract_relaxed))
                std::fprintf(stderr, "step %d grid %d: %s%s\n", k, g.spec.id,
                             steps[i].contract_relaxed ? "own contract relaxed " : "",
                             steps[i].note.c_str());
        }
        std::vector<std::map<int, Contract>> next_inbox(grids.size());
        for (std::size_t i = 0; i < grids.size(); ++i)
            for (const auto& m : bus.collect(grids[i].spec.id, 2L * k, {MessageKind::Contract}))
                next_inbox[i][m.sender] = std::get<ContractMsg>(m.payload).contract;
        bus.close_round(2L * k);

        // (3) plant step
        std::vector<Vec> z_in(grids.size()), a_true(grids.size()), x_next(grids.size());
        std::vector<bool> violated(grids.size(), false);
        for (std::size_t i = 0; i < grids.size(); ++i) {
            auto& g = grids[i];
            std::map<int, Vec> from;
            for (int l : g.spec.neighbors) {
                const auto& src = grids[index[l]];
                from[l] = outgoing_coupling(src.model, src.model.coupling_fn(src.x), g.spec.id);
            }
            z_in[i] = gather_incoming(g.model, from);
            a_true[i] = Vec::Zero(g.model.n_u);
            for (std::size_t a = 0; a < attacks[i].size(); ++a)
                a_true[i] += inject_attack(*attacks[i][a], k, steps[i].u + a_true[i], g.spec.neighbors,
                                           rng, streams[i][a]);
            Vec xn = integrate_step(g.plant, g.x, steps[i].u + a_true[i], z_in[i], Vec::Zero(g.model.n_w), dt);
            const double s = xn[mg::soc];
            violated[i] = s > g.params.soc_max + 1e-6 || s < g.params.soc_min - 1e-6;
            xn[mg::soc] = std::clamp(s, g.params.soc_min, g.params.soc_max);
            x_next[i] = xn;
        }

        // nominal couplings for the next interval
        std::vector<Vec> nominal_next(grids.size());
        for (std::size_t i = 0; i < grids.size(); ++i) {
            auto& g = grids[i];
            std::map<int, Mat> nom;
            for (int l : g.spec.neighbors) {
                const auto& src = grids[index[l]];
                nom[l] = outgoing_coupling(src.model, src.nominal, g.spec.id);
            }
            nominal_next[i] = nominal_coupling_step(g.model, g.x, steps[i].u, nom, dt).col(0);
        }

        // (4) identification
        AdiOutput adi;
        if (robust) {
            std::vector<AdiInput> snap(grids.size());
            for (std::size_t i = 0; i < grids.size(); ++i) {
                auto& g = grids[i];
                AdiInput& in = snap[i];
                in.model = &g.model;
                in.x_k = g.x;
                in.u_k = steps[i].u;
                in.y_k1 = g.model.output_fn(x_next[i]);
                in.nominal_k = g.nominal;
                in.measured_k = g.model.coupling_fn(g.x);
                in.deviation_k1 = g.model.coupling_fn(x_next[i]) - nominal_next[i];
                in.has_prev = k > 0;
                if (k > 0) {
                    in.x_prev = g.x_prev;
                    in.u_prev = g.u_prev;
                    in.nominal_in_prev = g.nominal_in_prev;
                }
            }
            adi = run_distributed_adi(snap, cfg.adi_version, dcfg, bus, 2L * k + 1, dt, true);
            for (const auto& [id, what] : adi.errors)
                if (verbose) std::fprintf(stderr, "step %d grid %d: identification failed: %s\n", k, id, what.c_str());
        }

        // (5) statistics, records, state advance
        for (std::size_t i = 0; i < grids.size(); ++i) {
            auto& g = grids[i];
            StepRecord r;
            r.step = k;
            r.time_h = (k + 1) * dt;
            r.x = x_next[i];
            r.u = steps[i].u;
            r.a_true = a_true[i];
            r.a_star = Vec::Zero(g.model.n_u);
            if (robust) {
                const Suspicion& s = adi.suspicions.at(g.spec.id);
                if (s.a_star.size() == g.model.n_u) r.a_star = s.a_star;
                if (!adi.errors.count(g.spec.id)) update_stats_in_place(g.stats, r.a_star);
                r.detected = adi.local_detection.at(g.spec.id);
            }
            if (g.stats.count > 0) {
                r.mu_g = g.stats.mean[mg::u_gen];
                r.sigma_g = g.stats.sigma()[mg::u_gen];
            }
            r.stage_cost = realized_stage_cost(x_next[i], z_in[i], k * dt, g.params, cfg.prices);
            r.violation = violated[i];
            r.fallback = steps[i].fallback;
            g.trace.records.push_back(std::move(r));

            std::map<int, Vec> nom_in;
            for (int l : g.spec.neighbors) {
                const auto& src = grids[index[l]];
                nom_in[l] = outgoing_coupling(src.model, src.nominal, g.spec.id);
            }
            g.nominal_in_prev = gather_incoming(g.model, nom_in);
            g.x_prev = g.x;
            g.u_prev = steps[i].u;
        }
        for (std::size_t i = 0; i < grids.size(); ++i) {
            grids[i].nominal_prev = grids[i].nominal;
            grids[i].nominal = nominal_next[i];
            grids[i].x = x_next[i];
            grids[i].inbox = std::move(next_inbox[i]);
        }
        if (verbose) {
            std::fprintf(stderr, "step %3d", k);
            for (const auto& g : grids) {
                const auto& r = g.trace.records.back();
                std::fprintf(stderr, " | %d s=%.4f a*=%.4f c=%.2f%s", g.spec.id, r.x[mg::soc],
                             r.a_star[mg::u_gen], r.stage_cost, r.violation ? " V" : "");
            }
            std::fprintf(stderr, "\n");
        }
    }

    for (auto& g : grids) {
        g.trace.terminal_cost = terminal_cost_m(g.spec.soc0, g.x[mg::soc], g.params);
        result.traces.push_back(std::move(g.trace));
    }
    result.summary = summarize(result.traces);
    return result;
}

SummaryRow summarize(const GridTrace& trace) {
    SummaryRow s;
    s.grid = trace.id;
    for (const auto& r : trace.records) {
        s.total_cost += r.stage_cost;
        s.violations += r.violation ? 1 : 0;
        s.detections += r.detected ? 1 : 0;
    }
    s.total_cost += trace.terminal_cost;
    if (!trace.records.empty()) {
        s.final_mu_g = trace.records.back().mu_g;
        s.final_sigma_g = trace.records.back().sigma_g;
    }
    return s;
}

std::vector<SummaryRow> summarize(const std::vector<GridTrace>& traces) {
    std::vector<SummaryRow> rows;
    for (const auto& t : traces) rows.push_back(summarize(t));
    return rows;
}

std::string trace_csv(const GridTrace& trace) {
    const auto names = channel_names(trace.neighbors);
    std::string out = "step,time_h,soc,p_g,p_m";
    for (int l : trace.neighbors) out += ",p_tr_" + std::to_string(l);
    out += ",u_g,u_m";
    for (int l : trace.neighbors) out += ",u_tr_" + std::to_string(l);
    for (const auto& n : names) out += ",a_true_" + n;
    for (const auto& n : names) out += ",a_star_" + n;
    out += ",mu_g,sigma_g,detected,stage_cost,violation\n";
    for (const auto& r : trace.records) {
        std::string line = std::to_string(r.step) + "," + fmt(r.time_h);
        for (int i = 0; i < r.x.size(); ++i) line += "," + fmt(r.x[i]);
        for (int i = 0; i < r.u.size(); ++i) line += "," + fmt(r.u[i]);
        for (int i = 0; i < r.a_true.size(); ++i) line += "," + fmt(r.a_true[i]);
        for (int i = 0; i < r.a_star.size(); ++i) line += "," + fmt(r.a_star[i]);
        line += "," + fmt(r.mu_g) + "," + fmt(r.sigma_g) + "," + (r.detected ? "1" : "0") + "," +
                fmt(r.stage_cost) + "," + (r.violation ? "1" : "0") + "\n";
        out += line;
    }
    return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "grid,total_cost,violations,detections,final_mu_g,final_sigma_g\n";
    for (const auto& r : rows)
        out += std::to_string(r.grid) + "," + fmt(r.total_cost) + "," + std::to_string(r.violations) +
               "," + std::to_string(r.detections) + "," + fmt(r.final_mu_g) + "," +
               fmt(r.final_sigma_g) + "\n";
    return out;
}

void write_outputs(const ExperimentResult& result, const std::string& dir) {
    std::filesystem::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + name + " in " + dir);
        f << text;
    };
    for (const auto& t : result.traces) write("trace_" + std::to_string(t.id) + ".csv", trace_csv(t));
    write("summary.csv", summary_csv(result.summary));
}

std::vector<SummaryRow> read_summary(const std::string& dir) {
    std::ifstream f(std::filesystem::path(dir) / "summary.csv");
    if (!f) throw std::runtime_error("no summary.csv in " + dir);
    std::string line;
    std::getline(f, line);
    if (line != "grid,total_cost,violations,detections,final_mu_g,final_sigma_g")
        throw std::runtime_error("unexpected summary header: " + line);
    std::vector<SummaryRow> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> c;
        while (std::getline(ss, cell, ',')) c.push_back(cell);
        if (c.size() != 6) throw std::runtime_error("malformed summary row: " + line);
        rows.push_back({std::stoi(c[0]), std::stod(c[1]), std::stoi(c[2]), std::stoi(c[3]),
                        std::stod(c[4]), std::stod(c[5])});
    }
    return rows;
}

std::string format_summary(const std::vector<SummaryRow>& rows) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-6s %14s %11s %11s %12s %14s\n", "grid", "total_cost",
                  "violations", "detections", "final_mu_g", "final_sigma_g");
    out += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-6d %14.4f %11d %11d %12.6f %14.6f\n", r.grid, r.total_cost,
                      r.violations, r.detections, r.final_mu_g, r.final_sigma_g);
        out += buf;
    }
    return out;
}

}  // namespace rdmpc
