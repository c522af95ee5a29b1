#include <chrono>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "rdmpc/errors.hpp"
#include "rdmpc/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"rdmpc: resilient distributed MPC for coupled microgrids"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "run a closed-loop experiment");
    std::string config_path, controller, out_dir = "out";
    int adi_version = 0;
    std::int64_t seed = -1;
    bool verbose = false;
    sim->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sim->add_option("--controller", controller, "override controller mode")
        ->check(CLI::IsMember({"robust", "nonrobust"}));
    sim->add_option("--adi-version", adi_version, "override identification version")
        ->check(CLI::IsMember({1, 2}));
    sim->add_option("--seed", seed, "override RNG seed")->check(CLI::NonNegativeNumber);
    sim->add_option("--out", out_dir, "output directory");
    sim->add_flag("-v,--verbose", verbose, "per-step progress on stderr");

    auto* rep = app.add_subcommand("report", "print the summary table of a run");
    std::string in_dir;
    rep->add_option("--in", in_dir, "output directory of a run")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            auto cfg = rdmpc::ExperimentConfig::load(config_path);
            if (!controller.empty()) cfg.controller = controller;
            if (adi_version) cfg.adi_version = adi_version;
            if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
            const auto t0 = std::chrono::steady_clock::now();
            const auto result = rdmpc::run_experiment(cfg, verbose);
            rdmpc::write_outputs(result, out_dir);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << rdmpc::format_summary(result.summary);
            std::fprintf(stderr, "%d steps, %s controller, %d fallbacks, %.1f s -> %s\n",
                         cfg.steps(), cfg.controller.c_str(), result.fallbacks, secs, out_dir.c_str());
        } else if (*rep) {
            std::cout << rdmpc::format_summary(rdmpc::read_summary(in_dir));
        }
    } catch (const rdmpc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
