#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rdmpc/microgrid.hpp"
#include "rdmpc/types.hpp"

namespace rdmpc {

struct GridSpec {
    int id = 1;
    double q_st_kah = 100.0;
    double r_st_mohm = 1.5;
    double c_g = 0.2;
    double soc0 = 0.9;
    std::vector<int> neighbors;
};

enum class AttackKind { None, Constant, ConstantPlusGaussian };

struct AttackSpec {
    int grid = 1;
    AttackKind kind = AttackKind::None;
    std::string channel = "g";  // g, m or tr_<neighbor>
    double magnitude_kw = 0.0;
    double stddev_kw = 0.0;
};

struct ExperimentConfig {
    double duration_h = 48.0;
    double dt_h = 0.25;
    double horizon_h = 6.0;
    int robust_horizon = 1;
    std::string controller = "robust";
    int adi_version = 1;
    double tau_d_kw = 1e-2;
    double eps_i = 1e-3;
    std::uint64_t seed = 0;
    std::vector<GridSpec> grids;
    std::vector<AttackSpec> attacks;
    PriceSchedule prices = PriceSchedule::paper();

    int steps() const;
    int horizon_steps() const;
    bool robust() const { return controller == "robust"; }
    void validate() const;
    MicrogridParams params(const GridSpec& g) const;

    // Three grids in a ring with the paper's tables and no attack.
    static ExperimentConfig paper_default();
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    std::string to_json() const;
};

// Counter-based generator: the value depends only on (seed, stream, counter).
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed = 0) : seed_(seed) {}
    std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const;
    double uniform(std::uint64_t stream, std::uint64_t counter) const;  // (0, 1]
    double normal(std::uint64_t stream, std::uint64_t counter) const;

private:
    std::uint64_t seed_;
};

// Channel index of a name in a microgrid with the given neighbors.
int channel_index(const std::string& channel, const std::vector<int>& neighbors);
std::vector<std::string> channel_names(const std::vector<int>& neighbors);

// Attack on one input vector at step k; `stream` selects the random stream of this spec.
Vec inject_attack(const AttackSpec& spec, int k, const Vec& u, const std::vector<int>& neighbors,
                  const CounterRng& rng, std::uint64_t stream);

struct StepRecord {
    int step = 0;
    double time_h = 0.0;
    Vec x;
    Vec u;
    Vec a_true;
    Vec a_star;
    double mu_g = 0.0;
    double sigma_g = 0.0;
    bool detected = false;
    double stage_cost = 0.0;
    bool violation = false;
    bool fallback = false;
};

struct GridTrace {
    int id = 0;
    std::vector<int> neighbors;
    double soc0 = 0.0;
    std::vector<StepRecord> records;
    double terminal_cost = 0.0;
};

struct SummaryRow {
    int grid = 0;
    double total_cost = 0.0;
    int violations = 0;
    int detections = 0;
    double final_mu_g = 0.0;
    double final_sigma_g = 0.0;
};

struct ExperimentResult {
    std::vector<GridTrace> traces;
    std::vector<SummaryRow> summary;
    int fallbacks = 0;
    int relaxed_contracts = 0;
};

ExperimentResult run_experiment(const ExperimentConfig& config, bool verbose = false);

SummaryRow summarize(const GridTrace& trace);
std::vector<SummaryRow> summarize(const std::vector<GridTrace>& traces);

std::string trace_csv(const GridTrace& trace);
std::string summary_csv(const std::vector<SummaryRow>& rows);
void write_outputs(const ExperimentResult& result, const std::string& dir);
std::vector<SummaryRow> read_summary(const std::string& dir);
std::string format_summary(const std::vector<SummaryRow>& rows);

}  // namespace rdmpc
