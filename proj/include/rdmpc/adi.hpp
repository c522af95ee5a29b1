#pragma once

#include <map>
#include <string>
#include <vector>

#include "rdmpc/dynamics.hpp"
#include "rdmpc/exchange.hpp"
#include "rdmpc/solver.hpp"
#include "rdmpc/types.hpp"

namespace rdmpc {

struct DetectionConfig {
    double tau_d = 1e-2;
    double eps = 1e-3;
    // evaluate the local sensitivity at a_I = 0 instead of at every iterate (version 2)
    bool freeze_sensitivity = false;
    SolverOptions solver = [] {
        SolverOptions o;
        o.tol_feas = 1e-9;
        o.tol_opt = 1e-7;
        o.max_iter = 200;
        return o;
    }();
};

struct NeighborSensitivity {
    Mat s_a;  // d zeta_L / d a_L, rows: components sent to the receiver
    Mat s_z;  // d zeta_L / d z_{N_L}
};

// Block-diagonal stack of the neighbors' sensitivities in neighbor order.
struct SensitivityBundle {
    Mat s_hat_a;
    Mat s_hat_z;
};

struct Suspicion {
    Vec a_star;
    Vec a_star_n;
    Vec dz_star_nn;
    double residual_norm = 0.0;
    double objective = 0.0;
    SolveStatus status = SolveStatus::Converged;
    int iterations = 0;
};

bool detect(const Vec& deviation, const DetectionConfig& cfg);

Suspicion identify_v1(const SubsystemModel& model, const Vec& x_k, const Vec& u_k, const Vec& y_k1,
                      const Vec& nominal_n, const Vec& deviation_n, double dt,
                      const DetectionConfig& cfg);

// d eta / d z_N at (x_k, u_k + a, nominal_n)
Mat local_sensitivity(const SubsystemModel& model, const Vec& x_k, const Vec& u_k, const Vec& a,
                      const Vec& nominal_n, double dt);

NeighborSensitivity neighbor_sensitivities(const SubsystemModel& model_n, const Vec& x_n,
                                           const Vec& u_n, const Vec& nominal_nn, int receiver,
                                           double dt);

SensitivityBundle assemble_bundle(const std::vector<NeighborSensitivity>& in_neighbor_order);

Suspicion identify_v2(const SubsystemModel& model, const Vec& x_k, const Vec& u_k, const Vec& y_k1,
                      const Vec& nominal_n, const SensitivityBundle& bundle, double dt,
                      const DetectionConfig& cfg);

// Residual of the version-2 constraint at given block values.
Vec residual_v2(const SubsystemModel& model, const Vec& x_k, const Vec& u_k, const Vec& y_k1,
                const Vec& nominal_n, const SensitivityBundle& bundle, const Vec& a_i,
                const Vec& a_n, const Vec& dz_nn, double dt, bool freeze);

struct AdiInput {
    const SubsystemModel* model = nullptr;
    Vec x_k;
    Vec u_k;
    Vec y_k1;
    Vec nominal_k;     // own nominal coupling for interval k
    Vec measured_k;    // own coupling h(x_k)
    Vec deviation_k1;  // own coupling deviation at k+1, used for detection
    bool has_prev = false;
    Vec x_prev;
    Vec u_prev;
    Vec nominal_in_prev;
};

struct AdiOutput {
    bool detected = false;
    std::map<int, bool> local_detection;
    std::map<int, Suspicion> suspicions;
    std::map<int, std::string> errors;
};

AdiOutput run_distributed_adi(const std::vector<AdiInput>& snapshot, int version,
                              const DetectionConfig& cfg, Bus& bus, long round, double dt,
                              bool always_identify = false);

}  // namespace rdmpc
