#include <doctest.h>

#include <cmath>

#include "linear_chain.hpp"
#include "rdmpc/adi.hpp"
#include "rdmpc/microgrid.hpp"

using namespace rdmpc;

TEST_CASE("detection threshold is strict") {
    DetectionConfig cfg;
    cfg.tau_d = 0.5;
    CHECK_FALSE(detect(Vec(), cfg));
    CHECK_FALSE(detect(Vec::Constant(2, 0.5), cfg));
    CHECK(detect(Vec::Constant(2, -0.5000001), cfg));
    Vec d(3);
    d << 0.1, -0.2, 0.6;
    CHECK(detect(d, cfg));
}

TEST_CASE("generator attack on a microgrid is recovered") {
    MicrogridParams p;
    const auto m = make_microgrid_model(1, {2, 3}, p);
    Vec x = Vec::Zero(5);
    x[mg::soc] = 0.9;
    Vec u = Vec::Zero(4);
    u[mg::u_gen] = 5.0;
    Vec a = Vec::Zero(4);
    a[mg::u_gen] = 10.0;
    const Vec zn = Vec::Zero(2);
    const Vec y1 = m.output_fn(integrate_step(m, x, u + a, zn, Vec(), 0.25));
    DetectionConfig cfg;
    const auto s = identify_v1(m, x, u, y1, zn, Vec::Zero(2), 0.25, cfg);
    CHECK(s.a_star[mg::u_gen] > 9.998);
    CHECK(s.a_star[mg::u_gen] <= 10.0 + 1e-9);
    CHECK(s.residual_norm <= cfg.eps * (1 + 1e-6));
    CHECK(s.a_star.tail(3).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("no attack gives no suspicion") {
    const auto models = chain::make_chain();
    const auto& m = models[1];
    Vec x(2), u(2);
    x << 0.3, -0.4;
    u << 0.5, 0.1;
    Vec zn(2);
    zn << 0.2, -0.1;
    const Vec y1 = chained_output(m, x, u, zn, Vec(), 0.25);
    DetectionConfig cfg;
    const auto s1 = identify_v1(m, x, u, y1, zn, Vec::Zero(2), 0.25, cfg);
    CHECK(s1.a_star.cwiseAbs().maxCoeff() < 1e-6);

    SensitivityBundle b{Mat::Zero(2, 4), Mat::Zero(2, 2)};
    const auto s2 = identify_v2(m, x, u, y1, zn, b, 0.25, cfg);
    CHECK(s2.a_star.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(residual_v2(m, x, u, y1, zn, b, Vec::Zero(2), Vec::Zero(4), Vec::Zero(2), 0.25, false)
              .norm() < 1e-12);
}

TEST_CASE("sensitivity bundle is block diagonal") {
    NeighborSensitivity a{Mat::Constant(1, 2, 1.0), Mat::Constant(1, 1, 2.0)};
    NeighborSensitivity b{Mat::Constant(2, 3, 3.0), Mat::Constant(2, 2, 4.0)};
    const auto bundle = assemble_bundle({a, b});
    CHECK(bundle.s_hat_a.rows() == 3);
    CHECK(bundle.s_hat_a.cols() == 5);
    CHECK(bundle.s_hat_a(0, 2) == 0.0);
    CHECK(bundle.s_hat_a(2, 4) == 3.0);
    CHECK(bundle.s_hat_z(0, 0) == 2.0);
    CHECK(bundle.s_hat_z(1, 0) == 0.0);
}

TEST_CASE("linear chain attacks are attributed to the right channel") {
    int agree1 = 0, agree2 = 0, oracle = 0;
    constexpr int trials = 20;
    for (int t = 0; t < trials; ++t) {
        const auto r = chain::run_trial(1000 + t);
        oracle += r.oracle == r.truth;
        agree1 += r.v1 == r.truth;
        agree2 += r.v2 == r.truth;
        CHECK(r.v1_error < 0.05);
    }
    CHECK(oracle == trials);
    CHECK(agree1 == trials);
    CHECK(agree2 >= trials - 1);
}
