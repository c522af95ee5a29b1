#include <doctest.h>

#include <cmath>
#include <random>

#include "rdmpc/adapt.hpp"

using namespace rdmpc;

TEST_CASE("two samples") {
    AttackStats s(1);
    CHECK(s.sigma()[0] == 0.0);
    s = update_stats(s, Vec::Constant(1, 8.0));
    CHECK(s.mean[0] == 8.0);
    CHECK(s.sigma()[0] == 0.0);
    s = update_stats(s, Vec::Constant(1, 12.0));
    CHECK(s.mean[0] == doctest::Approx(10.0));
    CHECK(s.sigma()[0] == doctest::Approx(2.0 * std::sqrt(2.0)));
    CHECK(s.history.size() == 2);
    CHECK_THROWS(update_stats(s, Vec::Zero(2)));
}

TEST_CASE("scenario sets") {
    Vec mu(2), sigma(2);
    mu << 10.0, 0.0;
    sigma << 2.0, 0.0;
    auto sc = attack_scenarios(mu, sigma);
    CHECK(sc.size() == 3);
    CHECK(sc[0][0] == 10.0);
    CHECK(sc[1][0] == 8.0);
    CHECK(sc[2][0] == 12.0);

    sigma[1] = 1.0;
    CHECK(attack_scenarios(mu, sigma).size() == 9);
    sigma.setZero();
    CHECK(attack_scenarios(mu, sigma).size() == 1);
    CHECK(attack_scenarios(AttackStats(3)).size() == 1);
}

TEST_CASE("streaming statistics equal batch statistics") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> d(10.0, 4.0);
    AttackStats s(2);
    std::vector<Vec> xs;
    for (int i = 0; i < 500; ++i) {
        Vec v(2);
        v << d(gen), 1e6 + d(gen);
        xs.push_back(v);
        update_stats_in_place(s, v);
    }
    Vec mean = Vec::Zero(2);
    for (const auto& v : xs) mean += v;
    mean /= xs.size();
    Vec var = Vec::Zero(2);
    for (const auto& v : xs) var += (v - mean).cwiseAbs2();
    var /= xs.size() - 1;
    CHECK((s.mean - mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(s.sigma()[0] == doctest::Approx(std::sqrt(var[0])).epsilon(1e-10));
    CHECK(s.sigma()[1] == doctest::Approx(std::sqrt(var[1])).epsilon(1e-6));
}
