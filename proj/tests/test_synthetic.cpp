#include "doctest.h"

#include "factorjm/metrics.hpp"
#include "factorjm/synthetic.hpp"

#include <cmath>

using namespace factorjm;

TEST_CASE("absorbing chain never leaves its initial state") {
    HmmSpec spec;
    spec.p_stay = {1.0, 1.0};
    spec.T = 500;
    spec.initial_state = 1;
    const auto sim = simulate(spec);
    for (int s : sim.truth) CHECK(s == 1);
}

TEST_CASE("mean sojourn matches 1 / (1 - p)") {
    HmmSpec spec;
    spec.p_stay = {0.98, 0.98};
    spec.T = 200'000;
    spec.seed = 3;
    const auto sim = simulate(spec);
    std::size_t runs = 1;
    for (std::size_t t = 1; t < sim.truth.size(); ++t) runs += sim.truth[t] != sim.truth[t - 1];
    const double mean_sojourn = static_cast<double>(spec.T) / static_cast<double>(runs);
    CHECK(std::abs(mean_sojourn - 50.0) / 50.0 < 0.05);
}

TEST_CASE("stationary occupancy within three standard errors") {
    HmmSpec spec;
    spec.p_stay = {0.99, 0.98};
    spec.T = 200'000;
    spec.seed = 11;
    const auto sim = simulate(spec);
    double share = 0.0;
    for (int s : sim.truth) share += s == 0;
    share /= static_cast<double>(spec.T);
    const double pi = stationary_bull_share(spec);
    CHECK(pi == doctest::Approx(2.0 / 3.0));
    // Autocorrelated chain: effective sample size T (1 - rho) / (1 + rho).
    const double rho = spec.p_stay[0] + spec.p_stay[1] - 1.0;
    const double se = std::sqrt(pi * (1.0 - pi) / (static_cast<double>(spec.T) * (1.0 - rho) / (1.0 + rho)));
    CHECK(std::abs(share - pi) < 3.0 * se);
}

TEST_CASE("emissions follow the state parameters") {
    HmmSpec spec;
    spec.T = 100'000;
    spec.seed = 4;
    const auto sim = simulate(spec);
    std::vector<double> bull, bear;
    for (std::size_t t = 0; t < sim.truth.size(); ++t) (sim.truth[t] == 0 ? bull : bear).push_back(sim.active[t]);
    CHECK(std::abs(252.0 * mean(bull) - 0.10) < 0.03);
    CHECK(std::abs(252.0 * mean(bear) + 0.10) < 0.03);
    CHECK(std::abs(std::sqrt(252.0) * sample_std(bull) - 0.06) < 0.003);
    CHECK(std::abs(std::sqrt(252.0) * sample_std(sim.market.values()) - 0.16) < 0.005);
}

TEST_CASE("simulation is deterministic in the seed") {
    HmmSpec spec;
    spec.T = 1000;
    spec.seed = 42;
    const auto a = simulate(spec);
    const auto b = simulate(spec);
    CHECK(a.truth == b.truth);
    CHECK(a.active.values() == b.active.values());
    CHECK(a.env.column("vix") == b.env.column("vix"));
    spec.seed = 43;
    CHECK(simulate(spec).active.values() != a.active.values());
}

TEST_CASE("companion series are well formed") {
    HmmSpec spec;
    spec.T = 300;
    const auto sim = simulate(spec);
    CHECK(sim.active.dates() == sim.market.dates());
    CHECK(sim.env.dates() == sim.active.dates());
    for (double v : sim.env.column("vix")) CHECK(v > 0.0);
    for (double r : sim.rf.values()) CHECK(r >= 0.0);
    for (Date d : sim.active.dates()) {
        const std::chrono::weekday wd{d};
        CHECK(wd != std::chrono::Saturday);
        CHECK(wd != std::chrono::Sunday);
    }
}

TEST_CASE("invalid specs are rejected") {
    HmmSpec spec;
    spec.p_stay = {1.2, 0.9};
    CHECK_THROWS_AS(simulate(spec), std::invalid_argument);
    spec = {};
    spec.vol = {0.0, 0.1};
    CHECK_THROWS_AS(simulate(spec), std::invalid_argument);
}

TEST_CASE("balanced accuracy") {
    const std::vector<int> truth{0, 0, 1, 1};
    CHECK(balanced_accuracy(truth, truth) == 1.0);
    CHECK(balanced_accuracy(truth, std::vector<int>{1, 1, 0, 0}) == 1.0);
    CHECK(balanced_accuracy(truth, std::vector<int>{0, 0, 0, 0}) == 0.5);
    CHECK(balanced_accuracy(truth, std::vector<int>{0, 1, 1, 1}) == doctest::Approx(0.75));
    CHECK(balanced_accuracy(std::vector<int>{0, 0, 0}, std::vector<int>{0, 0, 1}) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(balanced_accuracy(truth, std::vector<int>{0}), std::invalid_argument);
}

TEST_CASE("universe simulation") {
    UniverseSpec spec;
    spec.regime.T = 400;
    spec.regime.seed = 8;
    const auto u = simulate_universe(spec);
    CHECK(u.returns.has("market"));
    CHECK(u.returns.has("rf"));
    CHECK(u.truth.size() == 6);
    for (const auto& f : spec.factors) CHECK(u.returns.has(f));
    CHECK(u.returns.column("value") != u.returns.column("size"));
}
