#include "doctest.h"

#include "factorjm/backtest.hpp"
#include "factorjm/synthetic.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>

using namespace factorjm;
using factorjm::testing::normal_vector;

namespace {

const std::vector<std::string> kFactors{"value", "size", "momentum", "quality", "low_vol", "growth"};

std::vector<std::string> universe() {
    std::vector<std::string> u{"market"};
    u.insert(u.end(), kFactors.begin(), kFactors.end());
    return u;
}

Eigen::MatrixXd to_matrix(const AlignedPanel& p, const std::vector<std::string>& cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(p.rows()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto& c = p.column(cols[j]);
        for (std::size_t t = 0; t < c.size(); ++t) m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = c[t];
    }
    return m;
}

RegimeSignal constant_signal(const std::vector<Date>& dates, double mu) {
    RegimeSignal s;
    s.dates = dates;
    s.mu_hat.assign(dates.size(), mu);
    s.state.assign(dates.size(), mu > 0 ? 0 : 1);
    return s;
}

std::map<std::string, RegimeSignal> constant_signals(const std::vector<Date>& dates, double mu) {
    std::map<std::string, RegimeSignal> m;
    for (const auto& f : kFactors) m[f] = constant_signal(dates, mu);
    return m;
}

UniverseSimulation small_universe(std::uint64_t seed, std::size_t T = 600) {
    UniverseSpec spec;
    spec.regime.T = T;
    spec.regime.seed = seed;
    return simulate_universe(spec);
}

void check_path_invariants(const PortfolioPath& p, double tc) {
    for (Eigen::Index t = 0; t < p.weights.rows(); ++t) {
        CHECK(p.weights.row(t).minCoeff() >= -1e-8);
        CHECK(std::abs(p.weights.row(t).sum() - 1.0) <= 1e-8);
        const auto i = static_cast<std::size_t>(t);
        CHECK(p.net[i] == p.gross[i] - tc * p.turnover[i]);
        CHECK(p.net[i] > -1.0);
    }
}

std::size_t count_reason(const PortfolioPath& p, const std::string& reason) {
    return static_cast<std::size_t>(std::count(p.trades.begin(), p.trades.end(), reason));
}

}  // namespace

TEST_CASE("EW benchmark with identical returns never trades after initiation") {
    const auto dates = business_days(parse_date("2024-01-02"), 200);
    Eigen::MatrixXd r(200, 7);
    const auto common = normal_vector(200, 0.0, 0.01, 1);
    for (Eigen::Index t = 0; t < 200; ++t) r.row(t).setConstant(common[static_cast<std::size_t>(t)]);
    const auto p = ew_benchmark(dates, universe(), r, kDefaultCost);
    for (Eigen::Index t = 0; t < 200; ++t) CHECK((p.weights.row(t).array() - 1.0 / 7.0).abs().maxCoeff() < 1e-14);
    for (double x : p.turnover) CHECK(x < 1e-14);
    check_path_invariants(p, kDefaultCost);
}

TEST_CASE("EW benchmark drift arithmetic") {
    const auto dates = business_days(parse_date("2024-01-02"), 2);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(2, 7);
    r(0, 0) = 0.1;
    const auto p = ew_benchmark(dates, universe(), r);
    CHECK(p.weights(0, 0) == doctest::Approx((1.1 / 7.0) / (1.0 + 0.1 / 7.0)).epsilon(1e-14));
    CHECK(p.gross[0] == doctest::Approx(0.1 / 7.0));
}

TEST_CASE("EW benchmark quarterly reset ledger") {
    // Three assets across a quarter boundary; asset 0 gains 10% on day one.
    const std::vector<Date> dates{parse_date("2024-03-28"), parse_date("2024-04-01"), parse_date("2024-04-02")};
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(3, 3);
    r(0, 0) = 0.1;
    const auto p = ew_benchmark(dates, {"a", "b", "c"}, r, 0.001);
    // Drifted: (1.1, 1, 1) / 3.1. Reset turnover: 0.2/9.3 + 2 * 0.1/9.3.
    CHECK(p.turnover[0] == 0.0);
    CHECK(p.turnover[1] == doctest::Approx(0.4 / 9.3).epsilon(1e-13));
    CHECK(p.net[1] == doctest::Approx(-0.001 * 0.4 / 9.3).epsilon(1e-12));
    CHECK(p.turnover[2] == 0.0);
    CHECK((p.weights.row(1).array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
    CHECK(p.trades == std::vector<std::string>{"initial", "quarterly"});
    CHECK(p.decision_dates[1] == dates[1]);
}

TEST_CASE("max drawdown") {
    CHECK(max_drawdown(std::vector<double>{0.2, -0.25, 1.1 / 0.9 - 1.0}) == doctest::Approx(-0.25));
    CHECK(max_drawdown(std::vector<double>{0.01, 0.02, 0.0, 0.03}) == 0.0);
    const auto r = normal_vector(500, 0.0, 0.02, 4);
    CHECK(max_drawdown(r) <= 0.0);
}

TEST_CASE("performance report") {
    const auto r = normal_vector(100, 0.0005, 0.01, 5);
    const auto m = normal_vector(100, 0.0004, 0.012, 6);
    const std::vector<double> rf(100, 0.02), zero(100, 0.0);

    const auto same = performance_report(r, zero, r, m, rf);
    CHECK(same.active_return == 0.0);
    CHECK(same.tracking_error == 0.0);
    CHECK_FALSE(same.information_ratio.has_value());

    const auto self = performance_report(m, zero, r, m, rf);
    CHECK(std::abs(self.beta - 1.0) < 1e-10);
    CHECK(std::abs(self.alpha) < 1e-10);

    // Normal-equation oracle on excess returns.
    const auto rep = performance_report(r, zero, m, m, rf);
    Eigen::MatrixXd X(100, 2);
    Eigen::VectorXd y(100);
    for (int t = 0; t < 100; ++t) {
        X(t, 0) = 1.0;
        X(t, 1) = m[static_cast<std::size_t>(t)] - 0.02 / 252.0;
        y(t) = r[static_cast<std::size_t>(t)] - 0.02 / 252.0;
    }
    const Eigen::Vector2d b = (X.transpose() * X).inverse() * X.transpose() * y;
    CHECK(std::abs(rep.alpha - 252.0 * b(0)) < 1e-10);
    CHECK(std::abs(rep.beta - b(1)) < 1e-10);
    REQUIRE(rep.information_ratio.has_value());
    CHECK(*rep.information_ratio == doctest::Approx(rep.active_return / rep.tracking_error));
    CHECK(rep.max_drawdown <= 0.0);

    std::vector<double> turn(100, 0.0);
    turn[10] = 0.5;
    CHECK(performance_report(r, turn, m, m, rf).turnover == doctest::Approx(0.5 * 252.0 / 100.0));
    CHECK_THROWS_AS(performance_report(r, turn, m, m, std::vector<double>(99, 0.0)), DataError);
}

TEST_CASE("dynamic strategy with zero signals and a tiny TE target stays near EW") {
    const auto u = small_universe(1);
    const auto& dates = u.returns.dates();
    const Date start = dates[300];
    DynamicConfig cfg;
    cfg.te_target = 1e-4;
    const auto rf = u.returns.column("rf");
    const auto path = run_dynamic(u.returns, universe(), "market", constant_signals(dates, 0.0), &rf, start, cfg);
    check_path_invariants(path, cfg.tc);
    CHECK(count_reason(path, "signal") == 0);
    CHECK(count_reason(path, "initial") == 1);
    const auto bench = ew_benchmark(path.dates, universe(), to_matrix(u.returns.select_rows(300, dates.size()), universe()), cfg.tc);
    CHECK((path.weights - bench.weights).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("a single signal flip triggers exactly one signal rebalance") {
    const auto u = small_universe(2);
    const auto& dates = u.returns.dates();
    auto signals = constant_signals(dates, 0.02);
    for (std::size_t t = 450; t < dates.size(); ++t) signals["momentum"].mu_hat[t] = -0.03;
    const auto path = run_dynamic(u.returns, universe(), "market", signals, nullptr, dates[300], {});
    check_path_invariants(path, kDefaultCost);
    CHECK(count_reason(path, "signal") == 1);
    const auto it = std::find(path.trades.begin(), path.trades.end(), "signal");
    CHECK(path.decision_dates[static_cast<std::size_t>(it - path.trades.begin())] == dates[450]);
    // Trades execute at the close after each decision.
    for (std::size_t k = 0; k < path.decision_dates.size(); ++k) {
        const auto d = std::find(path.dates.begin(), path.dates.end(), path.decision_dates[k]) - path.dates.begin();
        if (static_cast<std::size_t>(d + 1) < path.dates.size()) CHECK(path.turnover[static_cast<std::size_t>(d + 1)] > 0.0);
    }
    CHECK(path.turnover[0] == 0.0);
    std::size_t quarters = 0;
    for (std::size_t t = 301; t < dates.size(); ++t) quarters += quarter_ordinal(dates[t]) != quarter_ordinal(dates[t - 1]);
    CHECK(count_reason(path, "quarterly") + (quarter_ordinal(dates[450]) != quarter_ordinal(dates[449]) ? 1 : 0) == quarters);
}

TEST_CASE("a persistently bullish factor is overweighted") {
    const auto u = small_universe(3);
    const auto& dates = u.returns.dates();
    auto signals = constant_signals(dates, 0.0);
    signals["value"] = constant_signal(dates, 0.05);
    const auto path = run_dynamic(u.returns, universe(), "market", signals, nullptr, dates[300], {});
    const double mean_value = path.weights.col(1).mean();
    CHECK(mean_value > 1.0 / 7.0);
}

TEST_CASE("dynamic path has no look-ahead and costs only hurt") {
    const auto u = small_universe(4);
    const auto& dates = u.returns.dates();
    auto signals = constant_signals(dates, 0.01);
    for (std::size_t t = 380; t < 420; ++t) signals["size"].mu_hat[t] = -0.04;
    const auto full = run_dynamic(u.returns, universe(), "market", signals, nullptr, dates[300], {});
    const auto cut = run_dynamic(u.returns.select_rows(0, 500), universe(), "market", signals, nullptr, dates[300], {});
    REQUIRE(cut.size() == 200);
    CHECK(cut.weights == full.weights.topRows(200));
    CHECK(std::equal(cut.net.begin(), cut.net.end(), full.net.begin()));

    DynamicConfig twice;
    twice.tc = 2 * kDefaultCost;
    const auto dear = run_dynamic(u.returns, universe(), "market", signals, nullptr, dates[300], twice);
    double a = 1.0, b = 1.0;
    for (std::size_t t = 0; t < full.size(); ++t) {
        a *= 1.0 + full.net[t];
        b *= 1.0 + dear.net[t];
    }
    CHECK(b <= a);

    CHECK_THROWS_AS(run_dynamic(u.returns, universe(), "market", signals, nullptr, dates[0], {}), DataError);
    auto missing = signals;
    missing.erase("growth");
    CHECK_THROWS_AS(run_dynamic(u.returns, universe(), "market", missing, nullptr, dates[300], {}), DataError);
}

TEST_CASE("static benchmark weights give zero active return") {
    const auto u = small_universe(5, 300);
    const auto r = to_matrix(u.returns, universe());
    const auto bench = ew_benchmark(u.returns.dates(), universe(), r, 0.0);
    const auto rep = performance_report(bench.net, bench.turnover, bench.net, u.returns.column("market"), u.returns.column("rf"));
    CHECK(rep.active_return == 0.0);
    CHECK(rep.tracking_error == 0.0);
}
