#include "doctest.h"

#include "factorjm/io.hpp"
#include "factorjm/metrics.hpp"
#include "factorjm/regime_strategy.hpp"
#include "test_support.hpp"

#include <cmath>
#include <sstream>

using namespace factorjm;
using factorjm::testing::make_series;
using factorjm::testing::normal_vector;

namespace {

RegimeSignal signal_from(const std::vector<Date>& dates, const std::vector<double>& mu) {
    RegimeSignal s;
    s.dates = dates;
    s.mu_hat = mu;
    for (double m : mu) s.state.push_back(m > 0.0 ? 0 : 1);
    return s;
}

FactorData small_factor(std::uint64_t seed, std::size_t T = 1100) {
    HmmSpec spec;
    spec.T = T;
    spec.seed = seed;
    spec.p_stay = {0.99, 0.99};
    spec.mu = {0.3, -0.3};
    const auto sim = simulate(spec);
    std::vector<double> factor(T), mkt_ex(T);
    for (std::size_t t = 0; t < T; ++t) {
        factor[t] = sim.market[t] + sim.active[t];
        mkt_ex[t] = sim.market[t] - sim.rf[t] / kTradingDays;
    }
    const auto dates = sim.active.dates();
    const ReturnSeries mkt_excess(dates, mkt_ex);
    auto fm = build_features(sim.active, mkt_excess, sim.env);
    return make_factor_data("value", std::move(fm), ReturnSeries(dates, factor), sim.market);
}

TuningSchedule small_schedule() {
    TuningSchedule s;
    s.train_min_months = 12;
    s.train_max_months = 24;
    s.validation_months = 12;
    s.reselect_months = 6;
    s.test_start = parse_date("2002-07-01");
    return s;
}

JumpModelConfig quick_config() {
    JumpModelConfig c;
    c.n_init = 3;
    c.max_iter = 30;
    c.max_outer = 3;
    c.seed = 7;
    return c;
}

FactorData truncate(const FactorData& d, Date last_exclusive) {
    const auto& dates = d.features.dates;
    const auto n = std::lower_bound(dates.begin(), dates.end(), last_exclusive) - dates.begin();
    return make_factor_data(d.name, d.features.select_rows(0, n), d.factor, d.market);
}

}  // namespace

TEST_CASE("expected_active_return") {
    const std::vector<int> s{0, 0, 1};
    CHECK(expected_active_return(s, std::vector<double>{0.0004, 0.0004, -0.0001}, 0) == doctest::Approx(0.05));
    CHECK(expected_active_return(s, std::vector<double>{0.0, 0.0, 0.0}, 0) == 0.0);
    CHECK(expected_active_return(s, std::vector<double>{0.0001, 0.0001, -0.0001}, 1) == doctest::Approx(-0.0252));
    CHECK(expected_active_return(s, std::vector<double>{0.0001, 0.0001, 0.00005}, 1) > 0.0);
    CHECK(expected_active_return(s, std::vector<double>{0.0001, 0.0001, 0.00005}, 0) > 0.0);
    CHECK(expected_active_return(s, std::vector<double>{0.1, 0.1, 0.1}, 2) == 0.0);
    CHECK_THROWS_AS(expected_active_return(s, std::vector<double>{0.0}, 0), std::invalid_argument);
}

TEST_CASE("position_size") {
    CHECK(position_size(0.05) == 1.0);
    CHECK(position_size(0.0) == 0.0);
    CHECK(position_size(-0.025) == doctest::Approx(-0.5));
    CHECK(position_size(0.2) == 1.0);
    CHECK(position_size(-0.2) == -1.0);
    double prev = -2.0;
    for (int i = -100; i <= 100; ++i) {
        const double x = i * 0.001;
        CHECK(position_size(-x) == -position_size(x));
        CHECK(position_size(x) >= prev);
        CHECK(std::abs(position_size(x)) <= 1.0);
        prev = position_size(x);
    }
}

TEST_CASE("run_long_short matches the hand ledger fixture") {
    std::istringstream in(io::read_text_file("fixtures/long_short_ledger.csv"));
    std::string line;
    std::vector<Date> dates;
    std::vector<double> mu, f, m, pos, turn, gross, net;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        const auto c = io::split_csv_line(line);
        dates.push_back(parse_date(c[0]));
        mu.push_back(std::stod(c[1]));
        f.push_back(std::stod(c[2]));
        m.push_back(std::stod(c[3]));
        pos.push_back(std::stod(c[4]));
        turn.push_back(std::stod(c[5]));
        gross.push_back(std::stod(c[6]));
        net.push_back(std::stod(c[7]));
    }
    REQUIRE(dates.size() == 5);
    const auto r = run_long_short(signal_from(dates, mu), ReturnSeries(dates, f), ReturnSeries(dates, m), 0.0005);
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(r.positions[t] == doctest::Approx(pos[t]));
        CHECK(r.turnover[t] == doctest::Approx(turn[t]));
        CHECK(std::abs(r.gross[t] - gross[t]) < 1e-15);
        CHECK(std::abs(r.net[t] - net[t]) < 1e-15);
    }
}

TEST_CASE("constant bull with zero cost reproduces the active return") {
    const auto f = make_series(normal_vector(300, 0.0004, 0.01, 1));
    const auto m = make_series(normal_vector(300, 0.0003, 0.01, 2));
    const auto r = run_long_short(signal_from(f.dates(), std::vector<double>(300, 0.08)), f, m, 0.0);
    double strat = 1.0, act = 1.0;
    for (std::size_t t = 2; t < 300; ++t) {
        CHECK(r.net[t] == f[t] - m[t]);
        strat *= 1.0 + r.net[t];
        act *= 1.0 + (f[t] - m[t]);
    }
    CHECK(strat == act);
    CHECK(r.positions[0] == 0.0);
    CHECK(r.positions[1] == 0.0);
}

TEST_CASE("costs only reduce returns") {
    const auto f = make_series(normal_vector(200, 0.0, 0.01, 3));
    const auto m = make_series(normal_vector(200, 0.0, 0.01, 4));
    const auto mu = normal_vector(200, 0.0, 0.05, 5);
    const auto r = run_long_short(signal_from(f.dates(), mu), f, m);
    for (std::size_t t = 0; t < 200; ++t) {
        if (r.turnover[t] > 0) CHECK(r.net[t] < r.gross[t]);
        CHECK(std::abs(r.positions[t]) <= 1.0);
    }
    CHECK(std::isfinite(r.sharpe));
    CHECK_THROWS_AS(run_long_short(signal_from(f.dates(), mu).slice(f.dates()[0], f.dates()[2]), f.slice_index(0, 2),
                                   m.slice_index(0, 2)),
                    DataError);
    CHECK_THROWS_AS(run_long_short(signal_from(f.dates(), mu), f, make_series(normal_vector(200, 0, 0.01, 6), parse_date("2022-01-03"))),
                    DataError);
}

TEST_CASE("count_shifts") {
    const auto dates = business_days(parse_date("2020-01-01"), 252);
    CHECK(count_shifts(signal_from(dates, std::vector<double>(252, 0.03))) == 0.0);
    std::vector<double> alt(252);
    for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 == 0 ? 0.01 : -0.01;
    CHECK(count_shifts(signal_from(dates, alt)) == doctest::Approx(251.0));
    // Magnitude changes within one sign are not shifts.
    std::vector<double> pos(252, 0.01);
    pos[100] = 0.05;
    CHECK(count_shifts(signal_from(dates, pos)) == 0.0);
}

TEST_CASE("rolling signal is causal and bounded") {
    const auto data = small_factor(21);
    const auto sched = small_schedule();
    const Date from = parse_date("2002-01-01"), to = parse_date("2003-01-01");
    std::vector<RefitRecord> log;
    const auto sig = rolling_online_signal(data, quick_config(), sched, from, to, &log);
    REQUIRE(sig.size() > 200);
    CHECK(log.size() == 12);
    for (double mu : sig.mu_hat) CHECK(std::abs(mu) <= kViewCap);
    const auto cut = truncate(data, parse_date("2002-07-01"));
    const auto early = rolling_online_signal(cut, quick_config(), sched, from, to);
    const auto expected = sig.slice(from, parse_date("2002-07-01"));
    CHECK(early.dates == expected.dates);
    CHECK(early.state == expected.state);
    CHECK(early.mu_hat == expected.mu_hat);

    CHECK_THROWS_AS(rolling_online_signal(data, quick_config(), sched, data.features.dates[10], to), DataError);
}

TEST_CASE("tuning with a one-cell grid selects that cell everywhere") {
    const auto data = small_factor(31);
    TuningGrid grid;
    grid.lambdas = {20};
    grid.kappa_sqs = {5.5};
    const auto res = tune_hyperparameters(data, grid, small_schedule(), quick_config());
    REQUIRE(res.selections.size() >= 3);
    for (const auto& s : res.selections) {
        CHECK(s.lambda == 20);
        CHECK(s.kappa_sq == 5.5);
    }
    CHECK(res.signal.dates.front() >= parse_date("2002-07-01"));
    CHECK(res.signal.dates.back() == data.features.dates.back());
}

TEST_CASE("tuning picks the cell with the best validation Sharpe") {
    const auto data = small_factor(41);
    const auto sched = small_schedule();
    TuningGrid grid;
    grid.lambdas = {0.5, 100};
    grid.kappa_sqs = {9.5};
    const auto res = tune_hyperparameters(data, grid, sched, quick_config(), kDefaultCost, 2);

    // Direct evaluation of both cells on every validation window.
    const Date valid_from = add_months(sched.test_start, -sched.validation_months);
    const Date end = data.features.dates.back() + std::chrono::days{1};
    std::vector<RegimeSignal> sigs;
    for (double l : grid.lambdas) {
        auto cfg = quick_config();
        cfg.lambda = l;
        cfg.kappa_sq = 9.5;
        sigs.push_back(rolling_online_signal(data, cfg, sched, valid_from, end));
    }
    for (const auto& sel : res.selections) {
        const Date vstart = add_months(sel.block_start, -sched.validation_months);
        const auto f = data.factor.slice(vstart, sel.block_start);
        const auto m = data.market.slice(vstart, sel.block_start);
        const double s0 = run_long_short(sigs[0].slice(vstart, sel.block_start), f, m).sharpe;
        const double s1 = run_long_short(sigs[1].slice(vstart, sel.block_start), f, m).sharpe;
        CHECK(sel.lambda == (s1 > s0 ? 100.0 : 0.5));
        CHECK(sel.validation_sharpe == std::max(s0, s1));
    }
}

TEST_CASE("tuning is reproducible and has no look-ahead") {
    const auto data = small_factor(51);
    const auto sched = small_schedule();
    TuningGrid grid;
    grid.lambdas = {5, 50};
    grid.kappa_sqs = {3, 9.5};
    const auto full = tune_hyperparameters(data, grid, sched, quick_config(), kDefaultCost, 1);
    const auto again = tune_hyperparameters(data, grid, sched, quick_config(), kDefaultCost, 3);
    CHECK(full.signal.mu_hat == again.signal.mu_hat);
    CHECK(full.signal.state == again.signal.state);

    const Date block_end = add_months(sched.test_start, sched.reselect_months);
    const auto cut = tune_hyperparameters(truncate(data, block_end), grid, sched, quick_config());
    REQUIRE(cut.selections.size() == 1);
    CHECK(cut.selections[0].lambda == full.selections[0].lambda);
    CHECK(cut.selections[0].kappa_sq == full.selections[0].kappa_sq);
    const auto first_block = full.signal.slice(sched.test_start, block_end);
    CHECK(cut.signal.mu_hat == first_block.mu_hat);
    CHECK(cut.signal.dates == first_block.dates);
}

TEST_CASE("tuning rejects short histories") {
    const auto data = small_factor(61, 400);
    TuningGrid grid;
    grid.lambdas = {10};
    grid.kappa_sqs = {3};
    CHECK_THROWS_AS(tune_hyperparameters(data, grid, small_schedule(), quick_config()), DataError);
}
