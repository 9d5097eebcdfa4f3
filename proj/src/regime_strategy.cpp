#include "factorjm/regime_strategy.hpp"

#include "factorjm/metrics.hpp"
#include "factorjm/parallel.hpp"
#include "factorjm/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace factorjm {

RegimeSignal RegimeSignal::slice(Date first, Date last) const {
    const auto b = std::lower_bound(dates.begin(), dates.end(), first) - dates.begin();
    const auto e = std::max(b, std::lower_bound(dates.begin(), dates.end(), last) - dates.begin());
    RegimeSignal out;
    out.dates.assign(dates.begin() + b, dates.begin() + e);
    out.state.assign(state.begin() + b, state.begin() + e);
    out.mu_hat.assign(mu_hat.begin() + b, mu_hat.begin() + e);
    return out;
}

void RegimeSignal::append(const RegimeSignal& other) {
    if (!dates.empty() && !other.dates.empty() && !(dates.back() < other.dates.front()))
        throw std::invalid_argument("RegimeSignal::append: dates must increase");
    dates.insert(dates.end(), other.dates.begin(), other.dates.end());
    state.insert(state.end(), other.state.begin(), other.state.end());
    mu_hat.insert(mu_hat.end(), other.mu_hat.begin(), other.mu_hat.end());
}

std::size_t RegimeSignal::index_of(Date d) const {
    const auto it = std::lower_bound(dates.begin(), dates.end(), d);
    if (it == dates.end() || *it != d) throw DataError("signal has no value on " + format_date(d));
    return static_cast<std::size_t>(it - dates.begin());
}

void TuningSchedule::validate() const {
    if (train_min_months <= 0 || train_max_months < train_min_months)
        throw std::invalid_argument("TuningSchedule: need 0 < train_min <= train_max");
    if (refit_months <= 0 || validation_months <= 0 || reselect_months <= 0)
        throw std::invalid_argument("TuningSchedule: spans must be positive");
}

void TuningGrid::validate(Eigen::Index dims) const {
    if (lambdas.empty() || kappa_sqs.empty()) throw std::invalid_argument("TuningGrid: empty grid");
    for (double l : lambdas)
        if (!(l >= 0.0)) throw std::invalid_argument("TuningGrid: lambda must be >= 0");
    for (double k : kappa_sqs)
        if (!(k >= 1.0) || k > static_cast<double>(dims))
            throw std::invalid_argument("TuningGrid: kappa_sq must lie in [1, D]");
}

double expected_active_return(std::span<const int> train_states, std::span<const double> train_active, int state) {
    if (train_states.size() != train_active.size())
        throw std::invalid_argument("expected_active_return: states and returns differ in length");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < train_states.size(); ++t) {
        if (train_states[t] != state) continue;
        sum += train_active[t];
        ++n;
    }
    if (n == 0) return 0.0;
    return std::clamp(kTradingDays * sum / static_cast<double>(n), -kViewCap, kViewCap);
}

double position_size(double mu_hat) {
    return std::clamp(mu_hat / kViewCap, -1.0, 1.0);
}

LongShortResult run_long_short(const RegimeSignal& signal, const ReturnSeries& factor, const ReturnSeries& market,
                               double tc) {
    if (signal.dates != factor.dates() || factor.dates() != market.dates())
        throw DataError("run_long_short: signal and return calendars differ");
    constexpr std::size_t kDelay = 2;
    const std::size_t n = signal.size();
    if (n <= kDelay) throw DataError("run_long_short: series shorter than the application delay");
    if (!(tc >= 0.0)) throw std::invalid_argument("run_long_short: negative cost");

    LongShortResult res;
    res.dates = signal.dates;
    res.positions.assign(n, 0.0);
    res.gross.assign(n, 0.0);
    res.net.assign(n, 0.0);
    res.turnover.assign(n, 0.0);
    double prev = 0.0;
    double total_turnover = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double w = t >= kDelay ? position_size(signal.mu_hat[t - kDelay]) : 0.0;
        // Both legs trade |dw|: the factor and the offsetting market position.
        const double traded = 2.0 * std::abs(w - prev);
        res.positions[t] = w;
        res.turnover[t] = traded;
        res.gross[t] = w * (factor[t] - market[t]);
        res.net[t] = res.gross[t] - tc * traded;
        total_turnover += traded;
        prev = w;
    }
    res.sharpe = annualized_sharpe(res.net);
    res.shifts_per_year = count_shifts(signal);
    res.annual_turnover = total_turnover * kTradingDays / static_cast<double>(n);
    return res;
}

double count_shifts(const RegimeSignal& signal) {
    if (signal.size() == 0) return 0.0;
    int flips = 0;
    for (std::size_t t = 1; t < signal.size(); ++t) flips += signal.bull(t) != signal.bull(t - 1);
    return flips * kTradingDays / static_cast<double>(signal.size());
}

void FactorData::validate() const {
    if (features.dates != factor.dates() || factor.dates() != market.dates())
        throw DataError("FactorData '" + name + "': features and returns must share one calendar");
}

FactorData make_factor_data(std::string name, FeatureMatrix raw_features, const ReturnSeries& factor,
                            const ReturnSeries& market) {
    if (raw_features.dates.empty()) throw DataError("make_factor_data: no feature rows");
    const Date first = raw_features.dates.front();
    const Date past_last = raw_features.dates.back() + std::chrono::days{1};
    FactorData d{std::move(name), std::move(raw_features), factor.slice(first, past_last), market.slice(first, past_last)};
    d.validate();
    return d;
}

RegimeSignal rolling_online_signal(const FactorData& data, const JumpModelConfig& config, const TuningSchedule& schedule,
                                   Date from, Date to, std::vector<RefitRecord>* log) {
    data.validate();
    schedule.validate();
    const auto& dates = data.features.dates;
    const auto begin = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), from) - dates.begin());
    const auto end = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), to) - dates.begin());
    RegimeSignal out;
    if (begin >= end) return out;

    std::vector<double> active(dates.size());
    for (std::size_t t = 0; t < dates.size(); ++t) active[t] = data.factor[t] - data.market[t];

    const int anchor = month_ordinal(from);
    auto bucket_of = [&](Date d) { return (month_ordinal(d) - anchor) / schedule.refit_months; };

    std::size_t i = begin;
    while (i < end) {
        std::size_t j = i;
        const int bucket = bucket_of(dates[i]);
        while (j < end && bucket_of(dates[j]) == bucket) ++j;

        const Date refit_date = dates[i];
        if (dates.front() > add_months(refit_date, -schedule.train_min_months))
            throw DataError("insufficient history for refit on " + format_date(refit_date) + " (factor '" + data.name + "')");
        const Date window_start = add_months(refit_date, -schedule.train_max_months);
        const auto tb = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), window_start) - dates.begin());

        const auto train = standardize(data.features.select_rows(static_cast<Eigen::Index>(tb), static_cast<Eigen::Index>(i)));
        JumpModelConfig cfg = config;
        cfg.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(month_ordinal(refit_date))});
        JumpModelFit fit = fit_sparse_jump_model(train, cfg);
        const std::span<const double> train_active(active.data() + tb, i - tb);
        fit.rank = label_states(fit.states, fit.n_states(), train_active);

        std::vector<double> mu(static_cast<std::size_t>(fit.n_states()));
        for (int k = 0; k < fit.n_states(); ++k) mu[static_cast<std::size_t>(k)] = expected_active_return(fit.states, train_active, k);

        if (log) {
            RefitRecord rec{refit_date, i - tb, 0.0, 0.0, 0};
            for (int k = 0; k < fit.n_states(); ++k) {
                if (fit.rank[static_cast<std::size_t>(k)] == 0) rec.mu_bull = mu[static_cast<std::size_t>(k)];
                if (fit.rank[static_cast<std::size_t>(k)] == fit.n_states() - 1) rec.mu_bear = mu[static_cast<std::size_t>(k)];
            }
            rec.active_features = static_cast<int>((fit.weights.array() > 0.0).count());
            log->push_back(rec);
        }

        OnlineState st = initial_online_state(fit);
        for (std::size_t r = i; r < j; ++r) {
            const auto x = prepare_online_input(fit, data.features.values.row(static_cast<Eigen::Index>(r)));
            auto [s, next] = online_infer(fit, x, st);
            st = std::move(next);
            out.dates.push_back(dates[r]);
            out.state.push_back(s);
            out.mu_hat.push_back(mu[static_cast<std::size_t>(s)]);
        }
        i = j;
    }
    return out;
}

TuningResult tune_hyperparameters(const FactorData& data, const TuningGrid& grid, const TuningSchedule& schedule,
                                  const JumpModelConfig& base, double tc, int threads) {
    data.validate();
    schedule.validate();
    grid.validate(data.features.cols());
    const auto& dates = data.features.dates;
    if (dates.empty()) throw DataError("tune_hyperparameters: no data");

    auto sorted_unique = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    };
    struct Cell {
        double lambda, kappa_sq;
    };
    std::vector<Cell> cells;
    for (double l : sorted_unique(grid.lambdas))
        for (double k : sorted_unique(grid.kappa_sqs)) cells.push_back({l, k});

    const Date valid_from = add_months(schedule.test_start, -schedule.validation_months);
    if (dates.front() > add_months(valid_from, -schedule.train_min_months))
        throw DataError("tune_hyperparameters: insufficient history before " + format_date(schedule.test_start) +
                        " for factor '" + data.name + "'");
    if (dates.back() < schedule.test_start) throw DataError("tune_hyperparameters: no data after test_start");
    const Date to = dates.back() + std::chrono::days{1};

    // A refit depends only on data before its date, so one pass per cell
    // serves every validation window and test block.
    std::vector<RegimeSignal> signals(cells.size());
    parallel_for(cells.size(), threads, [&](std::size_t c) {
        JumpModelConfig cfg = base;
        cfg.lambda = cells[c].lambda;
        cfg.kappa_sq = cells[c].kappa_sq;
        signals[c] = rolling_online_signal(data, cfg, schedule, valid_from, to);
    });

    TuningResult result;
    for (int b = 0;; ++b) {
        const Date block = add_months(schedule.test_start, b * schedule.reselect_months);
        if (block > dates.back()) break;
        const Date block_end = add_months(schedule.test_start, (b + 1) * schedule.reselect_months);
        const Date vstart = add_months(block, -schedule.validation_months);
        const auto f = data.factor.slice(vstart, block);
        const auto m = data.market.slice(vstart, block);

        std::size_t best = 0;
        double best_sharpe = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double s = run_long_short(signals[c].slice(vstart, block), f, m, tc).sharpe;
            if (s > best_sharpe) {
                best_sharpe = s;
                best = c;
            }
        }
        result.selections.push_back({block, data.name, cells[best].lambda, cells[best].kappa_sq, best_sharpe});
        result.signal.append(signals[best].slice(block, block_end));
    }
    return result;
}

}  // namespace factorjm
