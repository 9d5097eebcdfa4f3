#include "factorjm/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace factorjm {

namespace {

constexpr double kUndefinedTe = 1e-10;

struct PathBuilder {
    PortfolioPath path;
    Eigen::VectorXd held;

    PathBuilder(const std::vector<std::string>& assets, std::size_t rows, Eigen::VectorXd initial) : held(std::move(initial)) {
        path.assets = assets;
        path.weights.resize(static_cast<Eigen::Index>(rows), held.size());
        path.dates.reserve(rows);
    }

    /// Earns the day's returns with the held weights and lets them drift.
    double earn(const Eigen::Ref<const Eigen::RowVectorXd>& r) {
        const double gross = r.dot(held.transpose());
        held = held.cwiseProduct((1.0 + r.array()).matrix().transpose()) / (1.0 + gross);
        return gross;
    }

    double trade(const Eigen::VectorXd& target) {
        const double traded = (target - held).cwiseAbs().sum();
        held = target;
        return traded;
    }

    void record(Date d, double gross, double traded, double tc) {
        const auto row = static_cast<Eigen::Index>(path.dates.size());
        path.dates.push_back(d);
        path.weights.row(row) = held.transpose();
        path.gross.push_back(gross);
        path.turnover.push_back(traded);
        path.net.push_back(gross - tc * traded);
    }
};

}  // namespace

PortfolioPath ew_benchmark(const std::vector<Date>& dates, const std::vector<std::string>& assets,
                           const Eigen::MatrixXd& returns, double tc) {
    const auto n = static_cast<Eigen::Index>(assets.size());
    if (dates.empty() || n == 0) throw std::invalid_argument("ew_benchmark: empty panel");
    if (returns.rows() != static_cast<Eigen::Index>(dates.size()) || returns.cols() != n)
        throw std::invalid_argument("ew_benchmark: return matrix shape mismatch");
    const Eigen::VectorXd equal = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    PathBuilder b(assets, dates.size(), equal);
    b.path.decision_dates.push_back(dates.front());
    b.path.trades.emplace_back("initial");
    for (std::size_t t = 0; t < dates.size(); ++t) {
        const double gross = b.earn(returns.row(static_cast<Eigen::Index>(t)));
        double traded = 0.0;
        if (t > 0 && quarter_ordinal(dates[t]) != quarter_ordinal(dates[t - 1])) {
            traded = b.trade(equal);
            b.path.decision_dates.push_back(dates[t]);
            b.path.trades.emplace_back("quarterly");
        }
        b.record(dates[t], gross, traded, tc);
    }
    return std::move(b.path);
}

PortfolioPath run_dynamic(const AlignedPanel& panel, const std::vector<std::string>& universe, const std::string& market,
                          const std::map<std::string, RegimeSignal>& signals, const std::vector<double>* rf_annual,
                          Date start, const DynamicConfig& cfg) {
    const auto n = static_cast<Eigen::Index>(universe.size());
    const auto& dates = panel.dates();
    const auto s0 = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), start) - dates.begin());
    if (s0 >= dates.size()) throw DataError("run_dynamic: no panel dates on or after start");
    if (s0 < 1) throw DataError("run_dynamic: covariance needs history before start");
    if (rf_annual && rf_annual->size() != dates.size()) throw DataError("run_dynamic: risk-free series misaligned");

    Eigen::MatrixXd returns(static_cast<Eigen::Index>(dates.size()), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& col = panel.column(universe[static_cast<std::size_t>(j)]);
        for (std::size_t t = 0; t < dates.size(); ++t) returns(static_cast<Eigen::Index>(t), j) = col[t];
    }
    Eigen::MatrixXd excess = returns;
    if (rf_annual)
        for (std::size_t t = 0; t < dates.size(); ++t) excess.row(static_cast<Eigen::Index>(t)).array() -= (*rf_annual)[t] / kTradingDays;

    std::vector<std::string> factors;
    for (const auto& a : universe)
        if (a != market) factors.push_back(a);
    for (const auto& f : factors)
        if (!signals.count(f)) throw DataError("run_dynamic: missing signal for factor '" + f + "'");
    // Signal index per factor and backtest day; throws on any gap.
    std::vector<std::vector<std::size_t>> sig_idx(factors.size());
    for (std::size_t k = 0; k < factors.size(); ++k) {
        const auto& sig = signals.at(factors[k]);
        for (std::size_t t = s0; t < dates.size(); ++t) sig_idx[k].push_back(sig.index_of(dates[t]));
    }

    const Eigen::VectorXd equal = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    PathBuilder b(universe, dates.size() - s0, equal);
    std::optional<Eigen::VectorXd> pending;
    std::vector<bool> prev_bull;
    for (std::size_t t = s0; t < dates.size(); ++t) {
        const double gross = b.earn(returns.row(static_cast<Eigen::Index>(t)));
        double traded = 0.0;
        if (pending) {
            traded = b.trade(*pending);
            pending.reset();
        }
        b.record(dates[t], gross, traded, cfg.tc);

        std::map<std::string, double> views;
        std::vector<bool> bull(factors.size());
        for (std::size_t k = 0; k < factors.size(); ++k) {
            const auto& sig = signals.at(factors[k]);
            const auto i = sig_idx[k][t - s0];
            views[factors[k]] = sig.mu_hat[i];
            bull[k] = sig.bull(i);
        }
        const char* reason = nullptr;
        if (t == s0) {
            reason = "initial";
        } else if (bull != prev_bull) {
            reason = "signal";
        } else if (quarter_ordinal(dates[t]) != quarter_ordinal(dates[t - 1])) {
            reason = "quarterly";
        }
        prev_bull = bull;
        if (!reason || t + 1 >= dates.size()) continue;

        const Eigen::MatrixXd sigma = ewm_covariance(excess.topRows(static_cast<Eigen::Index>(t + 1)), cfg.cov_halflife);
        const auto eq = Equilibrium::from_benchmark(cfg.delta, sigma, equal);
        const auto alloc = target_tracking_error(eq, build_views(views, universe, market), cfg.te_target);
        pending = alloc.weights;
        b.path.decision_dates.push_back(dates[t]);
        b.path.trades.emplace_back(reason);
    }
    return std::move(b.path);
}

PerformanceReport performance_report(std::span<const double> returns, std::span<const double> turnover,
                                     std::span<const double> benchmark, std::span<const double> market,
                                     std::span<const double> rf_annual) {
    const std::size_t n = returns.size();
    if (turnover.size() != n || benchmark.size() != n || market.size() != n || rf_annual.size() != n)
        throw DataError("performance_report: series are not aligned");
    if (n < 3) throw DataError("performance_report: need at least three observations");
    std::vector<double> ex(n), mkt_ex(n), active(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double rf = rf_annual[t] / kTradingDays;
        ex[t] = returns[t] - rf;
        mkt_ex[t] = market[t] - rf;
        active[t] = returns[t] - benchmark[t];
    }
    PerformanceReport r;
    r.excess_return = kTradingDays * mean(ex);
    r.excess_risk = std::sqrt(kTradingDays) * sample_std(ex);
    r.sharpe = annualized_sharpe(ex);
    r.max_drawdown = max_drawdown(ex);
    r.active_return = kTradingDays * mean(active);
    r.tracking_error = std::sqrt(kTradingDays) * sample_std(active);
    if (r.tracking_error >= kUndefinedTe) r.information_ratio = r.active_return / r.tracking_error;
    double total_turnover = 0.0;
    for (double x : turnover) total_turnover += x;
    r.turnover = total_turnover * kTradingDays / static_cast<double>(n);
    const auto fit = ols(ex, mkt_ex);
    r.alpha = kTradingDays * fit.alpha;
    r.beta = fit.beta;
    r.alpha_t_stat = fit.alpha_t_stat;
    return r;
}

PerformanceReport performance_report(const PortfolioPath& path, const PortfolioPath& benchmark, const ReturnSeries& market,
                                     const ReturnSeries& rf_annual) {
    if (path.dates != benchmark.dates || path.dates != market.dates() || path.dates != rf_annual.dates())
        throw DataError("performance_report: calendars differ");
    return performance_report(path.net, path.turnover, benchmark.net, market.values(), rf_annual.values());
}

}  // namespace factorjm
