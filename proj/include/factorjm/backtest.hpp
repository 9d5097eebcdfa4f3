#pragma once

#include "factorjm/black_litterman.hpp"
#include "factorjm/market_data.hpp"
#include "factorjm/metrics.hpp"
#include "factorjm/regime_strategy.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace factorjm {

/// Daily path of a long-only, fully invested portfolio. weights.row(t) holds
/// the post-trade weights at the close of dates[t]; returns on dates[t] are
/// earned by the weights of the previous close.
struct PortfolioPath {
    std::vector<Date> dates;
    std::vector<std::string> assets;
    Eigen::MatrixXd weights;
    std::vector<double> gross;
    std::vector<double> net;       // gross - tc * turnover
    std::vector<double> turnover;  // sum |w_target - w_drifted| traded at the close
    std::vector<std::string> trades;  // reason for each decision ("initial", "signal", "quarterly")
    std::vector<Date> decision_dates;

    std::size_t size() const { return dates.size(); }
};

struct PerformanceReport {
    double excess_return = 0.0;  // annualized
    double excess_risk = 0.0;
    double sharpe = 0.0;
    double max_drawdown = 0.0;   // on the excess-return path
    double active_return = 0.0;  // vs the benchmark
    double tracking_error = 0.0; // realized
    std::optional<double> information_ratio;  // undefined when TE < 1e-10
    double turnover = 0.0;       // annual one-way
    double alpha = 0.0;          // annualized, vs market excess returns
    double beta = 0.0;
    double alpha_t_stat = 0.0;
};

/// 1/N weights reset at the close of the first trading day of each calendar
/// quarter, drifting in between. Rows of `returns` are days.
PortfolioPath ew_benchmark(const std::vector<Date>& dates, const std::vector<std::string>& assets,
                           const Eigen::MatrixXd& returns, double tc = kDefaultCost);

struct DynamicConfig {
    double te_target = 0.02;
    double tc = kDefaultCost;
    double delta = 2.5;
    double cov_halflife = 126.0;
};

/// Regime-driven Black-Litterman allocation. A decision at the close of T
/// (first day, quarter start, or any factor's bull/bear flip) uses returns
/// through T and trades at the close of T+1. `panel` holds daily returns of
/// every asset in `universe` plus history before `start`; `rf_annual`, when
/// given, is subtracted (/252) before the covariance estimate.
PortfolioPath run_dynamic(const AlignedPanel& panel, const std::vector<std::string>& universe, const std::string& market,
                          const std::map<std::string, RegimeSignal>& signals, const std::vector<double>* rf_annual,
                          Date start, const DynamicConfig& config);

/// Metrics for aligned daily series. `rf_annual` is the annualized risk-free
/// yield in decimals.
PerformanceReport performance_report(std::span<const double> returns, std::span<const double> turnover,
                                     std::span<const double> benchmark, std::span<const double> market,
                                     std::span<const double> rf_annual);

PerformanceReport performance_report(const PortfolioPath& path, const PortfolioPath& benchmark, const ReturnSeries& market,
                                     const ReturnSeries& rf_annual);

}  // namespace factorjm
