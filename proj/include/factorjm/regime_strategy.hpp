#pragma once

#include "factorjm/features.hpp"
#include "factorjm/jump_model.hpp"
#include "factorjm/market_data.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace factorjm {

/// Cap on expected annualized active returns and the full-position threshold.
inline constexpr double kViewCap = 0.05;
/// Default one-way transaction cost per unit notional (5 bp).
inline constexpr double kDefaultCost = 0.0005;

/// Online regime inference per date and its capped expected active return.
struct RegimeSignal {
    std::vector<Date> dates;
    std::vector<int> state;
    std::vector<double> mu_hat;  // annualized, |mu_hat| <= 0.05

    std::size_t size() const { return dates.size(); }
    bool bull(std::size_t i) const { return mu_hat[i] > 0.0; }
    /// Rows with first <= date < last.
    RegimeSignal slice(Date first, Date last) const;
    void append(const RegimeSignal& other);
    /// Value in force on `d`; throws when `d` is not a signal date.
    std::size_t index_of(Date d) const;
};

struct LongShortResult {
    std::vector<Date> dates;
    std::vector<double> positions;  // in [-1, 1], effective for the day's return
    std::vector<double> gross;
    std::vector<double> net;
    std::vector<double> turnover;   // one-way notional traded across both legs
    double sharpe = 0.0;
    double shifts_per_year = 0.0;
    double annual_turnover = 0.0;
};

/// Walk-forward windows, in calendar months.
struct TuningSchedule {
    int train_min_months = 96;
    int train_max_months = 144;
    int refit_months = 1;
    int validation_months = 72;
    int reselect_months = 6;
    Date test_start = parse_date("2007-01-01");

    void validate() const;
};

struct TuningGrid {
    std::vector<double> lambdas{10, 20, 35, 50, 75, 100, 150};
    std::vector<double> kappa_sqs{3, 5.5, 9.5, 14, 17};

    void validate(Eigen::Index dims) const;
};

/// 252 x mean active return over training days in `state`, clipped to +-5%.
double expected_active_return(std::span<const int> train_states, std::span<const double> train_active, int state);

/// clip(mu_hat / 0.05, -1, 1).
double position_size(double mu_hat);

/// Long factor / short market sized by the signal two days earlier.
LongShortResult run_long_short(const RegimeSignal& signal, const ReturnSeries& factor, const ReturnSeries& market,
                               double tc = kDefaultCost);

/// Bull/bear flips (sign of mu_hat) per 252 observations.
double count_shifts(const RegimeSignal& signal);

/// Everything the walk-forward needs for one factor, on the feature calendar.
struct FactorData {
    std::string name;
    FeatureMatrix features;  // raw, unstandardized
    ReturnSeries factor;     // total returns
    ReturnSeries market;

    void validate() const;
};

/// Assembles FactorData for `name`, trimming returns to the feature calendar.
FactorData make_factor_data(std::string name, FeatureMatrix raw_features, const ReturnSeries& factor,
                            const ReturnSeries& market);

struct RefitRecord {
    Date refit_date;
    std::size_t train_rows = 0;
    double mu_bull = 0.0;
    double mu_bear = 0.0;
    int active_features = 0;
};

/// Monthly-refit online signal over [from, to): each refit trains on the
/// trailing window before its first date, freezes standardization stats, and
/// filters the following rows with fixed centroids.
RegimeSignal rolling_online_signal(const FactorData& data, const JumpModelConfig& config, const TuningSchedule& schedule,
                                   Date from, Date to, std::vector<RefitRecord>* log = nullptr);

struct BlockSelection {
    Date block_start;
    std::string factor;
    double lambda = 0.0;
    double kappa_sq = 0.0;
    double validation_sharpe = 0.0;
};

struct TuningResult {
    std::vector<BlockSelection> selections;
    RegimeSignal signal;  // stitched out-of-sample signal from test_start
};

/// Picks, for every test block, the grid cell with the best validation
/// Sharpe of the long-short strategy (ties: smaller lambda, then kappa^2).
TuningResult tune_hyperparameters(const FactorData& data, const TuningGrid& grid, const TuningSchedule& schedule,
                                  const JumpModelConfig& base, double tc = kDefaultCost, int threads = 1);

}  // namespace factorjm
