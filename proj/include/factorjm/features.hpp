#pragma once

#include "factorjm/market_data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace factorjm {

/// Per-feature statistics used to z-score a feature matrix.
struct StandardizationStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    std::vector<bool> floored;  // std was below the floor and replaced

    static StandardizationStats identity(Eigen::Index dims);
};

/// T x D observations with named columns. `stats` is set once standardized.
struct FeatureMatrix {
    std::vector<Date> dates;
    std::vector<std::string> names;
    Eigen::MatrixXd values;
    std::optional<StandardizationStats> stats;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    FeatureMatrix select_rows(Eigen::Index begin, Eigen::Index end) const;
};

/// Window lengths (trading days) for the fixed 17-feature set.
struct FeatureWindows {
    std::vector<int> return_windows{8, 21, 63};  // EWMA active return, RSI, %K
    std::vector<std::pair<int, int>> macd_windows{{8, 21}, {21, 63}};
    int downside_window = 21;
    int beta_window = 21;
    int market_window = 21;
    int env_window = 21;
    /// Leading rows dropped after computation.
    int warmup = 63;
};

/// Names of the env panel columns consumed by build_features.
struct EnvColumns {
    std::string vix = "vix";
    std::string y2 = "y2";
    std::string y10 = "y10";
};

/// Span-convention exponentially weighted mean, alpha = 2 / (window + 1),
/// seeded with the first observation.
std::vector<double> ewma(std::span<const double> x, int window);

/// Relative strength index in [0, 100] on level changes of `index`.
std::vector<double> rsi(const PriceIndex& index, int window);

/// Stochastic oscillator %K over a trailing rolling window of levels.
std::vector<double> stochastic_k(const PriceIndex& index, int window);

/// 100 * (ewma(P, short) - ewma(P, long)) / P.
std::vector<double> macd(const PriceIndex& index, int short_window, int long_window);

/// Raw downside deviation sqrt(ewma(min(r, 0)^2)), daily units.
std::vector<double> downside_deviation(const ReturnSeries& r, int window);

/// log(sqrt(2) * sqrt(252) * DD + 1e-8).
std::vector<double> log_downside_feature(const ReturnSeries& r, int window);

/// EWM covariance(active, market) / EWM variance(market); 0 on tiny variance.
std::vector<double> active_beta(const ReturnSeries& active, const ReturnSeries& market, int window);

/// Builds the 17 regime features for one factor. `market_excess` is the
/// market's excess return; `env` carries raw VIX level and 2Y/10Y yields in
/// percent on the same calendar as the returns.
FeatureMatrix build_features(const ReturnSeries& factor_active, const ReturnSeries& market_excess,
                             const AlignedPanel& env, const EnvColumns& env_columns = {},
                             const FeatureWindows& windows = {});

/// Z-scores columns with `stats`, or with statistics computed over `fm`'s
/// rows (population std) when none are supplied.
FeatureMatrix standardize(const FeatureMatrix& fm, const std::optional<StandardizationStats>& stats = std::nullopt);

void write_feature_csv(const FeatureMatrix& fm, const std::string& path, const std::string& header_comment = {});
FeatureMatrix read_feature_csv(const std::string& path);

}  // namespace factorjm
