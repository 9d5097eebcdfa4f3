#pragma once

#include <optional>
#include <span>

namespace factorjm {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two points.
double sample_std(std::span<const double> x);

/// mean / std * sqrt(252); 0 when the series has no variation.
double annualized_sharpe(std::span<const double> daily);

/// min_t (C_t / max_{u<=t} C_u - 1) with C the compounded path of (1 + r);
/// the path starts at 1 before the first return.
double max_drawdown(std::span<const double> daily);

struct OlsFit {
    double alpha = 0.0;  // per period
    double beta = 0.0;
    double alpha_t_stat = 0.0;
    double beta_t_stat = 0.0;
    double residual_std = 0.0;
};

/// Univariate OLS y = alpha + beta x + e with classical standard errors.
/// Throws std::invalid_argument on zero regressor variance or n < 3.
OlsFit ols(std::span<const double> y, std::span<const double> x);

}  // namespace factorjm
