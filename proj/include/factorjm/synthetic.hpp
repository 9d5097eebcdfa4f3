#pragma once

#include "factorjm/market_data.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace factorjm {

/// Two-state Gaussian regime process for daily active returns.
/// State 0 is the bull state by convention of the defaults below.
struct HmmSpec {
    std::array<double, 2> p_stay{0.998, 0.998};
    std::array<double, 2> mu{0.10, -0.10};   // annualized mean
    std::array<double, 2> vol{0.06, 0.06};   // annualized volatility
    std::size_t T = 6000;
    std::uint64_t seed = 0;
    std::optional<int> initial_state;        // stationary draw when unset
    Date start = parse_date("2000-01-03");

    void validate() const;
};

/// Regime-path output plus companion market and environment series.
struct Simulation {
    ReturnSeries active;
    std::vector<int> truth;
    ReturnSeries market;     // total returns, i.i.d. normal
    ReturnSeries rf;         // annualized risk-free yield, decimals
    AlignedPanel env;        // vix, y2, y10 levels (yields in percent)
};

/// Weekdays from `start` (inclusive when it is a weekday).
std::vector<Date> business_days(Date start, std::size_t n);

Simulation simulate(const HmmSpec& spec);

/// Long-run share of state 0 for the two-state chain.
double stationary_bull_share(const HmmSpec& spec);

/// Mean per-class recall, maximized over the bull/bear label swap.
double balanced_accuracy(std::span<const int> truth, std::span<const int> predicted);

/// Market, factors (market + independent regime active returns) and rf on one
/// calendar, with env levels and per-factor truth.
struct UniverseSimulation {
    AlignedPanel returns;  // columns: market, factors..., rf
    AlignedPanel env;
    std::vector<std::vector<int>> truth;  // per factor
};

struct UniverseSpec {
    std::string market = "market";
    std::vector<std::string> factors{"value", "size", "momentum", "quality", "low_vol", "growth"};
    std::string rf = "rf";
    HmmSpec regime;
};

UniverseSimulation simulate_universe(const UniverseSpec& spec);

}  // namespace factorjm
