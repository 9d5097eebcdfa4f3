#include "factorjm/synthetic.hpp"

#include "factorjm/random.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace factorjm {

namespace {

constexpr double kMarketMu = 0.07;
constexpr double kMarketVol = 0.16;

}  // namespace

void HmmSpec::validate() const {
    for (int k = 0; k < 2; ++k) {
        if (!(p_stay[k] > 0.0 && p_stay[k] <= 1.0)) throw std::invalid_argument("HmmSpec: p_stay must lie in (0, 1]");
        if (!(vol[k] > 0.0)) throw std::invalid_argument("HmmSpec: vol must be > 0");
    }
    if (T < 2) throw std::invalid_argument("HmmSpec: T must be >= 2");
    if (initial_state && (*initial_state < 0 || *initial_state > 1)) throw std::invalid_argument("HmmSpec: bad initial state");
}

std::vector<Date> business_days(Date start, std::size_t n) {
    std::vector<Date> out;
    out.reserve(n);
    for (Date d = start; out.size() < n; d += std::chrono::days{1}) {
        const std::chrono::weekday wd{d};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) out.push_back(d);
    }
    return out;
}

double stationary_bull_share(const HmmSpec& spec) {
    const double leave0 = 1.0 - spec.p_stay[0];
    const double leave1 = 1.0 - spec.p_stay[1];
    if (leave0 + leave1 == 0.0) return 0.5;
    return leave1 / (leave0 + leave1);
}

Simulation simulate(const HmmSpec& spec) {
    spec.validate();
    const auto dates = business_days(spec.start, spec.T);
    std::mt19937_64 state_rng(derive_seed(spec.seed, {1}));
    std::mt19937_64 ret_rng(derive_seed(spec.seed, {2}));
    std::mt19937_64 mkt_rng(derive_seed(spec.seed, {3}));
    std::mt19937_64 env_rng(derive_seed(spec.seed, {4}));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Simulation sim;
    sim.truth.resize(spec.T);
    int s = spec.initial_state ? *spec.initial_state : (unif(state_rng) < stationary_bull_share(spec) ? 0 : 1);
    std::vector<double> active(spec.T), market(spec.T), rf(spec.T);
    std::vector<double> vix(spec.T), y2(spec.T), y10(spec.T);
    const double sqrt_days = std::sqrt(kTradingDays);
    double log_vix = std::log(18.0), level2 = 2.0, level10 = 3.0, rf_level = 0.02;
    for (std::size_t t = 0; t < spec.T; ++t) {
        if (t > 0 && unif(state_rng) >= spec.p_stay[static_cast<std::size_t>(s)]) s = 1 - s;
        sim.truth[t] = s;
        const auto k = static_cast<std::size_t>(s);
        active[t] = spec.mu[k] / kTradingDays + spec.vol[k] / sqrt_days * gauss(ret_rng);
        market[t] = kMarketMu / kTradingDays + kMarketVol / sqrt_days * gauss(mkt_rng);

        log_vix += 0.02 * (std::log(18.0) - log_vix) + 0.06 * gauss(env_rng);
        level2 = std::max(0.0, level2 + 0.04 * gauss(env_rng));
        level10 = std::max(0.0, level10 + 0.04 * gauss(env_rng));
        rf_level = std::max(0.0, rf_level + 0.0003 * gauss(env_rng));
        vix[t] = std::exp(log_vix);
        y2[t] = level2;
        y10[t] = level10;
        rf[t] = rf_level;
    }
    sim.active = ReturnSeries(dates, std::move(active));
    sim.market = ReturnSeries(dates, std::move(market));
    sim.rf = ReturnSeries(dates, std::move(rf));
    sim.env = AlignedPanel(dates);
    sim.env.add_column("vix", std::move(vix));
    sim.env.add_column("y2", std::move(y2));
    sim.env.add_column("y10", std::move(y10));
    return sim;
}

double balanced_accuracy(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) throw std::invalid_argument("balanced_accuracy: length mismatch");
    if (truth.empty()) throw std::invalid_argument("balanced_accuracy: empty input");
    auto score = [&](bool swap) {
        double total = 0.0;
        int classes = 0;
        for (int c = 0; c < 2; ++c) {
            std::size_t n = 0, hit = 0;
            for (std::size_t t = 0; t < truth.size(); ++t) {
                if (truth[t] != c) continue;
                ++n;
                const int p = swap ? 1 - predicted[t] : predicted[t];
                hit += p == c;
            }
            if (n == 0) continue;
            total += static_cast<double>(hit) / static_cast<double>(n);
            ++classes;
        }
        return total / classes;
    };
    return std::max(score(false), score(true));
}

UniverseSimulation simulate_universe(const UniverseSpec& spec) {
    HmmSpec base = spec.regime;
    const auto core = simulate(base);
    UniverseSimulation out;
    const auto& dates = core.market.dates();
    out.returns = AlignedPanel(dates);
    out.returns.add_column(spec.market, core.market.values());
    for (std::size_t f = 0; f < spec.factors.size(); ++f) {
        HmmSpec h = spec.regime;
        h.seed = derive_seed(spec.regime.seed, {100 + f});
        const auto sim = simulate(h);
        std::vector<double> r(dates.size());
        for (std::size_t t = 0; t < r.size(); ++t) r[t] = core.market[t] + sim.active[t];
        out.returns.add_column(spec.factors[f], std::move(r));
        out.truth.push_back(sim.truth);
    }
    out.returns.add_column(spec.rf, core.rf.values());
    out.env = core.env;
    return out;
}

}  // namespace factorjm
