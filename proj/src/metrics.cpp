#include "factorjm/metrics.hpp"

#include "factorjm/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace factorjm {

double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double sample_std(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double annualized_sharpe(std::span<const double> daily) {
    const double sd = sample_std(daily);
    if (!(sd > 0.0)) return 0.0;
    return mean(daily) / sd * std::sqrt(kTradingDays);
}

double max_drawdown(std::span<const double> daily) {
    double level = 1.0, peak = 1.0, worst = 0.0;
    for (double r : daily) {
        level *= 1.0 + r;
        peak = std::max(peak, level);
        worst = std::min(worst, level / peak - 1.0);
    }
    return worst;
}

OlsFit ols(std::span<const double> y, std::span<const double> x) {
    if (x.size() != y.size()) throw std::invalid_argument("ols: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw std::invalid_argument("ols: need at least three observations");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("ols: regressor has zero variance");
    OlsFit f;
    f.beta = sxy / sxx;
    f.alpha = my - f.beta * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - f.alpha - f.beta * x[i];
        ssr += e * e;
    }
    const double s2 = ssr / static_cast<double>(n - 2);
    f.residual_std = std::sqrt(s2);
    const double se_alpha = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
    const double se_beta = std::sqrt(s2 / sxx);
    f.alpha_t_stat = se_alpha > 0.0 ? f.alpha / se_alpha : 0.0;
    f.beta_t_stat = se_beta > 0.0 ? f.beta / se_beta : 0.0;
    return f;
}

}  // namespace factorjm
