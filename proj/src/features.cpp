#include "factorjm/features.hpp"

#include "factorjm/io.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace factorjm {

namespace {

constexpr double kLogFloor = 1e-8;
constexpr double kStdFloor = 1e-8;
constexpr double kBetaVarianceFloor = 1e-12;

void check_window(int window, const char* what) {
    if (window < 2) throw std::invalid_argument(std::string(what) + ": window must be >= 2");
}

std::vector<double> tail_levels(const PriceIndex& index) {
    if (index.levels.size() != index.dates.size() + 1)
        throw std::invalid_argument("PriceIndex: expected one more level than dates");
    return {index.levels.begin() + 1, index.levels.end()};
}

std::vector<double> scaled(std::vector<double> v, double factor) {
    for (auto& x : v) x *= factor;
    return v;
}

}  // namespace

StandardizationStats StandardizationStats::identity(Eigen::Index dims) {
    return {Eigen::VectorXd::Zero(dims), Eigen::VectorXd::Ones(dims), std::vector<bool>(static_cast<std::size_t>(dims), false)};
}

FeatureMatrix FeatureMatrix::select_rows(Eigen::Index begin, Eigen::Index end) const {
    end = std::min(end, rows());
    begin = std::min(begin, end);
    FeatureMatrix out;
    out.dates.assign(dates.begin() + begin, dates.begin() + end);
    out.names = names;
    out.values = values.middleRows(begin, end - begin);
    out.stats = stats;
    return out;
}

std::vector<double> ewma(std::span<const double> x, int window) {
    check_window(window, "ewma");
    if (x.empty()) throw std::invalid_argument("ewma: empty series");
    const double alpha = 2.0 / (window + 1.0);
    std::vector<double> out(x.size());
    out[0] = x[0];
    for (std::size_t t = 1; t < x.size(); ++t) out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1];
    return out;
}

std::vector<double> rsi(const PriceIndex& index, int window) {
    check_window(window, "rsi");
    const auto& p = index.levels;
    if (p.size() < 2) throw std::invalid_argument("rsi: need at least one level change");
    std::vector<double> gains(p.size() - 1), losses(p.size() - 1);
    for (std::size_t t = 1; t < p.size(); ++t) {
        const double d = p[t] - p[t - 1];
        gains[t - 1] = std::max(d, 0.0);
        losses[t - 1] = std::max(-d, 0.0);
    }
    const auto g = ewma(gains, window);
    const auto l = ewma(losses, window);
    std::vector<double> out(g.size());
    for (std::size_t t = 0; t < g.size(); ++t) {
        const double denom = g[t] + l[t];
        out[t] = denom > 0.0 ? 100.0 * g[t] / denom : 50.0;
    }
    return out;
}

std::vector<double> stochastic_k(const PriceIndex& index, int window) {
    check_window(window, "stochastic_k");
    const auto p = tail_levels(index);
    std::vector<double> out(p.size());
    // Monotone deques hold indices of the running max and min.
    std::deque<std::size_t> hi, lo;
    for (std::size_t t = 0; t < p.size(); ++t) {
        while (!hi.empty() && p[hi.back()] <= p[t]) hi.pop_back();
        while (!lo.empty() && p[lo.back()] >= p[t]) lo.pop_back();
        hi.push_back(t);
        lo.push_back(t);
        const std::size_t w = static_cast<std::size_t>(window);
        while (hi.front() + w <= t) hi.pop_front();
        while (lo.front() + w <= t) lo.pop_front();
        const double range = p[hi.front()] - p[lo.front()];
        out[t] = range > 0.0 ? 100.0 * (p[t] - p[lo.front()]) / range : 50.0;
    }
    return out;
}

std::vector<double> macd(const PriceIndex& index, int short_window, int long_window) {
    if (short_window >= long_window) throw std::invalid_argument("macd: short window must be < long window");
    const auto p = tail_levels(index);
    const auto fast = ewma(p, short_window);
    const auto slow = ewma(p, long_window);
    std::vector<double> out(p.size());
    for (std::size_t t = 0; t < p.size(); ++t) out[t] = 100.0 * (fast[t] - slow[t]) / p[t];
    return out;
}

std::vector<double> downside_deviation(const ReturnSeries& r, int window) {
    std::vector<double> sq(r.size());
    for (std::size_t t = 0; t < r.size(); ++t) {
        const double d = std::min(r[t], 0.0);
        sq[t] = d * d;
    }
    auto out = ewma(sq, window);
    for (auto& x : out) x = std::sqrt(x);
    return out;
}

std::vector<double> log_downside_feature(const ReturnSeries& r, int window) {
    auto dd = downside_deviation(r, window);
    const double scale = std::sqrt(2.0) * std::sqrt(kTradingDays);
    for (auto& x : dd) x = std::log(scale * x + kLogFloor);
    return dd;
}

std::vector<double> active_beta(const ReturnSeries& active, const ReturnSeries& market, int window) {
    if (active.dates() != market.dates()) throw DataError("active_beta: calendar mismatch");
    const auto& a = active.values();
    const auto& m = market.values();
    std::vector<double> am(a.size()), mm(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        am[t] = a[t] * m[t];
        mm[t] = m[t] * m[t];
    }
    const auto ea = ewma(a, window);
    const auto em = ewma(m, window);
    const auto eam = ewma(am, window);
    const auto emm = ewma(mm, window);
    std::vector<double> out(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        const double var = emm[t] - em[t] * em[t];
        const double cov = eam[t] - ea[t] * em[t];
        out[t] = var < kBetaVarianceFloor ? 0.0 : cov / var;
    }
    return out;
}

FeatureMatrix build_features(const ReturnSeries& factor_active, const ReturnSeries& market_excess,
                             const AlignedPanel& env, const EnvColumns& cols, const FeatureWindows& w) {
    if (factor_active.dates() != market_excess.dates())
        throw DataError("build_features: factor and market calendars differ");
    if (env.dates() != factor_active.dates()) throw DataError("build_features: env calendar differs from returns");
    for (const auto* name : {&cols.vix, &cols.y2, &cols.y10})
        if (!env.has(*name)) throw DataError("build_features: env is missing column '" + *name + "'");
    const std::size_t n = factor_active.size();
    if (n <= static_cast<std::size_t>(w.warmup))
        throw DataError("build_features: series shorter than the warm-up period");

    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    auto emit = [&](std::string name, std::vector<double> v) {
        names.push_back(std::move(name));
        columns.push_back(std::move(v));
    };

    const auto index = cumulative_index(factor_active);
    for (int win : w.return_windows)
        emit("r_factor_" + std::to_string(win), scaled(ewma(factor_active.values(), win), kTradingDays));
    for (int win : w.return_windows) emit("rsi_" + std::to_string(win), rsi(index, win));
    for (int win : w.return_windows) emit("stoch_k_" + std::to_string(win), stochastic_k(index, win));
    for (auto [s, l] : w.macd_windows)
        emit("macd_" + std::to_string(s) + "_" + std::to_string(l), macd(index, s, l));
    emit("log_dd_" + std::to_string(w.downside_window), log_downside_feature(factor_active, w.downside_window));
    emit("beta_" + std::to_string(w.beta_window), active_beta(factor_active, market_excess, w.beta_window));
    emit("r_mkt_" + std::to_string(w.market_window),
         scaled(ewma(market_excess.values(), w.market_window), kTradingDays));

    const auto& vix = env.column(cols.vix);
    const auto& y2 = env.column(cols.y2);
    const auto& y10 = env.column(cols.y10);
    std::vector<double> vix_ld(n, 0.0), y2_d(n, 0.0), slope_d(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        if (!(vix[t] > 0.0)) throw DataError("build_features: non-positive VIX at " + format_date(env.dates()[t]));
        if (t == 0) continue;
        vix_ld[t] = std::log(vix[t] / vix[t - 1]);
        y2_d[t] = y2[t] - y2[t - 1];
        slope_d[t] = (y10[t] - y2[t]) - (y10[t - 1] - y2[t - 1]);
    }
    const auto env_tag = std::to_string(w.env_window);
    emit("r_vix_" + env_tag, ewma(vix_ld, w.env_window));
    emit("y2_diff_" + env_tag, scaled(ewma(y2_d, w.env_window), kTradingDays));
    emit("slope_diff_" + env_tag, scaled(ewma(slope_d, w.env_window), kTradingDays));

    const auto start = static_cast<std::size_t>(w.warmup);
    FeatureMatrix fm;
    fm.names = std::move(names);
    fm.dates.assign(factor_active.dates().begin() + static_cast<std::ptrdiff_t>(start), factor_active.dates().end());
    fm.values.resize(static_cast<Eigen::Index>(n - start), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c)
        for (std::size_t t = start; t < n; ++t) {
            const double v = columns[c][t];
            if (!std::isfinite(v))
                throw DataError("build_features: non-finite " + fm.names[c] + " at " + format_date(fm.dates[t - start]));
            fm.values(static_cast<Eigen::Index>(t - start), static_cast<Eigen::Index>(c)) = v;
        }
    return fm;
}

FeatureMatrix standardize(const FeatureMatrix& fm, const std::optional<StandardizationStats>& given) {
    const Eigen::Index d = fm.cols();
    StandardizationStats stats;
    if (given) {
        if (given->mean.size() != d || given->std.size() != d)
            throw std::invalid_argument("standardize: stats dimension mismatch");
        stats = *given;
        if (stats.floored.size() != static_cast<std::size_t>(d)) stats.floored.assign(static_cast<std::size_t>(d), false);
    } else {
        if (fm.rows() == 0) throw std::invalid_argument("standardize: no rows");
        stats.mean = fm.values.colwise().mean().transpose();
        stats.std.resize(d);
        stats.floored.assign(static_cast<std::size_t>(d), false);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double var = (fm.values.col(j).array() - stats.mean(j)).square().mean();
            double s = std::sqrt(var);
            if (!(s > kStdFloor)) {
                s = kStdFloor;
                stats.floored[static_cast<std::size_t>(j)] = true;
            }
            stats.std(j) = s;
        }
    }
    FeatureMatrix out;
    out.dates = fm.dates;
    out.names = fm.names;
    out.values = (fm.values.rowwise() - stats.mean.transpose()).array().rowwise() / stats.std.transpose().array();
    out.stats = std::move(stats);
    return out;
}

void write_feature_csv(const FeatureMatrix& fm, const std::string& path, const std::string& header_comment) {
    std::ostringstream os;
    if (!header_comment.empty()) os << "# " << header_comment << '\n';
    os << "date";
    for (const auto& n : fm.names) os << ',' << n;
    os << '\n';
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
        os << format_date(fm.dates[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < fm.cols(); ++j) os << ',' << io::format_number(fm.values(i, j));
        os << '\n';
    }
    io::write_text_file(path, os.str());
}

FeatureMatrix read_feature_csv(const std::string& path) {
    const auto text = io::read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        header = io::split_csv_line(line);
        break;
    }
    if (header.empty() || header[0] != "date") throw DataError(path + ": missing date header");
    std::map<std::string, std::string> schema;
    for (std::size_t j = 1; j < header.size(); ++j) schema[header[j]] = header[j];
    const auto panel = parse_panel(text, schema);
    FeatureMatrix fm;
    fm.dates = panel.dates();
    fm.names.assign(header.begin() + 1, header.end());
    fm.values.resize(static_cast<Eigen::Index>(panel.rows()), static_cast<Eigen::Index>(fm.names.size()));
    for (std::size_t j = 0; j < fm.names.size(); ++j) {
        const auto& col = panel.column(fm.names[j]);
        for (std::size_t i = 0; i < col.size(); ++i) fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    }
    return fm;
}

}  // namespace factorjm
