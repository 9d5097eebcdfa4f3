#include "cli.hpp"

#include "config.hpp"

#include "factorjm/backtest.hpp"
#include "factorjm/black_litterman.hpp"
#include "factorjm/io.hpp"
#include "factorjm/metrics.hpp"
#include "factorjm/parallel.hpp"
#include "factorjm/random.hpp"
#include "factorjm/serialization.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>

namespace factorjm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Context {
    json merged;
    RunConfig cfg;
    std::string hash;
    std::string command;
    std::ostream* out = nullptr;

    std::string header() const { return "config_hash=" + hash + " seed=" + std::to_string(cfg.seed); }
    json meta() const { return {{"command", command}, {"config_hash", hash}, {"seed", cfg.seed}}; }
    std::string path(const std::string& rel) const { return cfg.output_dir + "/" + rel; }
};

// ---------------------------------------------------------------------------
// File helpers

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void write_file(const Context& ctx, const std::string& path, const std::string& content) {
    ensure_parent(path);
    io::write_text_file(path, content);
    *ctx.out << "wrote " << path << '\n';
}

void write_json(const Context& ctx, const std::string& path, json body) {
    body["meta"] = ctx.meta();
    write_file(ctx, path, body.dump(2) + "\n");
}

/// CSV writer that prefixes the metadata comment line.
class CsvBuilder {
public:
    CsvBuilder(const Context& ctx, const std::vector<std::string>& columns) {
        os_ << "# " << ctx.header() << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
        os_ << '\n';
    }
    CsvBuilder& cell(const std::string& s) {
        os_ << (first_ ? "" : ",") << s;
        first_ = false;
        return *this;
    }
    CsvBuilder& cell(double x) { return cell(io::format_number(x)); }
    CsvBuilder& cell(int x) { return cell(std::to_string(x)); }
    void end_row() {
        os_ << '\n';
        first_ = true;
    }
    std::string str() const { return os_.str(); }

private:
    std::ostringstream os_;
    bool first_ = true;
};

void require(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw UsageError("missing artifact '" + path + "'; run `" + producer + "` first");
}

json read_json(const std::string& path, const std::string& producer) {
    require(path, producer);
    try {
        return json::parse(io::read_text_file(path));
    } catch (const json::parse_error& e) {
        throw DataError("malformed JSON in '" + path + "': " + e.what());
    }
}

json number_or_null(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

std::string te_label(double te) {
    std::ostringstream os;
    os << "te_" << io::format_number(te * 100.0);
    return os.str();
}

// ---------------------------------------------------------------------------
// Shared loaders

const std::vector<std::string> kEnvNames{"vix", "y2", "y10"};

std::vector<std::string> panel_columns(const RunConfig& cfg) {
    auto cols = cfg.universe();
    cols.push_back(cfg.rf);
    cols.insert(cols.end(), kEnvNames.begin(), kEnvNames.end());
    return cols;
}

AlignedPanel load_ingested(const Context& ctx) {
    const auto path = ctx.path("panel.csv");
    require(path, "ingest");
    std::map<std::string, std::string> schema;
    for (const auto& c : panel_columns(ctx.cfg)) schema[c] = c;
    return load_panel(path, schema);
}

AlignedPanel env_of(const AlignedPanel& panel) {
    AlignedPanel env(panel.dates());
    for (const auto& c : kEnvNames) env.add_column(c, panel.column(c));
    return env;
}

FactorData load_factor(const Context& ctx, const AlignedPanel& panel, const std::string& factor) {
    const auto path = ctx.path("features/" + factor + ".csv");
    require(path, "features");
    return make_factor_data(factor, read_feature_csv(path), panel.series(factor), panel.series(ctx.cfg.market));
}

std::vector<std::string> selected_factors(const RunConfig& cfg) {
    if (cfg.fit_factor.empty()) return cfg.factors;
    if (std::find(cfg.factors.begin(), cfg.factors.end(), cfg.fit_factor) == cfg.factors.end())
        throw UsageError("config: 'fit.factor' names unknown factor '" + cfg.fit_factor + "'");
    return {cfg.fit_factor};
}

json signal_to_json(const RegimeSignal& s) {
    json dates = json::array();
    for (auto d : s.dates) dates.push_back(format_date(d));
    return {{"dates", dates}, {"state", s.state}, {"mu_hat", s.mu_hat}};
}

RegimeSignal load_signal(const Context& ctx, const std::string& factor) {
    const auto j = read_json(ctx.path("signals/" + factor + ".json"), "tune");
    RegimeSignal s;
    for (const auto& d : j.at("dates")) s.dates.push_back(parse_date(d.get<std::string>()));
    s.state = j.at("state").get<std::vector<int>>();
    s.mu_hat = j.at("mu_hat").get<std::vector<double>>();
    if (s.state.size() != s.dates.size() || s.mu_hat.size() != s.dates.size())
        throw DataError("signal file for '" + factor + "' has ragged arrays");
    return s;
}

std::map<std::string, RegimeSignal> load_signals(const Context& ctx) {
    std::map<std::string, RegimeSignal> m;
    for (const auto& f : ctx.cfg.factors) m[f] = load_signal(ctx, f);
    return m;
}

ReturnSeries on_dates(const ReturnSeries& r, const std::vector<Date>& dates) {
    if (dates.empty()) return {};
    return r.slice(dates.front(), dates.back() + std::chrono::days{1});
}

json report_to_json(const PerformanceReport& r) {
    return {{"excess_return", r.excess_return}, {"excess_risk", r.excess_risk},
            {"sharpe", r.sharpe},               {"max_drawdown", r.max_drawdown},
            {"active_return", r.active_return}, {"tracking_error", r.tracking_error},
            {"information_ratio", number_or_null(r.information_ratio)},
            {"turnover", r.turnover},           {"alpha", r.alpha},
            {"beta", r.beta},                   {"alpha_t_stat", r.alpha_t_stat}};
}

// ---------------------------------------------------------------------------
// simulate

std::string header_for(const RunConfig& cfg, const std::string& name) {
    const auto it = cfg.columns.find(name);
    return it == cfg.columns.end() ? name : it->second;
}

void cmd_simulate(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    UniverseSpec spec;
    spec.market = cfg.market;
    spec.factors = cfg.factors;
    spec.rf = cfg.rf;
    spec.regime = cfg.simulation;
    const auto sim = simulate_universe(spec);

    const auto& dates = sim.returns.dates();
    AlignedPanel returns(dates);
    const auto universe = cfg.universe();
    for (const auto& name : sim.returns.names()) {
        auto col = sim.returns.column(name);
        const bool asset = std::find(universe.begin(), universe.end(), name) != universe.end();
        if (asset && cfg.input_kind == "levels") {
            double level = 100.0;
            for (double& x : col) x = level *= 1.0 + x;
        }
        returns.add_column(header_for(cfg, name), std::move(col));
    }
    const auto returns_path = cfg.resolved_returns_path();
    ensure_parent(returns_path);
    write_panel_csv(returns, returns_path, ctx.header());
    *ctx.out << "wrote " << returns_path << '\n';

    AlignedPanel env(sim.env.dates());
    env.add_column(cfg.env_columns.vix, sim.env.column("vix"));
    env.add_column(cfg.env_columns.y2, sim.env.column("y2"));
    env.add_column(cfg.env_columns.y10, sim.env.column("y10"));
    const auto env_path = cfg.resolved_env_path();
    ensure_parent(env_path);
    write_panel_csv(env, env_path, ctx.header());
    *ctx.out << "wrote " << env_path << '\n';

    CsvBuilder truth(ctx, [&] {
        std::vector<std::string> cols{"date"};
        cols.insert(cols.end(), cfg.factors.begin(), cfg.factors.end());
        return cols;
    }());
    for (std::size_t t = 0; t < dates.size(); ++t) {
        truth.cell(format_date(dates[t]));
        for (const auto& states : sim.truth) truth.cell(states[t]);
        truth.end_row();
    }
    write_file(ctx, ctx.path("data/truth.csv"), truth.str());
}

// ---------------------------------------------------------------------------
// ingest

void cmd_ingest(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto returns_path = cfg.resolved_returns_path();
    const auto env_path = cfg.resolved_env_path();
    require(returns_path, "simulate");
    require(env_path, "simulate");

    std::map<std::string, std::string> schema;
    for (const auto& c : cfg.universe()) schema[c] = header_for(cfg, c);
    schema[cfg.rf] = header_for(cfg, cfg.rf);
    LoadReport ret_report;
    AlignedPanel returns = load_panel(returns_path, schema, MissingPolicy::drop_row, &ret_report);
    if (cfg.input_kind == "levels") returns = levels_to_returns(returns, cfg.universe());

    const std::map<std::string, std::string> env_schema{
        {"vix", cfg.env_columns.vix}, {"y2", cfg.env_columns.y2}, {"y10", cfg.env_columns.y10}};
    LoadReport env_report;
    const AlignedPanel env = load_panel(env_path, env_schema, MissingPolicy::forward_fill, &env_report);

    // Carry the latest environment observation onto each return date.
    const auto& rd = returns.dates();
    const auto& ed = env.dates();
    std::vector<std::size_t> keep, env_row;
    std::size_t e = 0;
    std::size_t env_carried = 0;
    for (std::size_t t = 0; t < rd.size(); ++t) {
        while (e < ed.size() && ed[e] <= rd[t]) ++e;
        if (e == 0) continue;
        keep.push_back(t);
        env_row.push_back(e - 1);
        env_carried += ed[e - 1] != rd[t];
    }
    if (keep.size() < 2) throw DataError("ingest: returns and environment series do not overlap");

    std::vector<Date> dates;
    for (auto t : keep) dates.push_back(rd[t]);
    AlignedPanel panel(dates);
    for (const auto& c : returns.names()) {
        const auto& src = returns.column(c);
        std::vector<double> v;
        v.reserve(keep.size());
        for (auto t : keep) v.push_back(src[t]);
        panel.add_column(c, std::move(v));
    }
    for (const auto& c : kEnvNames) {
        const auto& src = env.column(c);
        std::vector<double> v;
        v.reserve(env_row.size());
        for (auto t : env_row) v.push_back(src[t]);
        panel.add_column(c, std::move(v));
    }
    // Fixed column order: universe, rf, environment.
    AlignedPanel ordered(dates);
    for (const auto& c : panel_columns(cfg)) ordered.add_column(c, panel.column(c));

    const auto out_path = ctx.path("panel.csv");
    ensure_parent(out_path);
    write_panel_csv(ordered, out_path, ctx.header());
    *ctx.out << "wrote " << out_path << '\n';

    write_json(ctx, ctx.path("ingest_report.json"),
               {{"input_kind", cfg.input_kind},
                {"returns_rows_read", ret_report.rows_read},
                {"returns_rows_dropped", ret_report.rows_dropped},
                {"env_rows_read", env_report.rows_read},
                {"env_cells_filled", env_report.cells_filled},
                {"env_dates_carried", env_carried},
                {"rows_before_env_start", rd.size() - keep.size()},
                {"rows", dates.size()},
                {"first_date", format_date(dates.front())},
                {"last_date", format_date(dates.back())},
                {"columns", panel_columns(cfg)}});
}

// ---------------------------------------------------------------------------
// features

void cmd_features(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const AlignedPanel panel = load_ingested(ctx);
    const auto env = env_of(panel);
    const auto& dates = panel.dates();
    const auto& m = panel.column(cfg.market);
    const auto& rf = panel.column(cfg.rf);
    std::vector<double> mkt_ex(dates.size());
    for (std::size_t t = 0; t < dates.size(); ++t) mkt_ex[t] = m[t] - rf[t] / kTradingDays;
    const ReturnSeries market_excess(dates, mkt_ex);

    std::vector<FeatureMatrix> built(cfg.factors.size());
    parallel_for(cfg.factors.size(), cfg.threads, [&](std::size_t k) {
        const auto& f = panel.column(cfg.factors[k]);
        std::vector<double> active(dates.size());
        for (std::size_t t = 0; t < dates.size(); ++t) active[t] = f[t] - m[t];
        built[k] = build_features(ReturnSeries(dates, active), market_excess, env, EnvColumns{}, cfg.windows);
    });
    for (std::size_t k = 0; k < cfg.factors.size(); ++k) {
        const auto path = ctx.path("features/" + cfg.factors[k] + ".csv");
        ensure_parent(path);
        write_feature_csv(built[k], path, ctx.header());
        *ctx.out << "wrote " << path << '\n';
    }
}

// ---------------------------------------------------------------------------
// fit / infer

std::pair<Date, Date> fit_range(const RunConfig& cfg, const std::vector<Date>& dates) {
    const Date first = cfg.fit_start.empty() ? dates.front() : parse_date(cfg.fit_start);
    const Date last = cfg.fit_end.empty() ? cfg.schedule.test_start : parse_date(cfg.fit_end);
    return {first, last};
}

void cmd_fit(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const AlignedPanel panel = load_ingested(ctx);
    const auto factors = selected_factors(cfg);
    std::vector<json> results(factors.size());
    parallel_for(factors.size(), cfg.threads, [&](std::size_t k) {
        const auto data = load_factor(ctx, panel, factors[k]);
        const auto& dates = data.features.dates;
        const auto [first, last] = fit_range(cfg, dates);
        const auto b = static_cast<Eigen::Index>(std::lower_bound(dates.begin(), dates.end(), first) - dates.begin());
        const auto e = static_cast<Eigen::Index>(std::lower_bound(dates.begin(), dates.end(), last) - dates.begin());
        if (e - b < 2) throw DataError("fit: fewer than two feature rows in [" + format_date(first) + ", " + format_date(last) + ") for '" + factors[k] + "'");

        JumpModelConfig jc = cfg.jump;
        jc.seed = derive_seed(cfg.seed, {string_key(factors[k])});
        JumpModelFit fit = fit_sparse_jump_model(standardize(data.features.select_rows(b, e)), jc);
        std::vector<double> active(static_cast<std::size_t>(e - b));
        for (Eigen::Index t = b; t < e; ++t) {
            const auto i = static_cast<std::size_t>(t);
            active[static_cast<std::size_t>(t - b)] = data.factor[i] - data.market[i];
        }
        fit.rank = label_states(fit.states, fit.n_states(), active);
        std::vector<double> mu(static_cast<std::size_t>(fit.n_states()));
        for (int s = 0; s < fit.n_states(); ++s) mu[static_cast<std::size_t>(s)] = expected_active_return(fit.states, active, s);
        json j;
        j["factor"] = factors[k];
        j["fit"] = fit;
        j["mu_hat"] = mu;
        results[k] = std::move(j);
    });
    for (std::size_t k = 0; k < factors.size(); ++k) write_json(ctx, ctx.path("fits/" + factors[k] + ".json"), results[k]);
}

void cmd_infer(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const AlignedPanel panel = load_ingested(ctx);
    for (const auto& factor : selected_factors(cfg)) {
        const auto j = read_json(ctx.path("fits/" + factor + ".json"), "fit");
        const auto fit = j.at("fit").get<JumpModelFit>();
        const auto mu = j.at("mu_hat").get<std::vector<double>>();
        const auto data = load_factor(ctx, panel, factor);
        const auto& dates = data.features.dates;
        const Date after = fit.train_dates.empty() ? dates.front() : fit.train_dates.back() + std::chrono::days{1};
        auto t = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), after) - dates.begin());

        CsvBuilder csv(ctx, {"date", "state", "label", "mu_hat"});
        OnlineState st = initial_online_state(fit);
        for (; t < dates.size(); ++t) {
            const auto x = prepare_online_input(fit, data.features.values.row(static_cast<Eigen::Index>(t)));
            auto [s, next] = online_infer(fit, x, st);
            st = std::move(next);
            const auto rank = fit.rank.empty() ? s : fit.rank[static_cast<std::size_t>(s)];
            csv.cell(format_date(dates[t])).cell(s).cell(rank == 0 ? std::string("bull") : std::string("bear"))
                .cell(mu[static_cast<std::size_t>(s)]);
            csv.end_row();
        }
        write_file(ctx, ctx.path("infer/" + factor + ".csv"), csv.str());
    }
}

// ---------------------------------------------------------------------------
// tune

void cmd_tune(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const AlignedPanel panel = load_ingested(ctx);
    const auto factors = selected_factors(cfg);
    CsvBuilder sel(ctx, {"block_start", "factor", "lambda", "kappa_sq", "validation_sharpe"});
    std::vector<TuningResult> results;
    for (const auto& f : factors) {
        const auto data = load_factor(ctx, panel, f);
        JumpModelConfig base = cfg.jump;
        base.seed = derive_seed(cfg.seed, {string_key(f)});
        results.push_back(tune_hyperparameters(data, cfg.grid, cfg.schedule, base, cfg.tc, cfg.threads));
        for (const auto& s : results.back().selections) {
            sel.cell(format_date(s.block_start)).cell(s.factor).cell(s.lambda).cell(s.kappa_sq).cell(s.validation_sharpe);
            sel.end_row();
        }
    }
    write_file(ctx, ctx.path("tuning/selections.csv"), sel.str());
    for (std::size_t k = 0; k < factors.size(); ++k) {
        json j = signal_to_json(results[k].signal);
        j["factor"] = factors[k];
        write_json(ctx, ctx.path("signals/" + factors[k] + ".json"), std::move(j));
    }
}

// ---------------------------------------------------------------------------
// eval-ls

struct LongShortTable {
    std::vector<std::string> factors;
    std::vector<LongShortResult> results;
    Eigen::MatrixXd correlation;
};

LongShortTable long_short_table(const Context& ctx, const AlignedPanel& panel,
                                const std::map<std::string, RegimeSignal>& signals) {
    LongShortTable tab;
    const auto market = panel.series(ctx.cfg.market);
    for (const auto& f : ctx.cfg.factors) {
        const auto& sig = signals.at(f);
        tab.factors.push_back(f);
        tab.results.push_back(run_long_short(sig, on_dates(panel.series(f), sig.dates), on_dates(market, sig.dates), ctx.cfg.tc));
    }
    const auto n = static_cast<Eigen::Index>(tab.factors.size());
    tab.correlation = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = a + 1; b < n; ++b) {
            const auto& x = tab.results[static_cast<std::size_t>(a)];
            const auto& y = tab.results[static_cast<std::size_t>(b)];
            if (x.dates != y.dates) throw DataError("eval-ls: signals for different factors cover different dates");
            const double mx = mean(x.net), my = mean(y.net);
            double sxy = 0.0, sxx = 0.0, syy = 0.0;
            for (std::size_t t = 0; t < x.net.size(); ++t) {
                sxy += (x.net[t] - mx) * (y.net[t] - my);
                sxx += (x.net[t] - mx) * (x.net[t] - mx);
                syy += (y.net[t] - my) * (y.net[t] - my);
            }
            const double c = sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
            tab.correlation(a, b) = tab.correlation(b, a) = c;
        }
    }
    return tab;
}

std::pair<std::string, std::string> long_short_csvs(const Context& ctx, const LongShortTable& tab) {
    CsvBuilder table(ctx, {"factor", "sharpe", "shifts_per_year", "annual_turnover"});
    for (std::size_t k = 0; k < tab.factors.size(); ++k) {
        const auto& r = tab.results[k];
        table.cell(tab.factors[k]).cell(r.sharpe).cell(r.shifts_per_year).cell(r.annual_turnover);
        table.end_row();
    }
    std::vector<std::string> cols{"factor"};
    cols.insert(cols.end(), tab.factors.begin(), tab.factors.end());
    CsvBuilder corr(ctx, cols);
    for (Eigen::Index a = 0; a < tab.correlation.rows(); ++a) {
        corr.cell(tab.factors[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < tab.correlation.cols(); ++b) corr.cell(tab.correlation(a, b));
        corr.end_row();
    }
    return {table.str(), corr.str()};
}

json long_short_json(const LongShortTable& tab) {
    json rows = json::array();
    for (std::size_t k = 0; k < tab.factors.size(); ++k) {
        const auto& r = tab.results[k];
        rows.push_back({{"factor", tab.factors[k]},
                        {"sharpe", r.sharpe},
                        {"shifts_per_year", r.shifts_per_year},
                        {"annual_turnover", r.annual_turnover}});
    }
    json corr = json::array();
    for (Eigen::Index a = 0; a < tab.correlation.rows(); ++a) {
        std::vector<double> row;
        for (Eigen::Index b = 0; b < tab.correlation.cols(); ++b) row.push_back(tab.correlation(a, b));
        corr.push_back(row);
    }
    return {{"factors", tab.factors}, {"long_short", rows}, {"correlation", corr}};
}

void cmd_eval_ls(const Context& ctx) {
    const AlignedPanel panel = load_ingested(ctx);
    const auto tab = long_short_table(ctx, panel, load_signals(ctx));
    const auto [table, corr] = long_short_csvs(ctx, tab);
    write_file(ctx, ctx.path("eval_ls.csv"), table);
    write_file(ctx, ctx.path("eval_ls_correlations.csv"), corr);
    write_json(ctx, ctx.path("eval_ls.json"), long_short_json(tab));
}

// ---------------------------------------------------------------------------
// allocate

Eigen::MatrixXd excess_matrix(const AlignedPanel& panel, const RunConfig& cfg, std::size_t rows) {
    const auto universe = cfg.universe();
    const auto& rf = panel.column(cfg.rf);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(universe.size()));
    for (std::size_t j = 0; j < universe.size(); ++j) {
        const auto& col = panel.column(universe[j]);
        for (std::size_t t = 0; t < rows; ++t)
            x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = col[t] - rf[t] / kTradingDays;
    }
    return x;
}

void cmd_allocate(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const AlignedPanel panel = load_ingested(ctx);
    const auto signals = load_signals(ctx);
    Date date;
    if (cfg.allocate_date.empty()) {
        const auto& first = signals.at(cfg.factors.front());
        if (first.dates.empty()) throw DataError("allocate: signal for '" + cfg.factors.front() + "' is empty");
        date = first.dates.back();
    } else {
        date = parse_date(cfg.allocate_date);
    }
    const auto& dates = panel.dates();
    const auto it = std::upper_bound(dates.begin(), dates.end(), date);
    const auto rows = static_cast<std::size_t>(it - dates.begin());
    if (rows < 2) throw DataError("allocate: fewer than two return rows on or before " + format_date(date));

    std::map<std::string, double> views;
    for (const auto& f : cfg.factors) {
        const auto& sig = signals.at(f);
        views[f] = sig.mu_hat[sig.index_of(date)];
    }
    const auto universe = cfg.universe();
    const auto n = static_cast<Eigen::Index>(universe.size());
    const Eigen::MatrixXd sigma = ewm_covariance(excess_matrix(panel, cfg, rows), cfg.cov_halflife);
    const auto eq = Equilibrium::from_benchmark(cfg.delta, sigma, Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
    const auto alloc = target_tracking_error(eq, build_views(views, universe, cfg.market), cfg.allocate_te);

    json mu_bl = json::object(), weights = json::object();
    for (Eigen::Index j = 0; j < n; ++j) {
        mu_bl[universe[static_cast<std::size_t>(j)]] = alloc.mu_bl(j);
        weights[universe[static_cast<std::size_t>(j)]] = alloc.weights(j);
    }
    write_json(ctx, ctx.path("allocation.json"),
               {{"date", format_date(date)},
                {"te_target", cfg.allocate_te},
                {"assets", universe},
                {"mu_bl", mu_bl},
                {"weights", weights},
                {"confidence", alloc.confidence},
                {"ex_ante_te", alloc.ex_ante_te},
                {"flags", alloc.flags()}});
}

// ---------------------------------------------------------------------------
// backtest

std::string path_csv(const Context& ctx, const PortfolioPath& p) {
    std::vector<std::string> cols{"date"};
    for (const auto& a : p.assets) cols.push_back("w_" + a);
    cols.insert(cols.end(), {"gross", "net", "turnover"});
    CsvBuilder csv(ctx, cols);
    for (std::size_t t = 0; t < p.size(); ++t) {
        csv.cell(format_date(p.dates[t]));
        for (Eigen::Index j = 0; j < p.weights.cols(); ++j) csv.cell(p.weights(static_cast<Eigen::Index>(t), j));
        csv.cell(p.gross[t]).cell(p.net[t]).cell(p.turnover[t]);
        csv.end_row();
    }
    return csv.str();
}

std::string trades_csv(const Context& ctx, const PortfolioPath& p) {
    CsvBuilder csv(ctx, {"decision_date", "reason"});
    for (std::size_t k = 0; k < p.trades.size(); ++k) {
        csv.cell(format_date(p.decision_dates[k])).cell(p.trades[k]);
        csv.end_row();
    }
    return csv.str();
}

void cmd_backtest(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const AlignedPanel panel = load_ingested(ctx);
    const auto signals = load_signals(ctx);
    const auto& first = signals.at(cfg.factors.front());
    if (first.dates.empty()) throw DataError("backtest: signal for '" + cfg.factors.front() + "' is empty");
    const Date start = first.dates.front();
    const auto universe = cfg.universe();
    const auto& rf_all = panel.column(cfg.rf);

    std::vector<PortfolioPath> dynamic(cfg.te_targets.size());
    parallel_for(cfg.te_targets.size(), cfg.threads, [&](std::size_t k) {
        DynamicConfig dc;
        dc.te_target = cfg.te_targets[k];
        dc.tc = cfg.tc;
        dc.delta = cfg.delta;
        dc.cov_halflife = cfg.cov_halflife;
        dynamic[k] = run_dynamic(panel, universe, cfg.market, signals, &rf_all, start, dc);
    });

    const auto& dates = panel.dates();
    const auto s0 = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), start) - dates.begin());
    const auto window = panel.select_rows(s0, dates.size());
    Eigen::MatrixXd r(static_cast<Eigen::Index>(window.rows()), static_cast<Eigen::Index>(universe.size()));
    for (std::size_t j = 0; j < universe.size(); ++j) {
        const auto& col = window.column(universe[j]);
        for (std::size_t t = 0; t < col.size(); ++t) r(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = col[t];
    }
    const auto ew = ew_benchmark(window.dates(), universe, r, cfg.tc);
    const auto market = window.series(cfg.market);
    const auto rf = window.series(cfg.rf);
    const std::vector<double> no_turnover(window.rows(), 0.0);

    json reports = json::object();
    reports["market"] = report_to_json(
        performance_report(market.values(), no_turnover, ew.net, market.values(), rf.values()));
    reports["ew"] = report_to_json(performance_report(ew, ew, market, rf));
    json strategies = json::array({"market", "ew"});
    write_file(ctx, ctx.path("backtest/path_ew.csv"), path_csv(ctx, ew));
    write_file(ctx, ctx.path("backtest/trades_ew.csv"), trades_csv(ctx, ew));
    for (std::size_t k = 0; k < dynamic.size(); ++k) {
        const auto label = te_label(cfg.te_targets[k]);
        const auto name = "dynamic_" + label;
        json rep = report_to_json(performance_report(dynamic[k], ew, market, rf));
        rep["te_target"] = cfg.te_targets[k];
        std::map<std::string, int> reasons;
        for (const auto& t : dynamic[k].trades) ++reasons[t];
        rep["rebalances"] = reasons;
        reports[name] = rep;
        strategies.push_back(name);
        write_file(ctx, ctx.path("backtest/path_" + label + ".csv"), path_csv(ctx, dynamic[k]));
        write_file(ctx, ctx.path("backtest/trades_" + label + ".csv"), trades_csv(ctx, dynamic[k]));
    }

    // Cumulative excess-return indices for plotting.
    std::vector<std::string> cols{"date"};
    for (const auto& s : strategies) cols.push_back(s.get<std::string>());
    CsvBuilder cum(ctx, cols);
    std::vector<double> level(strategies.size(), 1.0);
    for (std::size_t t = 0; t < window.rows(); ++t) {
        const double rf_d = rf[t] / kTradingDays;
        std::vector<double> day{market[t], ew.net[t]};
        for (const auto& p : dynamic) day.push_back(p.net[t]);
        cum.cell(format_date(window.dates()[t]));
        for (std::size_t k = 0; k < day.size(); ++k) {
            level[k] *= 1.0 + day[k] - rf_d;
            cum.cell(level[k] - 1.0);
        }
        cum.end_row();
    }
    write_file(ctx, ctx.path("backtest/cumulative_excess.csv"), cum.str());

    write_json(ctx, ctx.path("backtest/report.json"),
               {{"start", format_date(window.dates().front())},
                {"end", format_date(window.dates().back())},
                {"days", window.rows()},
                {"strategies", strategies},
                {"reports", reports}});
}

// ---------------------------------------------------------------------------
// report

std::string opt_number(const json& v) { return v.is_null() ? std::string("undefined") : io::format_number(v.get<double>()); }

void cmd_report(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const json bt = read_json(ctx.path("backtest/report.json"), "backtest");
    const auto cum_path = ctx.path("backtest/cumulative_excess.csv");
    require(cum_path, "backtest");
    const AlignedPanel panel = load_ingested(ctx);
    const auto signals = load_signals(ctx);

    const Date start = parse_date(bt.at("start").get<std::string>());
    const Date end = parse_date(bt.at("end").get<std::string>());
    const auto& dates = panel.dates();
    const auto b = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), start) - dates.begin());
    const auto e = static_cast<std::size_t>(std::upper_bound(dates.begin(), dates.end(), end) - dates.begin());
    const auto window = panel.select_rows(b, e);
    const auto& market = window.column(cfg.market);
    const auto& rf = window.column(cfg.rf);
    const std::vector<double> no_turnover(window.rows(), 0.0);

    // Stand-alone statistics of each index over the test window.
    CsvBuilder idx(ctx, {"asset", "excess_return", "excess_risk", "sharpe", "max_drawdown", "alpha", "beta", "alpha_t_stat"});
    json idx_json = json::array();
    for (const auto& a : cfg.universe()) {
        const auto& r = window.column(a);
        const auto rep = performance_report(r, no_turnover, r, market, rf);
        idx.cell(a).cell(rep.excess_return).cell(rep.excess_risk).cell(rep.sharpe).cell(rep.max_drawdown).cell(rep.alpha)
            .cell(rep.beta).cell(rep.alpha_t_stat);
        idx.end_row();
        idx_json.push_back({{"asset", a},
                            {"excess_return", rep.excess_return},
                            {"excess_risk", rep.excess_risk},
                            {"sharpe", rep.sharpe},
                            {"max_drawdown", rep.max_drawdown},
                            {"alpha", rep.alpha},
                            {"beta", rep.beta},
                            {"alpha_t_stat", rep.alpha_t_stat}});
    }

    // Long-short evaluation of the regime signals.
    const auto tab = long_short_table(ctx, panel, signals);
    const auto [ls, ls_corr] = long_short_csvs(ctx, tab);

    // Dynamic strategies against EW, and absolute performance of every strategy.
    const auto& reports = bt.at("reports");
    CsvBuilder active(ctx, {"strategy", "te_target", "active_return", "tracking_error", "information_ratio", "max_drawdown", "turnover"});
    CsvBuilder strat(ctx, {"strategy", "excess_return", "excess_risk", "sharpe", "max_drawdown", "alpha", "beta", "alpha_t_stat", "turnover"});
    json active_json = json::array(), strat_json = json::array();
    for (const auto& s : bt.at("strategies")) {
        const auto name = s.get<std::string>();
        const auto& r = reports.at(name);
        if (r.contains("te_target")) {
            active.cell(name).cell(r.at("te_target").get<double>()).cell(r.at("active_return").get<double>())
                .cell(r.at("tracking_error").get<double>()).cell(opt_number(r.at("information_ratio")))
                .cell(r.at("max_drawdown").get<double>()).cell(r.at("turnover").get<double>());
            active.end_row();
            active_json.push_back({{"strategy", name},
                                {"te_target", r.at("te_target")},
                                {"active_return", r.at("active_return")},
                                {"tracking_error", r.at("tracking_error")},
                                {"information_ratio", r.at("information_ratio")},
                                {"max_drawdown", r.at("max_drawdown")},
                                {"turnover", r.at("turnover")}});
        }
        strat.cell(name);
        json row{{"strategy", name}};
        for (const char* key : {"excess_return", "excess_risk", "sharpe", "max_drawdown", "alpha", "beta", "alpha_t_stat", "turnover"}) {
            strat.cell(r.at(key).get<double>());
            row[key] = r.at(key);
        }
        strat.end_row();
        strat_json.push_back(row);
    }

    // Plot data: the cumulative excess series without its metadata line.
    std::istringstream cum(io::read_text_file(cum_path));
    std::ostringstream plot;
    plot << "# " << ctx.header() << '\n';
    for (std::string line; std::getline(cum, line);)
        if (!line.empty() && line[0] != '#') plot << line << '\n';

    write_file(ctx, ctx.path("report/index_summary.csv"), idx.str());
    write_file(ctx, ctx.path("report/long_short.csv"), ls);
    write_file(ctx, ctx.path("report/long_short_correlations.csv"), ls_corr);
    write_file(ctx, ctx.path("report/active_performance.csv"), active.str());
    write_file(ctx, ctx.path("report/strategy_performance.csv"), strat.str());
    write_file(ctx, ctx.path("report/plot_cumulative_excess.csv"), plot.str());
    write_json(ctx, ctx.path("report/report.json"),
               {{"start", bt.at("start")},
                {"end", bt.at("end")},
                {"index_summary", idx_json},
                {"long_short", long_short_json(tab)},
                {"active_performance", active_json},
                {"strategy_performance", strat_json}});
}

// ---------------------------------------------------------------------------
// Argument handling

struct Command {
    const char* name;
    const char* help;
    void (*fn)(const Context&);
};

const std::vector<Command> kCommands{
    {"simulate", "write synthetic returns, environment and truth CSVs", cmd_simulate},
    {"ingest", "load returns and environment into panel.csv", cmd_ingest},
    {"features", "compute the feature matrix per factor", cmd_features},
    {"fit", "fit a sparse jump model per factor on the training range", cmd_fit},
    {"infer", "run online inference after the fitted range", cmd_infer},
    {"tune", "rolling hyperparameter selection and out-of-sample signals", cmd_tune},
    {"eval-ls", "evaluate signals with the long-short strategy", cmd_eval_ls},
    {"allocate", "Black-Litterman allocation on one date", cmd_allocate},
    {"backtest", "EW benchmark and dynamic strategies per TE target", cmd_backtest},
    {"report", "aggregate backtest outputs into summary tables", cmd_report},
};

/// Turns leftover tokens into dotted overrides: `--a.b v` or `--a.b=v`.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const auto& tok = extras[i];
        if (tok.rfind("--", 0) != 0 || tok.size() <= 2) throw UsageError("unexpected argument '" + tok + "'");
        const auto body = tok.substr(2);
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
        } else {
            if (i + 1 >= extras.size()) throw UsageError("option '" + tok + "' needs a value");
            out.emplace_back(body, extras[++i]);
        }
    }
    return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Regime-based factor allocation pipeline", "factorjm"};
    app.require_subcommand(1, 1);
    app.allow_extras();
    std::string config_path;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    app.add_option("--config", config_path, "JSON config file (default: $" + std::string(kConfigEnvVar) + ")");
    app.add_option("--threads", threads, "worker threads");
    app.add_option("--seed", seed, "root random seed");
    app.add_option("--output-dir", output_dir, "artifact directory");

    std::vector<CLI::App*> subs;
    for (const auto& c : kCommands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->allow_extras();
        sub->fallthrough();
        subs.push_back(sub);
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        const auto extras = app.remaining();
        if (!extras.empty() && extras.front().rfind("-", 0) != 0)
            err << "error: unknown subcommand '" << extras.front() << "'\n";
        else
            err << "error: " << e.what() << '\n';
        return 2;
    }

    std::size_t which = 0;
    while (which < subs.size() && !subs[which]->parsed()) ++which;
    const auto& command = kCommands[which];

    try {
        if (config_path.empty())
            if (const char* env = std::getenv(kConfigEnvVar)) config_path = env;
        json user;
        if (!config_path.empty()) {
            if (!fs::exists(config_path)) throw UsageError("config file '" + config_path + "' not found");
            try {
                user = json::parse(io::read_text_file(config_path));
            } catch (const json::parse_error& e) {
                throw UsageError("config file '" + config_path + "' is not valid JSON: " + e.what());
            }
        }
        json merged = merge_config(user);
        for (const auto& [key, value] : parse_overrides(app.remaining(true))) apply_override(merged, key, value);
        if (threads) apply_override(merged, "threads", std::to_string(*threads));
        if (seed) apply_override(merged, "seed", std::to_string(*seed));
        if (output_dir) apply_override(merged, "output_dir", *output_dir);

        Context ctx;
        ctx.cfg = config_from_json(merged);
        ctx.hash = config_hash(merged);
        ctx.merged = std::move(merged);
        ctx.command = command.name;
        ctx.out = &out;
        command.fn(ctx);
        return 0;
    } catch (const UsageError& e) {
        err << "error: " << command.name << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << command.name << ": " << e.what() << '\n';
        return 1;
    }
}

}  // namespace factorjm::cli
