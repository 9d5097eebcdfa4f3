#include "config.hpp"

#include "factorjm/io.hpp"

#include <set>
#include <sstream>

namespace factorjm::cli {

using nlohmann::json;

namespace {

// Objects whose keys are user-defined rather than part of the schema.
const std::set<std::string> kFreeFormKeys{"universe.columns"};

std::string join_key(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

bool compatible(const json& def, const json& val) {
    if (def.is_number()) return val.is_number() && (!def.is_number_integer() || val.is_number_integer() ||
                                                    (val.is_number_float() && val.get<double>() == static_cast<double>(static_cast<long long>(val.get<double>()))));
    if (def.is_array()) return val.is_array();
    return def.type() == val.type();
}

/// Stores numbers with the numeric kind of the default so equal configs hash equally.
json coerce(const json& like, const json& val) {
    if (val.is_array()) {
        json out = json::array();
        for (const auto& e : val) out.push_back(coerce(like, e));
        return out;
    }
    if (like.is_number_float() && val.is_number()) return json(val.get<double>());
    if (like.is_number_integer() && val.is_number_float()) return json(static_cast<long long>(val.get<double>()));
    return val;
}

void merge_into(json& base, const json& user, const std::string& prefix) {
    if (!user.is_object()) throw UsageError("config: '" + (prefix.empty() ? std::string("<root>") : prefix) + "' must be an object");
    for (const auto& [key, val] : user.items()) {
        const std::string path = join_key(prefix, key);
        if (!base.contains(key)) throw UsageError("config: unknown key '" + path + "'");
        json& slot = base[key];
        if (kFreeFormKeys.count(path)) {
            if (!val.is_object()) throw UsageError("config: '" + path + "' must be an object");
            for (const auto& [k, v] : val.items())
                if (!v.is_string()) throw UsageError("config: '" + path + "." + k + "' must be a string");
            slot = val;
        } else if (slot.is_object()) {
            merge_into(slot, val, path);
        } else {
            if (!compatible(slot, val)) throw UsageError("config: '" + path + "' has the wrong type (expected " + std::string(slot.type_name()) + ")");
            if (slot.is_array() && !slot.empty()) {
                for (const auto& e : val)
                    if (!compatible(slot.front(), e)) throw UsageError("config: '" + path + "' has an element of the wrong type");
            }
            slot = coerce(slot.is_array() && !slot.empty() ? slot.front() : slot, val);
        }
    }
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) out.push_back(std::string(io::trim(cur)));
    return out;
}

json parse_scalar(const std::string& text, const json& like) {
    if (like.is_string()) return text;
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return text;
    }
}

Date parse_config_date(const std::string& key, const std::string& text) {
    try {
        return parse_date(text);
    } catch (const std::exception&) {
        throw UsageError("config: '" + key + "' is not a YYYY-MM-DD date: '" + text + "'");
    }
}

}  // namespace

std::vector<std::string> RunConfig::universe() const {
    std::vector<std::string> u{market};
    u.insert(u.end(), factors.begin(), factors.end());
    return u;
}

std::string RunConfig::resolved_returns_path() const {
    return returns_path.empty() ? output_dir + "/data/returns.csv" : returns_path;
}

std::string RunConfig::resolved_env_path() const {
    return env_path.empty() ? output_dir + "/data/env.csv" : env_path;
}

json default_config_json() {
    const RunConfig d;
    json macd = json::array();
    for (auto [s, l] : d.windows.macd_windows) macd.push_back({s, l});
    return json{
        {"data", {{"returns", ""}, {"env", ""}, {"input_kind", d.input_kind}}},
        {"universe", {{"market", d.market}, {"factors", d.factors}, {"rf", d.rf}, {"columns", json::object()}}},
        {"env_columns", {{"vix", d.env_columns.vix}, {"y2", d.env_columns.y2}, {"y10", d.env_columns.y10}}},
        {"features",
         {{"return_windows", d.windows.return_windows},
          {"macd_windows", macd},
          {"downside_window", d.windows.downside_window},
          {"beta_window", d.windows.beta_window},
          {"market_window", d.windows.market_window},
          {"env_window", d.windows.env_window},
          {"warmup", d.windows.warmup}}},
        {"jump_model",
         {{"n_states", d.jump.n_states},
          {"lambda", d.jump.lambda},
          {"kappa_sq", d.jump.kappa_sq},
          {"n_init", d.jump.n_init},
          {"max_iter", d.jump.max_iter},
          {"max_outer", d.jump.max_outer},
          {"tol", d.jump.tol}}},
        {"grid", {{"lambdas", d.grid.lambdas}, {"kappa_sqs", d.grid.kappa_sqs}}},
        {"schedule",
         {{"train_min_months", d.schedule.train_min_months},
          {"train_max_months", d.schedule.train_max_months},
          {"refit_months", d.schedule.refit_months},
          {"validation_months", d.schedule.validation_months},
          {"reselect_months", d.schedule.reselect_months},
          {"test_start", format_date(d.schedule.test_start)}}},
        {"allocation", {{"delta", d.delta}, {"cov_halflife", d.cov_halflife}, {"te_targets", d.te_targets}, {"tc", d.tc}}},
        {"fit", {{"factor", ""}, {"start", ""}, {"end", ""}}},
        {"allocate", {{"date", ""}, {"te_target", d.allocate_te}}},
        {"simulate",
         {{"T", d.simulation.T},
          {"p_stay", d.simulation.p_stay},
          {"mu", d.simulation.mu},
          {"vol", d.simulation.vol},
          {"start", format_date(d.simulation.start)}}},
        {"output_dir", d.output_dir},
        {"seed", d.seed},
        {"threads", d.threads},
    };
}

json merge_config(const json& user) {
    json base = default_config_json();
    if (!user.is_null()) merge_into(base, user, "");
    return base;
}

void apply_override(json& cfg, const std::string& dotted_key, const std::string& value) {
    json* node = &cfg;
    std::string prefix;
    std::istringstream parts(dotted_key);
    std::string part;
    std::vector<std::string> keys;
    while (std::getline(parts, part, '.')) keys.push_back(part);
    if (keys.empty()) throw UsageError("empty override key");
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const std::string path = join_key(prefix, keys[i]);
        const bool free_form = kFreeFormKeys.count(prefix) > 0;
        if (!node->is_object() || (!node->contains(keys[i]) && !free_form))
            throw UsageError("unknown option '--" + dotted_key + "' (no config key '" + path + "')");
        if (free_form && i + 1 == keys.size()) {
            (*node)[keys[i]] = value;
            return;
        }
        node = &(*node)[keys[i]];
        prefix = path;
    }
    if (node->is_object()) throw UsageError("option '--" + dotted_key + "' names a section, not a value");

    json parsed;
    if (node->is_array()) {
        try {
            parsed = json::parse(value);
        } catch (const json::parse_error&) {
        }
        if (!parsed.is_array()) {
            parsed = json::array();
            const json like = node->empty() ? json(0.0) : node->front();
            for (const auto& item : split_commas(value)) parsed.push_back(parse_scalar(item, like));
        }
    } else {
        parsed = parse_scalar(value, *node);
    }
    json patch = json::object();
    json* p = &patch;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) p = &((*p)[keys[i]] = json::object());
    (*p)[keys.back()] = parsed;
    merge_into(cfg, patch, "");
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    c.returns_path = j.at("data").at("returns").get<std::string>();
    c.env_path = j.at("data").at("env").get<std::string>();
    c.input_kind = j.at("data").at("input_kind").get<std::string>();
    if (c.input_kind != "returns" && c.input_kind != "levels")
        throw UsageError("config: 'data.input_kind' must be 'returns' or 'levels'");

    const auto& u = j.at("universe");
    c.market = u.at("market").get<std::string>();
    c.factors = u.at("factors").get<std::vector<std::string>>();
    c.rf = u.at("rf").get<std::string>();
    c.columns = u.at("columns").get<std::map<std::string, std::string>>();
    if (c.factors.empty()) throw UsageError("config: 'universe.factors' is empty");

    const auto& e = j.at("env_columns");
    c.env_columns = {e.at("vix").get<std::string>(), e.at("y2").get<std::string>(), e.at("y10").get<std::string>()};

    const auto& f = j.at("features");
    c.windows.return_windows = f.at("return_windows").get<std::vector<int>>();
    c.windows.macd_windows.clear();
    for (const auto& m : f.at("macd_windows")) {
        if (!m.is_array() || m.size() != 2) throw UsageError("config: 'features.macd_windows' entries must be [short, long]");
        c.windows.macd_windows.emplace_back(m[0].get<int>(), m[1].get<int>());
    }
    c.windows.downside_window = f.at("downside_window").get<int>();
    c.windows.beta_window = f.at("beta_window").get<int>();
    c.windows.market_window = f.at("market_window").get<int>();
    c.windows.env_window = f.at("env_window").get<int>();
    c.windows.warmup = f.at("warmup").get<int>();

    const auto& m = j.at("jump_model");
    c.jump.n_states = m.at("n_states").get<int>();
    c.jump.lambda = m.at("lambda").get<double>();
    c.jump.kappa_sq = m.at("kappa_sq").get<double>();
    c.jump.n_init = m.at("n_init").get<int>();
    c.jump.max_iter = m.at("max_iter").get<int>();
    c.jump.max_outer = m.at("max_outer").get<int>();
    c.jump.tol = m.at("tol").get<double>();

    c.grid.lambdas = j.at("grid").at("lambdas").get<std::vector<double>>();
    c.grid.kappa_sqs = j.at("grid").at("kappa_sqs").get<std::vector<double>>();

    const auto& s = j.at("schedule");
    c.schedule.train_min_months = s.at("train_min_months").get<int>();
    c.schedule.train_max_months = s.at("train_max_months").get<int>();
    c.schedule.refit_months = s.at("refit_months").get<int>();
    c.schedule.validation_months = s.at("validation_months").get<int>();
    c.schedule.reselect_months = s.at("reselect_months").get<int>();
    c.schedule.test_start = parse_config_date("schedule.test_start", s.at("test_start").get<std::string>());

    const auto& a = j.at("allocation");
    c.delta = a.at("delta").get<double>();
    c.cov_halflife = a.at("cov_halflife").get<double>();
    c.te_targets = a.at("te_targets").get<std::vector<double>>();
    c.tc = a.at("tc").get<double>();
    if (c.te_targets.empty()) throw UsageError("config: 'allocation.te_targets' is empty");
    for (double te : c.te_targets)
        if (!(te > 0.0 && te < 0.2)) throw UsageError("config: 'allocation.te_targets' values must lie in (0, 0.2)");
    if (!(c.tc >= 0.0)) throw UsageError("config: 'allocation.tc' must be >= 0");

    c.fit_factor = j.at("fit").at("factor").get<std::string>();
    c.fit_start = j.at("fit").at("start").get<std::string>();
    c.fit_end = j.at("fit").at("end").get<std::string>();
    c.allocate_date = j.at("allocate").at("date").get<std::string>();
    c.allocate_te = j.at("allocate").at("te_target").get<double>();
    if (!(c.allocate_te > 0.0 && c.allocate_te < 0.2)) throw UsageError("config: 'allocate.te_target' must lie in (0, 0.2)");

    const auto& sim = j.at("simulate");
    c.simulation.T = sim.at("T").get<std::size_t>();
    c.simulation.p_stay = sim.at("p_stay").get<std::array<double, 2>>();
    c.simulation.mu = sim.at("mu").get<std::array<double, 2>>();
    c.simulation.vol = sim.at("vol").get<std::array<double, 2>>();
    c.simulation.start = parse_config_date("simulate.start", sim.at("start").get<std::string>());

    c.output_dir = j.at("output_dir").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.threads = j.at("threads").get<int>();
    if (c.threads < 1) throw UsageError("config: 'threads' must be >= 1");
    c.simulation.seed = c.seed;
    c.jump.seed = c.seed;
    try {
        c.schedule.validate();
        c.simulation.validate();
    } catch (const std::invalid_argument& ex) {
        throw UsageError(std::string("config: ") + ex.what());
    }
    return c;
}

std::string config_hash(const json& merged) {
    json canon = merged;
    canon.erase("threads");
    canon.erase("output_dir");
    return io::hex64(io::fnv1a64(canon.dump()));
}

}  // namespace factorjm::cli
