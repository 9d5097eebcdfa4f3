#pragma once

#include "factorjm/backtest.hpp"
#include "factorjm/features.hpp"
#include "factorjm/jump_model.hpp"
#include "factorjm/regime_strategy.hpp"
#include "factorjm/synthetic.hpp"

#include "json.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace factorjm::cli {

/// Raised for bad configuration, flags or missing artifacts. The CLI prints
/// the message and exits with status 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // data
    std::string returns_path;  // empty: <output_dir>/data/returns.csv
    std::string env_path;      // empty: <output_dir>/data/env.csv
    std::string input_kind = "returns";  // or "levels"

    // universe
    std::string market = "market";
    std::vector<std::string> factors{"value", "size", "momentum", "quality", "low_vol", "growth"};
    std::string rf = "rf";
    std::map<std::string, std::string> columns;  // panel name -> CSV header override
    EnvColumns env_columns;

    FeatureWindows windows;
    JumpModelConfig jump;
    TuningGrid grid;
    TuningSchedule schedule;

    double delta = 2.5;
    double cov_halflife = 126.0;
    std::vector<double> te_targets{0.01, 0.02, 0.03, 0.04};
    double tc = kDefaultCost;

    // fit / infer
    std::string fit_factor;  // empty: every factor
    std::string fit_start;   // empty: first feature date
    std::string fit_end;     // empty: schedule.test_start

    // allocate
    std::string allocate_date;  // empty: last signal date
    double allocate_te = 0.02;

    HmmSpec simulation;

    std::string output_dir = "out";
    std::uint64_t seed = 0;
    int threads = 1;

    std::vector<std::string> universe() const;
    std::string resolved_returns_path() const;
    std::string resolved_env_path() const;
};

/// Default configuration as JSON; the key schema for config files.
nlohmann::json default_config_json();

/// Merges `user` onto the defaults. Unknown keys and type mismatches throw
/// UsageError naming the dotted key.
nlohmann::json merge_config(const nlohmann::json& user);

/// Applies a dotted override such as "grid.lambdas" = "10,50".
void apply_override(nlohmann::json& cfg, const std::string& dotted_key, const std::string& value);

RunConfig config_from_json(const nlohmann::json& j);

/// FNV-1a of the canonical config, ignoring threads and output_dir.
std::string config_hash(const nlohmann::json& merged);

}  // namespace factorjm::cli
