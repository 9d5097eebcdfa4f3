#include "factorjm/serialization.hpp"

namespace factorjm {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
    return v;
}

void to_json(json& j, const JumpModelConfig& c) {
    j = json{{"n_states", c.n_states}, {"lambda", c.lambda},     {"kappa_sq", c.kappa_sq},
             {"n_init", c.n_init},     {"max_iter", c.max_iter}, {"max_outer", c.max_outer},
             {"tol", c.tol},           {"seed", c.seed}};
}

void from_json(const json& j, JumpModelConfig& c) {
    c.n_states = j.at("n_states").get<int>();
    c.lambda = j.at("lambda").get<double>();
    c.kappa_sq = j.at("kappa_sq").get<double>();
    c.n_init = j.at("n_init").get<int>();
    c.max_iter = j.at("max_iter").get<int>();
    c.max_outer = j.at("max_outer").get<int>();
    c.tol = j.at("tol").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(json& j, const JumpModelFit& fit) {
    json centroids = json::array();
    for (Eigen::Index k = 0; k < fit.centroids.rows(); ++k)
        centroids.push_back(vector_to_json(fit.centroids.row(k).transpose()));
    j = json{{"config", fit.config},
             {"feature_names", fit.feature_names},
             {"weights", vector_to_json(fit.weights)},
             {"centroids", centroids},
             {"rank", fit.rank},
             {"objective", fit.objective},
             {"terminal_values", vector_to_json(fit.terminal_values)},
             {"states", fit.states},
             {"outer_iterations", fit.outer_iterations}};
    if (fit.train_stats)
        j["train_stats"] = json{{"mean", vector_to_json(fit.train_stats->mean)}, {"std", vector_to_json(fit.train_stats->std)}};
    if (!fit.train_dates.empty()) {
        j["train_start"] = format_date(fit.train_dates.front());
        j["train_end"] = format_date(fit.train_dates.back());
    }
}

void from_json(const json& j, JumpModelFit& fit) {
    fit.config = j.at("config").get<JumpModelConfig>();
    fit.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    fit.weights = vector_from_json(j.at("weights"));
    const auto& c = j.at("centroids");
    fit.centroids.resize(static_cast<Eigen::Index>(c.size()), fit.weights.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
        const auto row = vector_from_json(c.at(k));
        if (row.size() != fit.weights.size()) throw std::invalid_argument("fit json: centroid width mismatch");
        fit.centroids.row(static_cast<Eigen::Index>(k)) = row.transpose();
    }
    fit.rank = j.at("rank").get<std::vector<int>>();
    fit.objective = j.at("objective").get<double>();
    fit.terminal_values = vector_from_json(j.at("terminal_values"));
    fit.states = j.value("states", std::vector<int>{});
    fit.outer_iterations = j.value("outer_iterations", 0);
    fit.train_stats.reset();
    if (j.contains("train_stats")) {
        StandardizationStats s;
        s.mean = vector_from_json(j["train_stats"].at("mean"));
        s.std = vector_from_json(j["train_stats"].at("std"));
        s.floored.assign(static_cast<std::size_t>(s.mean.size()), false);
        fit.train_stats = std::move(s);
    }
    fit.train_dates.clear();
    if (j.contains("train_start")) {
        fit.train_dates.push_back(parse_date(j["train_start"].get<std::string>()));
        if (j.contains("train_end")) fit.train_dates.push_back(parse_date(j["train_end"].get<std::string>()));
    }
}

}  // namespace factorjm
