#pragma once

#include "factorjm/jump_model.hpp"

#include "json.hpp"

namespace factorjm {

/// Fit layout:
/// {
///   "config": {n_states, lambda, kappa_sq, n_init, max_iter, max_outer, tol, seed},
///   "feature_names": [..D],
///   "weights": [..D],
///   "centroids": [[..D] x K],      weighted feature space
///   "rank": [..K],                 0 = bull
///   "objective": number,
///   "terminal_values": [..K],
///   "train_stats": {"mean": [..D], "std": [..D]},
///   "train_start": "YYYY-MM-DD", "train_end": "YYYY-MM-DD",
///   "states": [..T], "outer_iterations": n
/// }
void to_json(nlohmann::json& j, const JumpModelConfig& cfg);
void from_json(const nlohmann::json& j, JumpModelConfig& cfg);
void to_json(nlohmann::json& j, const JumpModelFit& fit);
void from_json(const nlohmann::json& j, JumpModelFit& fit);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

}  // namespace factorjm
