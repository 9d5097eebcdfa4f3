#pragma once

#include "factorjm/features.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace factorjm {

struct JumpModelConfig {
    int n_states = 2;
    double lambda = 50.0;    // jump penalty
    double kappa_sq = 9.5;   // squared l1 bound on feature weights, in [1, D]
    int n_init = 10;         // k-means++ restarts
    int max_iter = 100;      // coordinate-descent iterations per restart
    int max_outer = 10;      // sparse weight/fit alternations
    double tol = 1e-4;       // l-inf tolerance on weight changes
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument if any field is out of range for `dims` features.
    /// kappa_sq is only checked when `sparse` is set.
    void validate(Eigen::Index dims, bool sparse = true) const;
};

/// Result of fitting a (sparse) jump model. Centroids live in the weighted
/// feature space: standardized features multiplied by sqrt(weights).
struct JumpModelFit {
    Eigen::MatrixXd centroids;     // K x D
    std::vector<int> states;       // in-sample state sequence
    Eigen::VectorXd weights;       // D, unit l2 norm
    double objective = 0.0;        // penalized loss on weighted features
    std::vector<int> rank;         // rank[k] = 0 for the most bullish state
    std::optional<StandardizationStats> train_stats;
    std::vector<std::string> feature_names;
    std::vector<Date> train_dates;
    JumpModelConfig config;
    Eigen::VectorXd terminal_values;  // forward DP values after the last training row
    int outer_iterations = 0;

    int n_states() const { return static_cast<int>(centroids.rows()); }
};

/// Running forward values of the penalized state recursion.
struct OnlineState {
    Eigen::VectorXd value;
    int last_state = -1;
    std::size_t steps = 0;
};

/// 0.5 * ||x - theta_k||^2 for each centroid row.
Eigen::VectorXd state_losses(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::MatrixXd& centroids);

/// One step of the forward recursion: v_k <- loss_k + min(v_k, min_{j != k} v_j + lambda).
void advance_values(Eigen::VectorXd& value, const Eigen::VectorXd& loss, double lambda);

/// Index of the smallest entry; ties go to the lower index.
int argmin_lowest(const Eigen::VectorXd& v);

/// Exact minimizer over all K^T sequences of the penalized loss with fixed
/// centroids, by dynamic programming. Ties resolve toward lower state indices.
std::vector<int> optimal_states(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids, double lambda);

/// Forward values after consuming every row of X.
Eigen::VectorXd terminal_values(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids, double lambda);

double jump_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids, const std::vector<int>& states,
                      double lambda);

int count_transitions(const std::vector<int>& states);

struct CentroidUpdate {
    Eigen::MatrixXd centroids;
    std::vector<bool> empty;  // state had no rows and kept its previous centroid
};

/// Per-state row means; empty states keep `previous`.
CentroidUpdate update_centroids(const Eigen::MatrixXd& X, const std::vector<int>& states,
                                const Eigen::MatrixXd& previous);

/// Coordinate descent on already weighted rows, best of `n_init` k-means++ starts.
struct DescentResult {
    Eigen::MatrixXd centroids;
    std::vector<int> states;
    double objective = 0.0;
    int best_restart = 0;
    std::vector<std::vector<double>> traces;  // objective after each state step, per restart
};

DescentResult coordinate_descent(const Eigen::MatrixXd& Xw, int n_states, double lambda, int n_init,
                                 int max_iter, std::uint64_t seed);

/// Non-sparse jump model: uniform weights 1/sqrt(D).
JumpModelFit fit_jump_model(const FeatureMatrix& X, const JumpModelConfig& config);

/// Per-dimension between-state sum of squares TSS_d - WCSS_d, clipped at 0.
Eigen::VectorXd between_state_scatter(const Eigen::MatrixXd& X, const std::vector<int>& states, int n_states);

/// argmax w'a subject to ||w||_2 <= 1, ||w||_1 <= kappa, w >= 0.
Eigen::VectorXd sparse_weights(const Eigen::VectorXd& scores, double kappa);

Eigen::VectorXd update_feature_weights(const Eigen::MatrixXd& X, const std::vector<int>& states, int n_states,
                                       double kappa);

/// Alternates weighted fits and weight updates until weights settle.
JumpModelFit fit_sparse_jump_model(const FeatureMatrix& X, const JumpModelConfig& config);

/// Ranks states by summed in-state active return (rank 0 = bull). A state
/// without occupancy is ordered by `fallback_scores[k]` sign instead.
std::vector<int> label_states(const std::vector<int>& states, int n_states, std::span<const double> active,
                              std::span<const double> fallback_scores = {});

/// Standardizes a raw feature row with the fit's training stats and scales it by sqrt(weights).
Eigen::RowVectorXd prepare_online_input(const JumpModelFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& raw);

/// Online state continuing from the end of the training sample.
OnlineState initial_online_state(const JumpModelFit& fit);

/// Consumes one weighted observation; returns the filtered state.
std::pair<int, OnlineState> online_infer(const JumpModelFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x_weighted,
                                         const OnlineState& state);

}  // namespace factorjm
