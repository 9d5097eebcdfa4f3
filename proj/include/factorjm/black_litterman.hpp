#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace factorjm {

/// Benchmark-implied equilibrium. `sigma` is annualized.
struct Equilibrium {
    double delta = 2.5;
    Eigen::MatrixXd sigma;
    Eigen::VectorXd w_bmk;
    Eigen::VectorXd pi;

    /// Builds the equilibrium with pi = delta * sigma * w_bmk.
    static Equilibrium from_benchmark(double delta, Eigen::MatrixXd sigma, Eigen::VectorXd w_bmk);
};

/// Relative views: each row of P is +1 on a factor and -1 on the market.
struct ViewSet {
    Eigen::MatrixXd P;
    Eigen::VectorXd v;               // annualized view returns, capped at +-5%
    Eigen::VectorXd omega_over_tau;  // diagonal; empty until confidence is set
};

struct AllocationResult {
    Eigen::VectorXd mu_bl;
    Eigen::VectorXd weights;
    double confidence = 0.0;
    double ex_ante_te = 0.0;
    bool te_capped = false;        // target unreachable even at maximum confidence
    bool bracket_failure = false;  // bisection ended outside the tolerance

    std::vector<std::string> flags() const;
};

/// Exponentially weighted covariance of daily returns (rows = days), weights
/// decaying by 0.5^(1/halflife) per day and normalized by their sum;
/// annualized by 252, symmetrized, and eigenvalue-floored at `eig_floor`.
Eigen::MatrixXd ewm_covariance(const Eigen::MatrixXd& daily_returns, double halflife, double eig_floor = 1e-10);

/// Raises eigenvalues below `floor` to `floor`; returns the input when already above.
Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& sym, double floor);

Eigen::VectorXd implied_prior(double delta, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w_bmk);

/// One view per factor in `universe` order (the market is skipped).
ViewSet build_views(const std::map<std::string, double>& mu_hat, const std::vector<std::string>& universe,
                    const std::string& market);

/// c * diag(P sigma P'). Throws on a zero diagonal.
Eigen::VectorXd view_uncertainty(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& P, double confidence);

/// pi + sigma P' (P sigma P' + Omega/tau)^-1 (v - P pi).
Eigen::VectorXd posterior_returns(const Eigen::VectorXd& pi, const Eigen::MatrixXd& sigma, const ViewSet& views);

struct ActiveWeights {
    Eigen::VectorXd lambda;              // matrix route
    Eigen::VectorXd lambda_elementwise;  // leave-one-view-out route
    Eigen::VectorXd eta;
    Eigen::VectorXd active;              // P' lambda
};

/// Unconstrained BL tilt w_bmk + P' lambda. Both lambda routes are computed
/// and must agree to 1e-8 (relative to max(1, |lambda|)); throws otherwise.
ActiveWeights unconstrained_active_weights(const Equilibrium& eq, const ViewSet& views);

/// argmax mu'w - delta/2 w' sigma w subject to sum(w) = 1, w >= 0, by a
/// primal active-set method over the bound constraints.
Eigen::VectorXd solve_mvo(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double delta);

/// Largest violation of the KKT conditions of the long-only budget QP.
double mvo_kkt_residual(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double delta, const Eigen::VectorXd& w);

double ex_ante_tracking_error(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w, const Eigen::VectorXd& w_bmk);

/// Posterior and long-only weights at a fixed confidence multiple.
AllocationResult allocate_with_confidence(const Equilibrium& eq, const ViewSet& views, double confidence);

/// Bisects log-confidence over [1e-4, 1e4] until the ex-ante TE is within 5%
/// of `te_target` (60 iterations at most).
AllocationResult target_tracking_error(const Equilibrium& eq, const ViewSet& views, double te_target);

}  // namespace factorjm
