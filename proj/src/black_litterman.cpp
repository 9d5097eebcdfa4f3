#include "factorjm/black_litterman.hpp"

#include "factorjm/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace factorjm {

namespace {

constexpr double kMinConfidence = 1e-4;
constexpr double kMaxConfidence = 1e4;
constexpr double kTeRelTolerance = 0.05;
constexpr int kTeMaxIterations = 60;

void check_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* what) {
    if (m.rows() != n || m.cols() != n) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

Eigen::LDLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any())
        throw std::runtime_error(std::string(what) + ": system is not positive definite");
    return ldlt;
}

Eigen::MatrixXd view_system(const Eigen::MatrixXd& sigma, const ViewSet& views) {
    if (views.omega_over_tau.size() != views.P.rows())
        throw std::invalid_argument("view uncertainties are not set");
    if ((views.omega_over_tau.array() <= 0.0).any()) throw std::invalid_argument("view uncertainties must be > 0");
    Eigen::MatrixXd m = views.P * sigma * views.P.transpose();
    m.diagonal() += views.omega_over_tau;
    return m;
}

}  // namespace

Equilibrium Equilibrium::from_benchmark(double delta, Eigen::MatrixXd sigma, Eigen::VectorXd w_bmk) {
    Equilibrium eq;
    eq.delta = delta;
    eq.pi = implied_prior(delta, sigma, w_bmk);
    eq.sigma = std::move(sigma);
    eq.w_bmk = std::move(w_bmk);
    return eq;
}

std::vector<std::string> AllocationResult::flags() const {
    std::vector<std::string> f;
    if (te_capped) f.emplace_back("te_capped");
    if (bracket_failure) f.emplace_back("bracket_failure");
    return f;
}

Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& sym, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw std::runtime_error("floor_eigenvalues: eigen decomposition failed");
    if (es.eigenvalues().minCoeff() >= floor) return sym;
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd ewm_covariance(const Eigen::MatrixXd& r, double halflife, double eig_floor) {
    if (!(halflife > 0.0)) throw std::invalid_argument("ewm_covariance: halflife must be > 0");
    const Eigen::Index T = r.rows();
    if (T < 2) throw std::invalid_argument("ewm_covariance: need at least two rows");
    const double decay = std::pow(0.5, 1.0 / halflife);
    Eigen::VectorXd w(T);
    double wt = 1.0;
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        w(t) = wt;
        wt *= decay;
    }
    w /= w.sum();
    const Eigen::RowVectorXd mean = w.transpose() * r;
    const Eigen::MatrixXd centered = r.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * w.asDiagonal() * centered;
    cov = (0.5 * kTradingDays) * (cov + cov.transpose()).eval();
    return floor_eigenvalues(cov, eig_floor);
}

Eigen::VectorXd implied_prior(double delta, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w_bmk) {
    check_square(sigma, w_bmk.size(), "implied_prior");
    return delta * (sigma * w_bmk);
}

ViewSet build_views(const std::map<std::string, double>& mu_hat, const std::vector<std::string>& universe,
                    const std::string& market) {
    const auto mkt = std::find(universe.begin(), universe.end(), market);
    if (mkt == universe.end()) throw std::invalid_argument("build_views: market '" + market + "' not in universe");
    const auto mkt_idx = mkt - universe.begin();
    std::vector<Eigen::Index> factors;
    for (std::size_t i = 0; i < universe.size(); ++i)
        if (universe[i] != market) factors.push_back(static_cast<Eigen::Index>(i));
    ViewSet vs;
    vs.P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(factors.size()), static_cast<Eigen::Index>(universe.size()));
    vs.v.resize(static_cast<Eigen::Index>(factors.size()));
    for (std::size_t k = 0; k < factors.size(); ++k) {
        const auto& name = universe[static_cast<std::size_t>(factors[k])];
        const auto it = mu_hat.find(name);
        if (it == mu_hat.end()) throw std::invalid_argument("build_views: missing signal for factor '" + name + "'");
        const auto row = static_cast<Eigen::Index>(k);
        vs.P(row, factors[k]) = 1.0;
        vs.P(row, mkt_idx) = -1.0;
        vs.v(row) = it->second;
    }
    return vs;
}

Eigen::VectorXd view_uncertainty(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& P, double confidence) {
    if (!(confidence > 0.0)) throw std::invalid_argument("view_uncertainty: confidence must be > 0");
    check_square(sigma, P.cols(), "view_uncertainty");
    Eigen::VectorXd d(P.rows());
    for (Eigen::Index k = 0; k < P.rows(); ++k) {
        d(k) = P.row(k) * sigma * P.row(k).transpose();
        if (!(d(k) > 0.0)) throw std::invalid_argument("view_uncertainty: degenerate view " + std::to_string(k));
    }
    return confidence * d;
}

Eigen::VectorXd posterior_returns(const Eigen::VectorXd& pi, const Eigen::MatrixXd& sigma, const ViewSet& views) {
    check_square(sigma, pi.size(), "posterior_returns");
    if (views.P.cols() != pi.size() || views.v.size() != views.P.rows())
        throw std::invalid_argument("posterior_returns: view shape mismatch");
    const auto ldlt = spd_factor(view_system(sigma, views), "posterior_returns");
    const Eigen::VectorXd innovation = views.v - views.P * pi;
    return pi + sigma * views.P.transpose() * ldlt.solve(innovation);
}

ActiveWeights unconstrained_active_weights(const Equilibrium& eq, const ViewSet& views) {
    const Eigen::MatrixXd M = view_system(eq.sigma, views);
    const Eigen::Index K = views.P.rows();
    const Eigen::VectorXd innovation = views.v - views.P * eq.pi;

    ActiveWeights out;
    out.lambda = spd_factor(M, "unconstrained_active_weights").solve(innovation) / eq.delta;
    out.lambda_elementwise.resize(K);
    out.eta.resize(K);
    for (Eigen::Index j = 0; j < K; ++j) {
        std::vector<Eigen::Index> others;
        for (Eigen::Index i = 0; i < K; ++i)
            if (i != j) others.push_back(i);
        const Eigen::RowVectorXd pj = views.P.row(j);
        double eta = M(j, j);
        Eigen::VectorXd mu_minus = eq.pi;
        if (!others.empty()) {
            const Eigen::MatrixXd P_o = views.P(others, Eigen::all);
            const Eigen::MatrixXd M_oo = M(others, others);
            const Eigen::VectorXd cross = P_o * eq.sigma * pj.transpose();
            const auto ldlt = spd_factor(M_oo, "leave-one-out view system");
            eta -= cross.dot(ldlt.solve(cross));
            mu_minus += eq.sigma * P_o.transpose() * ldlt.solve(views.v(others) - P_o * eq.pi);
        }
        out.eta(j) = eta;
        out.lambda_elementwise(j) = (views.v(j) - pj.dot(mu_minus)) / (eq.delta * eta);
    }
    const double scale = std::max(1.0, out.lambda.cwiseAbs().maxCoeff());
    if ((out.lambda - out.lambda_elementwise).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw std::runtime_error("unconstrained_active_weights: matrix and element formulas disagree");
    out.active = views.P.transpose() * out.lambda;
    return out;
}

double mvo_kkt_residual(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double delta, const Eigen::VectorXd& w) {
    const Eigen::VectorXd g = delta * sigma * w - mu;  // gradient of the minimized objective
    const Eigen::Index n = w.size();
    // Budget multiplier from the strictly positive coordinates.
    double gamma = 0.0;
    int free = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (w(i) > 0.0) {
            gamma += -g(i);
            ++free;
        }
    if (free > 0) gamma /= free;
    double res = std::abs(w.sum() - 1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        res = std::max(res, std::max(0.0, -w(i)));
        const double reduced = g(i) + gamma;
        if (w(i) > 0.0) {
            res = std::max(res, std::abs(reduced));
        } else {
            res = std::max(res, std::max(0.0, -reduced));
        }
    }
    return res;
}

Eigen::VectorXd solve_mvo(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double delta) {
    const Eigen::Index n = mu.size();
    check_square(sigma, n, "solve_mvo");
    if (n == 0) throw std::invalid_argument("solve_mvo: empty universe");
    if (!(delta > 0.0)) throw std::invalid_argument("solve_mvo: delta must be > 0");
    const Eigen::MatrixXd H = delta * sigma;

    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    std::vector<bool> at_bound(static_cast<std::size_t>(n), false);
    const int max_iter = 100 * static_cast<int>(n) + 100;
    for (int it = 0; it < max_iter; ++it) {
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!at_bound[static_cast<std::size_t>(i)]) free.push_back(i);

        // Equality-constrained optimum on the free set with the rest pinned at 0.
        const Eigen::MatrixXd H_ff = H(free, free);
        const auto ldlt = spd_factor(H_ff, "solve_mvo");
        const Eigen::VectorXd a = ldlt.solve(mu(free));
        const Eigen::VectorXd b = ldlt.solve(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(free.size())));
        const double gamma = (a.sum() - 1.0) / b.sum();
        const Eigen::VectorXd target_f = a - gamma * b;  // H_ff^-1 (mu_f - gamma 1)

        Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k < free.size(); ++k) step(free[k]) = target_f(static_cast<Eigen::Index>(k)) - w(free[k]);

        if (step.cwiseAbs().maxCoeff() <= 1e-14) {
            const Eigen::VectorXd g = H * w - mu;
            // At the subproblem optimum the free gradient equals -gamma.
            Eigen::Index worst = -1;
            double worst_val = -1e-12;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!at_bound[static_cast<std::size_t>(i)]) continue;
                const double mult = g(i) + gamma;
                if (mult < worst_val) {
                    worst_val = mult;
                    worst = i;
                }
            }
            if (worst < 0) {
                for (Eigen::Index i = 0; i < n; ++i)
                    if (at_bound[static_cast<std::size_t>(i)]) w(i) = 0.0;
                return w;
            }
            at_bound[static_cast<std::size_t>(worst)] = false;
            continue;
        }

        double alpha = 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index i : free) {
            if (step(i) < 0.0) {
                const double ratio = -w(i) / step(i);
                if (ratio < alpha) {
                    alpha = ratio;
                    blocking = i;
                }
            }
        }
        w += alpha * step;
        if (blocking >= 0) {
            w(blocking) = 0.0;
            at_bound[static_cast<std::size_t>(blocking)] = true;
        }
    }
    std::ostringstream msg;
    msg << "solve_mvo: active set did not converge in " << max_iter << " iterations (n=" << n
        << ", kkt=" << mvo_kkt_residual(mu, sigma, delta, w) << ")";
    throw std::runtime_error(msg.str());
}

double ex_ante_tracking_error(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& w, const Eigen::VectorXd& w_bmk) {
    const Eigen::VectorXd d = w - w_bmk;
    return std::sqrt(std::max(0.0, d.dot(sigma * d)));
}

AllocationResult allocate_with_confidence(const Equilibrium& eq, const ViewSet& views, double confidence) {
    ViewSet vs = views;
    vs.omega_over_tau = view_uncertainty(eq.sigma, vs.P, confidence);
    AllocationResult res;
    res.confidence = confidence;
    res.mu_bl = posterior_returns(eq.pi, eq.sigma, vs);
    res.weights = solve_mvo(res.mu_bl, eq.sigma, eq.delta);
    res.ex_ante_te = ex_ante_tracking_error(eq.sigma, res.weights, eq.w_bmk);
    return res;
}

AllocationResult target_tracking_error(const Equilibrium& eq, const ViewSet& views, double te_target) {
    if (!(te_target > 0.0)) throw std::invalid_argument("target_tracking_error: target must be > 0");
    auto within = [&](const AllocationResult& r) { return std::abs(r.ex_ante_te - te_target) <= kTeRelTolerance * te_target; };

    // Small c means confident views and the largest deviation from the benchmark.
    AllocationResult strongest = allocate_with_confidence(eq, views, kMinConfidence);
    if (within(strongest)) return strongest;
    if (strongest.ex_ante_te < te_target) {
        strongest.te_capped = true;
        return strongest;
    }
    AllocationResult weakest = allocate_with_confidence(eq, views, kMaxConfidence);
    if (within(weakest)) return weakest;
    if (weakest.ex_ante_te > te_target) {
        weakest.bracket_failure = true;
        return weakest;
    }

    double lo = std::log(kMinConfidence), hi = std::log(kMaxConfidence);
    AllocationResult best = std::abs(strongest.ex_ante_te - te_target) <= std::abs(weakest.ex_ante_te - te_target) ? strongest : weakest;
    for (int it = 0; it < kTeMaxIterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        AllocationResult r = allocate_with_confidence(eq, views, std::exp(mid));
        if (std::abs(r.ex_ante_te - te_target) < std::abs(best.ex_ante_te - te_target)) best = r;
        if (within(r)) return r;
        if (r.ex_ante_te > te_target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.bracket_failure = true;
    return best;
}

}  // namespace factorjm
