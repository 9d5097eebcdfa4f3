#include "factorjm/jump_model.hpp"

#include "factorjm/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace factorjm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(const Eigen::MatrixXd& X, const char* what) {
    if (!X.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

void check_states(const std::vector<int>& states, Eigen::Index rows, int n_states) {
    if (static_cast<Eigen::Index>(states.size()) != rows)
        throw std::invalid_argument("state sequence length does not match rows");
    for (int s : states)
        if (s < 0 || s >= n_states) throw std::invalid_argument("state index out of range");
}

/// k-means++ seeding over the rows of X.
Eigen::MatrixXd kmeanspp(const Eigen::MatrixXd& X, int k, std::mt19937_64& rng) {
    const Eigen::Index T = X.rows();
    Eigen::MatrixXd c(k, X.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, T - 1);
    c.row(0) = X.row(pick(rng));
    Eigen::VectorXd d2 = (X.rowwise() - c.row(0)).rowwise().squaredNorm();
    for (int j = 1; j < k; ++j) {
        const double total = d2.sum();
        Eigen::Index chosen = 0;
        if (!(total > 0.0)) {
            chosen = pick(rng);
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            const double target = u(rng);
            double acc = 0.0;
            chosen = T - 1;
            for (Eigen::Index t = 0; t < T; ++t) {
                acc += d2(t);
                if (acc > target) {
                    chosen = t;
                    break;
                }
            }
        }
        c.row(j) = X.row(chosen);
        d2 = d2.cwiseMin((X.rowwise() - c.row(j)).rowwise().squaredNorm());
    }
    return c;
}

}  // namespace

void JumpModelConfig::validate(Eigen::Index dims, bool sparse) const {
    if (n_states < 2) throw std::invalid_argument("JumpModelConfig: n_states must be >= 2");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("JumpModelConfig: lambda must be >= 0");
    if (sparse && (!(kappa_sq >= 1.0) || kappa_sq > static_cast<double>(dims) + 1e-12))
        throw std::invalid_argument("JumpModelConfig: kappa_sq must lie in [1, D]");
    if (n_init < 1) throw std::invalid_argument("JumpModelConfig: n_init must be >= 1");
    if (max_iter < 1 || max_outer < 1) throw std::invalid_argument("JumpModelConfig: iteration caps must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("JumpModelConfig: tol must be > 0");
}

Eigen::VectorXd state_losses(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::MatrixXd& centroids) {
    Eigen::VectorXd loss(centroids.rows());
    for (Eigen::Index k = 0; k < centroids.rows(); ++k) loss(k) = 0.5 * (x - centroids.row(k)).squaredNorm();
    return loss;
}

void advance_values(Eigen::VectorXd& value, const Eigen::VectorXd& loss, double lambda) {
    const Eigen::Index K = value.size();
    Eigen::VectorXd next(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        double other = kInf;
        for (Eigen::Index j = 0; j < K; ++j)
            if (j != k) other = std::min(other, value(j));
        next(k) = loss(k) + std::min(value(k), other + lambda);
    }
    value = std::move(next);
}

int argmin_lowest(const Eigen::VectorXd& v) {
    int best = 0;
    for (Eigen::Index k = 1; k < v.size(); ++k)
        if (v(k) < v(best)) best = static_cast<int>(k);
    return best;
}

std::vector<int> optimal_states(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids, double lambda) {
    const Eigen::Index T = X.rows();
    const Eigen::Index K = centroids.rows();
    if (T < 1) throw std::invalid_argument("optimal_states: need at least one row");
    if (K < 1 || centroids.cols() != X.cols()) throw std::invalid_argument("optimal_states: centroid shape mismatch");
    require_finite(X, "optimal_states");
    require_finite(centroids, "optimal_states");
    if (!(lambda >= 0.0)) throw std::invalid_argument("optimal_states: lambda must be >= 0");

    Eigen::MatrixXd values(T, K);
    Eigen::VectorXd v = state_losses(X.row(0), centroids);
    values.row(0) = v.transpose();
    for (Eigen::Index t = 1; t < T; ++t) {
        advance_values(v, state_losses(X.row(t), centroids), lambda);
        values.row(t) = v.transpose();
    }

    std::vector<int> states(static_cast<std::size_t>(T));
    states.back() = argmin_lowest(values.row(T - 1).transpose());
    for (Eigen::Index t = T - 2; t >= 0; --t) {
        const int next = states[static_cast<std::size_t>(t + 1)];
        int best = 0;
        double best_cost = kInf;
        for (Eigen::Index j = 0; j < K; ++j) {
            const double cost = values(t, j) + (j == next ? 0.0 : lambda);
            if (cost < best_cost) {
                best_cost = cost;
                best = static_cast<int>(j);
            }
        }
        states[static_cast<std::size_t>(t)] = best;
    }
    return states;
}

Eigen::VectorXd terminal_values(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids, double lambda) {
    if (X.rows() < 1) throw std::invalid_argument("terminal_values: need at least one row");
    Eigen::VectorXd v = state_losses(X.row(0), centroids);
    for (Eigen::Index t = 1; t < X.rows(); ++t) advance_values(v, state_losses(X.row(t), centroids), lambda);
    return v;
}

double jump_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids, const std::vector<int>& states,
                      double lambda) {
    check_states(states, X.rows(), static_cast<int>(centroids.rows()));
    double total = 0.0;
    for (Eigen::Index t = 0; t < X.rows(); ++t) total += 0.5 * (X.row(t) - centroids.row(states[static_cast<std::size_t>(t)])).squaredNorm();
    return total + lambda * count_transitions(states);
}

int count_transitions(const std::vector<int>& states) {
    int n = 0;
    for (std::size_t t = 1; t < states.size(); ++t) n += states[t] != states[t - 1];
    return n;
}

CentroidUpdate update_centroids(const Eigen::MatrixXd& X, const std::vector<int>& states,
                                const Eigen::MatrixXd& previous) {
    const int K = static_cast<int>(previous.rows());
    check_states(states, X.rows(), K);
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, X.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(K), 0);
    for (Eigen::Index t = 0; t < X.rows(); ++t) {
        const int s = states[static_cast<std::size_t>(t)];
        sums.row(s) += X.row(t);
        ++counts[static_cast<std::size_t>(s)];
    }
    CentroidUpdate out{previous, std::vector<bool>(static_cast<std::size_t>(K), false)};
    for (int k = 0; k < K; ++k) {
        const auto n = counts[static_cast<std::size_t>(k)];
        if (n == 0) {
            out.empty[static_cast<std::size_t>(k)] = true;
        } else {
            out.centroids.row(k) = sums.row(k) / static_cast<double>(n);
        }
    }
    return out;
}

DescentResult coordinate_descent(const Eigen::MatrixXd& Xw, int n_states, double lambda, int n_init, int max_iter,
                                 std::uint64_t seed) {
    if (Xw.rows() <= n_states) throw std::invalid_argument("jump model: need more rows than states");
    require_finite(Xw, "jump model");
    DescentResult best;
    best.objective = kInf;
    for (int r = 0; r < n_init; ++r) {
        std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
        Eigen::MatrixXd centroids = kmeanspp(Xw, n_states, rng);
        std::vector<int> states = optimal_states(Xw, centroids, lambda);
        std::vector<double> trace{jump_objective(Xw, centroids, states, lambda)};
        for (int it = 1; it < max_iter; ++it) {
            centroids = update_centroids(Xw, states, centroids).centroids;
            auto next = optimal_states(Xw, centroids, lambda);
            trace.push_back(jump_objective(Xw, centroids, next, lambda));
            const bool repeated = next == states;
            states = std::move(next);
            if (repeated) break;
        }
        const double obj = trace.back();
        if (obj < best.objective) {
            best.objective = obj;
            best.centroids = centroids;
            best.states = states;
            best.best_restart = r;
        }
        best.traces.push_back(std::move(trace));
    }
    return best;
}

namespace {

Eigen::MatrixXd apply_weights(const Eigen::MatrixXd& X, const Eigen::VectorXd& w) {
    return X * w.cwiseSqrt().asDiagonal();
}

JumpModelFit assemble_fit(const FeatureMatrix& X, const JumpModelConfig& cfg, const Eigen::VectorXd& w,
                          DescentResult d) {
    JumpModelFit fit;
    const Eigen::MatrixXd Xw = apply_weights(X.values, w);
    fit.terminal_values = terminal_values(Xw, d.centroids, cfg.lambda);
    fit.centroids = std::move(d.centroids);
    fit.states = std::move(d.states);
    fit.objective = d.objective;
    fit.weights = w;
    fit.train_stats = X.stats ? *X.stats : StandardizationStats::identity(X.cols());
    fit.feature_names = X.names;
    fit.train_dates = X.dates;
    fit.config = cfg;
    return fit;
}

}  // namespace

JumpModelFit fit_jump_model(const FeatureMatrix& X, const JumpModelConfig& cfg) {
    cfg.validate(X.cols(), false);
    if (X.rows() <= cfg.n_states) throw std::invalid_argument("fit_jump_model: need more rows than states");
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(X.cols(), 1.0 / std::sqrt(static_cast<double>(X.cols())));
    auto d = coordinate_descent(apply_weights(X.values, w), cfg.n_states, cfg.lambda, cfg.n_init, cfg.max_iter, cfg.seed);
    auto fit = assemble_fit(X, cfg, w, std::move(d));
    fit.outer_iterations = 0;
    return fit;
}

Eigen::VectorXd between_state_scatter(const Eigen::MatrixXd& X, const std::vector<int>& states, int n_states) {
    check_states(states, X.rows(), n_states);
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::VectorXd tss = (X.rowwise() - mean).colwise().squaredNorm().transpose();
    const auto cu = update_centroids(X, states, Eigen::MatrixXd::Zero(n_states, X.cols()));
    Eigen::VectorXd wcss = Eigen::VectorXd::Zero(X.cols());
    for (Eigen::Index t = 0; t < X.rows(); ++t)
        wcss += (X.row(t) - cu.centroids.row(states[static_cast<std::size_t>(t)])).cwiseAbs2().transpose();
    return (tss - wcss).cwiseMax(0.0);
}

Eigen::VectorXd sparse_weights(const Eigen::VectorXd& scores, double kappa) {
    const Eigen::Index D = scores.size();
    if (D == 0) throw std::invalid_argument("sparse_weights: empty score vector");
    if (!(kappa >= 1.0)) throw std::invalid_argument("sparse_weights: kappa must be >= 1");
    const Eigen::VectorXd a = scores.cwiseMax(0.0);
    const double amax = a.maxCoeff();
    if (!(amax > 0.0)) return Eigen::VectorXd::Constant(D, 1.0 / std::sqrt(static_cast<double>(D)));

    auto soft = [&](double delta) -> Eigen::VectorXd {
        Eigen::VectorXd s = (a.array() - delta).cwiseMax(0.0).matrix();
        const double n = s.norm();
        return n > 0.0 ? Eigen::VectorXd(s / n) : Eigen::VectorXd(Eigen::VectorXd::Zero(D));
    };
    Eigen::VectorXd w = soft(0.0);
    if (w.sum() <= kappa) return w;

    // l1 norm of the normalized soft-threshold is nonincreasing in delta.
    double lo = 0.0, hi = amax;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (soft(mid).sum() > kappa) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    w = soft(hi);
    // Bisection can stop a rounding step short of a support boundary.
    w = (w.array() < 1e-12).select(0.0, w);
    if (w.sum() > 0.0) w /= w.norm();
    if (w.sum() == 0.0) {
        // Tied maxima with kappa below their joint l1 norm: keep the first.
        w = Eigen::VectorXd::Zero(D);
        Eigen::Index idx = 0;
        a.maxCoeff(&idx);
        w(idx) = 1.0;
    }
    return w;
}

Eigen::VectorXd update_feature_weights(const Eigen::MatrixXd& X, const std::vector<int>& states, int n_states,
                                       double kappa) {
    return sparse_weights(between_state_scatter(X, states, n_states), kappa);
}

JumpModelFit fit_sparse_jump_model(const FeatureMatrix& X, const JumpModelConfig& cfg) {
    cfg.validate(X.cols());
    if (X.rows() <= cfg.n_states) throw std::invalid_argument("fit_sparse_jump_model: need more rows than states");
    const double kappa = std::sqrt(cfg.kappa_sq);
    Eigen::VectorXd w = Eigen::VectorXd::Constant(X.cols(), 1.0 / std::sqrt(static_cast<double>(X.cols())));
    auto d = coordinate_descent(apply_weights(X.values, w), cfg.n_states, cfg.lambda, cfg.n_init, cfg.max_iter, cfg.seed);
    int outer = 0;
    for (; outer < cfg.max_outer; ++outer) {
        Eigen::VectorXd next = update_feature_weights(X.values, d.states, cfg.n_states, kappa);
        const double change = (next - w).cwiseAbs().maxCoeff();
        w = std::move(next);
        d = coordinate_descent(apply_weights(X.values, w), cfg.n_states, cfg.lambda, cfg.n_init, cfg.max_iter, cfg.seed);
        if (change < cfg.tol) {
            ++outer;
            break;
        }
    }
    auto fit = assemble_fit(X, cfg, w, std::move(d));
    fit.outer_iterations = outer;
    return fit;
}

std::vector<int> label_states(const std::vector<int>& states, int n_states, std::span<const double> active,
                              std::span<const double> fallback_scores) {
    if (states.size() != active.size()) throw std::invalid_argument("label_states: states and returns differ in length");
    std::vector<double> sums(static_cast<std::size_t>(n_states), 0.0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_states), 0);
    for (std::size_t t = 0; t < states.size(); ++t) {
        const int s = states[t];
        if (s < 0 || s >= n_states) throw std::invalid_argument("label_states: state index out of range");
        sums[static_cast<std::size_t>(s)] += active[t];
        ++counts[static_cast<std::size_t>(s)];
    }
    std::vector<double> score(sums);
    for (int k = 0; k < n_states; ++k) {
        if (counts[static_cast<std::size_t>(k)] > 0) continue;
        const double f = static_cast<std::size_t>(k) < fallback_scores.size() ? fallback_scores[static_cast<std::size_t>(k)] : 0.0;
        score[static_cast<std::size_t>(k)] = f > 0.0 ? kInf : -kInf;
    }
    std::vector<int> order(static_cast<std::size_t>(n_states));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)]; });
    std::vector<int> rank(static_cast<std::size_t>(n_states));
    for (int r = 0; r < n_states; ++r) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r;
    return rank;
}

Eigen::RowVectorXd prepare_online_input(const JumpModelFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& raw) {
    if (raw.size() != fit.weights.size()) throw std::invalid_argument("prepare_online_input: dimension mismatch");
    Eigen::RowVectorXd z = raw;
    if (fit.train_stats) z = (raw - fit.train_stats->mean.transpose()).array() / fit.train_stats->std.transpose().array();
    return z.array() * fit.weights.transpose().array().sqrt();
}

OnlineState initial_online_state(const JumpModelFit& fit) {
    OnlineState st;
    if (fit.terminal_values.size() == fit.n_states()) {
        st.value = fit.terminal_values;
        st.last_state = argmin_lowest(st.value);
        st.steps = fit.states.size();
    }
    return st;
}

std::pair<int, OnlineState> online_infer(const JumpModelFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                         const OnlineState& state) {
    if (x.size() != fit.centroids.cols()) throw std::invalid_argument("online_infer: dimension mismatch");
    if (!x.allFinite()) throw std::invalid_argument("online_infer: non-finite input");
    OnlineState next = state;
    const Eigen::VectorXd loss = state_losses(x, fit.centroids);
    if (next.value.size() == 0) {
        next.value = loss;
    } else {
        if (next.value.size() != loss.size()) throw std::invalid_argument("online_infer: state size mismatch");
        advance_values(next.value, loss, fit.config.lambda);
    }
    next.last_state = argmin_lowest(next.value);
    ++next.steps;
    return {next.last_state, std::move(next)};
}

}  // namespace factorjm
