#include "doctest.h"

#include "factorjm/black_litterman.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace factorjm;
using factorjm::testing::normal_matrix;
using factorjm::testing::random_spd;

namespace {

const std::vector<std::string> kUniverse{"market", "value", "size", "momentum", "quality", "low_vol", "growth"};

Eigen::MatrixXd relative_rows(Eigen::Index n, const std::vector<Eigen::Index>& factors) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(factors.size()), n);
    for (std::size_t k = 0; k < factors.size(); ++k) {
        P(static_cast<Eigen::Index>(k), factors[k]) = 1.0;
        P(static_cast<Eigen::Index>(k), 0) = -1.0;
    }
    return P;
}

double objective(const Eigen::VectorXd& mu, const Eigen::MatrixXd& s, double delta, const Eigen::VectorXd& w) {
    return mu.dot(w) - 0.5 * delta * w.dot(s * w);
}

Equilibrium seven_asset_equilibrium(std::uint64_t seed) {
    Eigen::MatrixXd daily = normal_matrix(2000, 7, seed, 0.01);
    daily.col(0) *= 1.0;
    for (Eigen::Index j = 1; j < 7; ++j) daily.col(j) = 0.9 * daily.col(0) + 0.5 * daily.col(j);
    const auto sigma = ewm_covariance(daily, 126);
    return Equilibrium::from_benchmark(2.5, sigma, Eigen::VectorXd::Constant(7, 1.0 / 7.0));
}

ViewSet strong_views() {
    return build_views({{"value", 0.05}, {"size", -0.05}, {"momentum", 0.05}, {"quality", 0.05}, {"low_vol", -0.05}, {"growth", -0.03}},
                       kUniverse, "market");
}

}  // namespace

TEST_CASE("ewm_covariance") {
    const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(50, 3, 0.01);
    CHECK(ewm_covariance(c, 126, 0.0).isZero(1e-18));
    CHECK_THROWS_AS(ewm_covariance(c.topRows(1), 126), std::invalid_argument);
    CHECK_THROWS_AS(ewm_covariance(c, 0.0), std::invalid_argument);

    // Long halflife approaches the sample covariance (annualized).
    const Eigen::MatrixXd x = normal_matrix(10'000, 3, 7, 0.01);
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd sample = 252.0 * centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    const auto ewm = ewm_covariance(x, 1e9);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(ewm(i, i) / sample(i, i) - 1.0) < 0.05);
    CHECK((ewm - sample).cwiseAbs().maxCoeff() < 0.05 * sample.diagonal().maxCoeff());

    Eigen::MatrixXd two(300, 2);
    two.col(0) = normal_matrix(300, 1, 9, 0.01);
    two.col(1) = 2.0 * two.col(0);
    const auto s = ewm_covariance(two, 126);
    CHECK(std::abs(s(0, 1) / std::sqrt(s(0, 0) * s(1, 1)) - 1.0) < 1e-8);
    CHECK(s == s.transpose());
}

TEST_CASE("floor_eigenvalues") {
    Eigen::Matrix2d m;
    m << 1.0, 1.0, 1.0, 1.0;
    const auto f = floor_eigenvalues(m, 1e-6);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f);
    CHECK(es.eigenvalues().minCoeff() >= 1e-6 - 1e-15);
    const auto spd = random_spd(4, 3);
    CHECK(floor_eigenvalues(spd, 1e-10) == spd);
}

TEST_CASE("implied_prior") {
    const auto pi = implied_prior(2.5, Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Constant(4, 0.25));
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(pi(i) == doctest::Approx(2.5 / 4));
    CHECK(implied_prior(0.0, random_spd(3, 1), Eigen::VectorXd::Constant(3, 1.0 / 3)).isZero());
    const auto s = random_spd(3, 2);
    const Eigen::Vector3d w(0.2, 0.5, 0.3);
    Eigen::Vector3d oracle;
    for (int i = 0; i < 3; ++i) {
        oracle(i) = 0.0;
        for (int j = 0; j < 3; ++j) oracle(i) += 1.7 * s(i, j) * w(j);
    }
    CHECK((implied_prior(1.7, s, w) - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("build_views") {
    std::map<std::string, double> zero;
    for (std::size_t i = 1; i < kUniverse.size(); ++i) zero[kUniverse[i]] = 0.0;
    const auto vz = build_views(zero, kUniverse, "market");
    CHECK(vz.P.rows() == 6);
    CHECK(vz.P.cols() == 7);
    CHECK(vz.v.isZero());
    for (Eigen::Index k = 0; k < 6; ++k) {
        CHECK(vz.P.row(k).sum() == 0.0);
        CHECK(vz.P(k, 0) == -1.0);
        CHECK(vz.P(k, k + 1) == 1.0);
    }
    auto one = zero;
    one["value"] = 0.05;
    const auto v1 = build_views(one, kUniverse, "market");
    CHECK(v1.v(0) == 0.05);
    CHECK(v1.v.tail(5).isZero());
    zero.erase("growth");
    CHECK_THROWS(build_views(zero, kUniverse, "market"));
}

TEST_CASE("view_uncertainty") {
    const auto P = relative_rows(3, {1, 2});
    const auto u = view_uncertainty(Eigen::MatrixXd::Identity(3, 3), P, 1.0);
    CHECK(u(0) == doctest::Approx(2.0));
    CHECK(u(1) == doctest::Approx(2.0));
    const auto s = random_spd(3, 4);
    const auto a = view_uncertainty(s, P, 0.7);
    const auto b = view_uncertainty(s, P, 1.4);
    for (Eigen::Index k = 0; k < 2; ++k) {
        CHECK(b(k) == doctest::Approx(2.0 * a(k)));
        const double direct = s(k + 1, k + 1) + s(0, 0) - 2.0 * s(0, k + 1);
        CHECK(a(k) == doctest::Approx(0.7 * direct).epsilon(1e-12));
    }
    Eigen::MatrixXd degenerate = Eigen::MatrixXd::Ones(3, 3);
    CHECK_THROWS(view_uncertainty(degenerate, P, 1.0));
}

TEST_CASE("posterior_returns") {
    const auto s = random_spd(3, 5);
    const Eigen::Vector3d w(0.3, 0.3, 0.4);
    const auto pi = implied_prior(2.5, s, w);
    ViewSet vs;
    vs.P = relative_rows(3, {1});
    vs.omega_over_tau = view_uncertainty(s, vs.P, 0.5);
    vs.v = vs.P * pi;
    CHECK((posterior_returns(pi, s, vs) - pi).cwiseAbs().maxCoeff() <= 1e-12);

    vs.v = Eigen::VectorXd::Constant(1, 0.05);
    const auto huge = vs;
    ViewSet h = vs;
    h.omega_over_tau = view_uncertainty(s, vs.P, 1e12);
    CHECK((posterior_returns(pi, s, h) - pi).cwiseAbs().maxCoeff() < 1e-12);

    // Explicit-inverse oracle.
    const Eigen::MatrixXd omega = vs.omega_over_tau.asDiagonal();
    const Eigen::MatrixXd inner = (vs.P * s * vs.P.transpose() + omega).inverse();
    const Eigen::VectorXd oracle = pi + s * vs.P.transpose() * inner * (vs.v - vs.P * pi);
    CHECK((posterior_returns(pi, s, huge) - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("unconstrained active weights") {
    const auto s = random_spd(4, 6);
    const auto eq = Equilibrium::from_benchmark(2.5, s, Eigen::VectorXd::Constant(4, 0.25));
    ViewSet vs;
    vs.P = relative_rows(4, {1});
    vs.omega_over_tau = view_uncertainty(s, vs.P, 0.8);
    vs.v = vs.P * eq.pi;
    const auto zero = unconstrained_active_weights(eq, vs);
    CHECK(zero.lambda.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(zero.active.cwiseAbs().maxCoeff() < 1e-12);

    // K = 1 closed form.
    vs.v(0) = 0.04;
    const auto one = unconstrained_active_weights(eq, vs);
    const Eigen::VectorXd p = vs.P.row(0).transpose();
    const double closed = (vs.v(0) - p.dot(eq.pi)) / (p.dot(s * p) + vs.omega_over_tau(0)) / eq.delta;
    CHECK(one.lambda(0) == doctest::Approx(closed).epsilon(1e-12));

    // K = 2: matrix route equals leave-one-out element route.
    vs.P = relative_rows(4, {1, 3});
    vs.omega_over_tau = view_uncertainty(s, vs.P, 0.3);
    vs.v = Eigen::Vector2d(0.05, -0.02);
    const auto two = unconstrained_active_weights(eq, vs);
    const Eigen::MatrixXd A = vs.P * s * vs.P.transpose() + Eigen::MatrixXd(vs.omega_over_tau.asDiagonal());
    const Eigen::VectorXd lam = A.inverse() * (vs.v - vs.P * eq.pi) / eq.delta;
    for (Eigen::Index j = 0; j < 2; ++j) {
        // Element formula built from the single other view.
        const Eigen::Index o = 1 - j;
        const Eigen::VectorXd pj = vs.P.row(j).transpose();
        const Eigen::VectorXd po = vs.P.row(o).transpose();
        const double a_oo = po.dot(s * po) + vs.omega_over_tau(o);
        const Eigen::VectorXd mu_minus = eq.pi + s * po * (vs.v(o) - po.dot(eq.pi)) / a_oo;
        const double eta = pj.dot(s * pj) + vs.omega_over_tau(j) - std::pow(pj.dot(s * po), 2) / a_oo;
        const double elem = (vs.v(j) - pj.dot(mu_minus)) / eta / eq.delta;
        CHECK(two.lambda(j) == doctest::Approx(lam(j)).epsilon(1e-10));
        CHECK(two.lambda_elementwise(j) == doctest::Approx(elem).epsilon(1e-10));
        CHECK(two.eta(j) == doctest::Approx(eta).epsilon(1e-10));
    }
}

TEST_CASE("unconstrained tilt equals the posterior optimizer") {
    const auto s = random_spd(2, 8);
    const auto eq = Equilibrium::from_benchmark(2.5, s, Eigen::Vector2d(0.5, 0.5));
    ViewSet vs;
    vs.P = relative_rows(2, {1});
    vs.omega_over_tau = view_uncertainty(s, vs.P, 0.6);
    vs.v = Eigen::VectorXd::Constant(1, 0.03);
    const auto aw = unconstrained_active_weights(eq, vs);
    const Eigen::VectorXd direct = s.ldlt().solve(posterior_returns(eq.pi, s, vs)) / eq.delta;
    CHECK((eq.w_bmk + aw.active - direct).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("solve_mvo") {
    const auto eq = solve_mvo(Eigen::VectorXd::Constant(4, 0.07), 0.04 * Eigen::MatrixXd::Identity(4, 4), 2.5);
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(eq(i) == doctest::Approx(0.25).epsilon(1e-12));

    // Interior closed form for two assets.
    const Eigen::Vector2d mu(0.10, 0.0);
    const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
    const Eigen::Vector2d iota = Eigen::Vector2d::Ones();
    const Eigen::Vector2d closed = iota / 2.0 + (mu - iota * iota.dot(mu) / iota.dot(iota)) / 2.5;
    CHECK((solve_mvo(mu, I, 2.5) - closed).cwiseAbs().maxCoeff() < 1e-12);

    // Binding constraint against a simplex grid.
    const Eigen::Vector3d mu3(1.0, -100.0, 0.5);
    const auto s3 = random_spd(3, 9, 1.0);
    const auto w = solve_mvo(mu3, s3, 2.5);
    CHECK(w(1) == doctest::Approx(0.0));
    double best = -1e300;
    Eigen::Vector3d best_w;
    const int n = 2000;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n - i; ++j) {
            const Eigen::Vector3d g(i / double(n), j / double(n), (n - i - j) / double(n));
            const double f = objective(mu3, s3, 2.5, g);
            if (f > best) {
                best = f;
                best_w = g;
            }
        }
    CHECK((w - best_w).cwiseAbs().maxCoeff() < 1e-3);
    CHECK(objective(mu3, s3, 2.5, w) >= best - 1e-12);
}

TEST_CASE("solve_mvo invariants on random problems") {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(seed % 6);
        const auto s = random_spd(n, seed);
        const Eigen::VectorXd mu = normal_matrix(n, 1, seed + 1000, 0.1);
        const auto w = solve_mvo(mu, s, 2.5);
        CHECK(w.minCoeff() >= -1e-10);
        CHECK(std::abs(w.sum() - 1.0) <= 1e-8);
        CHECK(mvo_kkt_residual(mu, s, 2.5, w) <= 1e-8);
        const auto shifted = solve_mvo((mu.array() + 0.37).matrix(), s, 2.5);
        CHECK((shifted - w).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("tracking error grows with confidence") {
    const auto eq = seven_asset_equilibrium(11);
    const auto views = strong_views();
    double prev = -1.0;
    for (double c : {1e3, 1e2, 10.0, 1.0, 0.1, 0.01, 1e-3}) {
        const auto r = allocate_with_confidence(eq, views, c);
        CHECK(r.ex_ante_te >= prev - 1e-12);
        prev = r.ex_ante_te;
        CHECK(std::abs(r.weights.sum() - 1.0) < 1e-8);
        CHECK(r.weights.minCoeff() >= -1e-10);
    }
}

TEST_CASE("target_tracking_error") {
    const auto eq = seven_asset_equilibrium(12);
    const auto views = strong_views();
    const auto r = target_tracking_error(eq, views, 0.03);
    CHECK_FALSE(r.te_capped);
    CHECK_FALSE(r.bracket_failure);
    const double direct = ex_ante_tracking_error(eq.sigma, r.weights, eq.w_bmk);
    CHECK(direct == doctest::Approx(r.ex_ante_te));
    CHECK(std::abs(direct / 0.03 - 1.0) <= 0.05);

    double prev = 0.0;
    for (double te : {0.01, 0.02, 0.03, 0.04}) {
        const auto a = target_tracking_error(eq, views, te);
        const double dev = ex_ante_tracking_error(eq.sigma, a.weights, eq.w_bmk);
        CHECK(dev >= prev);
        prev = dev;
    }

    // No view innovation: TE is zero everywhere and the target is unreachable.
    ViewSet flat = views;
    flat.v = flat.P * eq.pi;
    const auto none = target_tracking_error(eq, flat, 0.02);
    CHECK(none.te_capped);
    CHECK(none.ex_ante_te < 1e-8);
    CHECK((none.weights - eq.w_bmk).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(none.flags() == std::vector<std::string>{"te_capped"});
    CHECK_THROWS_AS(target_tracking_error(eq, views, 0.0), std::invalid_argument);
}
