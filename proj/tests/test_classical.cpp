#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "oukit/classical.hpp"
#include "oukit/random.hpp"

using namespace oukit;

namespace {

OUParams truth(double horizon = 1.0) { return {3.0, 0.5, 0.5, 0.0, horizon}; }

double sample_sd(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> random_observations(std::size_t n, std::uint64_t seed) {
    NormalStream z(seed, 0);
    std::vector<double> y(n);
    double x = 0.3;
    for (double& v : y) {
        x = 0.2 + 0.8 * x + 0.3 * z.next();
        v = x + 0.1 * z.next();
    }
    return y;
}

}  // namespace

TEST_CASE("ols_fit: noiseless path is exactly AR(1)") {
    OUParams p = truth(5.0);
    p.sigma = 0.0;
    const auto paths = simulate(p, TimeGrid{1000, 0.005}, 3, 1);
    const auto fit = ols_fit(paths);
    const double beta = std::exp(-0.015);
    CHECK(std::abs(fit.beta - beta) < 1e-10);
    CHECK(std::abs(fit.alpha - 0.5 * (1.0 - beta)) < 1e-10);
    CHECK(fit.resid_var < 1e-10);
    CHECK(fit.n_obs == 3000);

    const auto r = recover_params(fit, 0.005);
    CHECK(r.theta_hat == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(std::abs(r.mu_hat - 0.5) < 1e-10);
    CHECK(std::abs(r.sigma_hat) < 1e-6);
}

TEST_CASE("ols_fit: identity dynamics") {
    // Constant paths at different levels: x_{k+1} == x_k everywhere.
    std::vector<double> values;
    for (double level : {-1.0, 0.25, 2.0}) values.insert(values.end(), 11, level);
    const PathSet paths(TimeGrid{10, 0.1}, 3, values, 0);
    const auto fit = ols_fit(paths);
    CHECK(fit.beta == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(fit.alpha) < 1e-14);
    CHECK_THROWS_AS(recover_params(fit, 0.1), BetaOutOfRange);
}

TEST_CASE("ols_fit: matches extended-precision normal equations") {
    const auto paths = simulate(truth(5.0), TimeGrid::from_horizon(5.0, 5000), 100, 31337);
    const auto fit = ols_fit(paths);
    const auto o = oracle::pooled_ols(paths.values(), paths.n_paths(), paths.n_cols());
    CHECK(oracle::rel_err(fit.alpha, o.alpha) < 1e-9);
    CHECK(oracle::rel_err(fit.beta, o.beta) < 1e-9);
    CHECK(oracle::rel_err(fit.resid_var, o.resid_var) < 1e-9);
}

TEST_CASE("ols_fit: degenerate design") {
    OUParams p = truth();
    p.sigma = 0.0;
    p.x0 = p.mu;
    const auto flat = simulate(p, TimeGrid{100, 0.01}, 2, 1);
    CHECK_THROWS_AS(ols_fit(flat), DegenerateDesign);
}

TEST_CASE("recover_params") {
    const double beta = std::exp(-0.015);
    SUBCASE("noiseless inversion") {
        const auto r = recover_params({0.5 * (1.0 - beta), beta, 0.0, 100}, 0.005);
        CHECK(r.method == Method::OLS);
        CHECK(r.theta_hat == doctest::Approx(3.0).epsilon(1e-10));
        CHECK(r.mu_hat == doctest::Approx(0.5).epsilon(1e-10));
        CHECK(r.sigma_hat == 0.0);
    }
    SUBCASE("sigma from the analytic eta variance") {
        const double var_eta = (0.25 / 6.0) * (1.0 - std::exp(-0.03));
        const auto r = recover_params({0.0, beta, var_eta, 100}, 0.005);
        CHECK(std::abs(r.sigma_hat - 0.5) < 1e-10);
    }
    SUBCASE("sigma round trip over a parameter sweep") {
        for (double theta : {0.5, 1.0, 3.0, 8.0})
            for (double sigma : {0.05, 0.5, 2.0})
                for (double dt : {1e-3, 5e-3, 0.05}) {
                    const OUParams q{theta, 0.0, sigma, 0.0, 1.0};
                    const auto c = step_coefficients(q, dt);
                    const double var_eta = q.stationary_variance() * (1.0 - c.beta * c.beta);
                    const auto r = recover_params({0.0, c.beta, var_eta, 10}, dt);
                    CHECK(std::abs(r.sigma_hat - sigma) < 1e-12 * std::max(1.0, sigma) * 10);
                }
    }
    SUBCASE("beta out of range reports the side") {
        try {
            recover_params({0.0, -0.1, 1.0, 10}, 0.01);
            FAIL("expected BetaOutOfRange");
        } catch (const BetaOutOfRange& e) {
            CHECK(e.side() == BetaOutOfRange::Side::AtOrBelowZero);
        }
        try {
            recover_params({0.0, 1.0, 1.0, 10}, 0.01);
            FAIL("expected BetaOutOfRange");
        } catch (const BetaOutOfRange& e) {
            CHECK(e.side() == BetaOutOfRange::Side::AtOrAboveOne);
        }
    }
}

TEST_CASE("OLS exactness over random noiseless forward maps") {
    UniformStream u(5, 0);
    for (int i = 0; i < 25; ++i) {
        const OUParams p{u.next(0.5, 10.0), u.next(-1.0, 2.0), 0.0, u.next(-1.0, 2.0) + 3.0, 1.0};
        const auto r = estimate_ols(simulate(p, TimeGrid{200, 0.005}, 2, 0));
        CHECK(r.theta_hat == doctest::Approx(p.theta).epsilon(1e-10));
        CHECK(std::abs(r.mu_hat - p.mu) < 1e-10);
    }
}

TEST_CASE("OLS consistency: doubling paths shrinks replicate spread") {
    std::vector<double> mu_small, sigma_small, mu_big, sigma_big;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const auto small = estimate_ols(simulate(truth(5.0), TimeGrid::from_horizon(5.0, 500), 20, derive_seed(1, rep)));
        const auto big = estimate_ols(simulate(truth(5.0), TimeGrid::from_horizon(5.0, 500), 40, derive_seed(2, rep)));
        mu_small.push_back(small.mu_hat);
        sigma_small.push_back(small.sigma_hat);
        mu_big.push_back(big.mu_hat);
        sigma_big.push_back(big.sigma_hat);
    }
    CHECK(sample_sd(mu_big) < sample_sd(mu_small));
    CHECK(sample_sd(sigma_big) < sample_sd(sigma_small));
}

TEST_CASE("kalman_filter: perfect observations") {
    const auto y = random_observations(40, 3);
    const auto run = kalman_filter(y, {0.2, 0.8, 0.09, 0.0, 0.0, 1.0});
    REQUIRE(run.filtered_mean.size() == y.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
        CHECK(run.gain[k] == 1.0);
        CHECK(std::abs(run.filtered_mean[k] - y[k]) <= 4e-16 * std::max(1.0, std::abs(y[k])));
        CHECK(run.filtered_var[k] == 0.0);
    }
}

TEST_CASE("kalman_filter: static state with consistent prior") {
    const std::vector<double> y(25, 1.75);
    const auto run = kalman_filter(y, {0.0, 1.0, 0.0, 0.04, 1.75, 0.5});
    for (std::size_t k = 0; k < y.size(); ++k) {
        CHECK(run.filtered_mean[k] == 1.75);
        CHECK(run.innovations[k] == 0.0);
    }
}

TEST_CASE("kalman_filter: matches dense joint-Gaussian oracle") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto y = random_observations(50, 100 + seed);
        const StateSpaceParams m{0.2, 0.8, 0.09, 0.01, 0.1, 0.4};
        const auto run = kalman_filter(y, m);
        const oracle::LinearGaussianModel om{m.alpha, m.beta, m.var_eta, m.var_eps, m.init_mean, m.init_var};
        CHECK(oracle::rel_err(run.loglik, oracle::dense_loglik(y, om)) < 1e-8);
        std::vector<oracle::Real> mean, var;
        oracle::dense_filtered(y, om, mean, var);
        for (std::size_t k = 0; k < y.size(); ++k) {
            CHECK(std::abs(run.filtered_mean[k] - static_cast<double>(mean[k])) <
                  1e-8 * std::max(1.0, std::abs(static_cast<double>(mean[k]))));
            CHECK(oracle::rel_err(run.filtered_var[k], var[k]) < 1e-8);
        }
        CHECK(kalman_loglik(y, m) == run.loglik);
    }
}

TEST_CASE("kalman_filter: gain bounds and invariants") {
    UniformStream u(11, 0);
    for (int i = 0; i < 50; ++i) {
        const StateSpaceParams m{u.next(-1, 1), u.next(0.01, 0.999), u.next(0.0, 1.0), u.next(0.0, 1.0),
                                 u.next(-1, 1), u.next(0.0, 2.0)};
        if (m.var_eta == 0.0 && m.var_eps == 0.0) continue;
        const auto run = kalman_filter(random_observations(30, 200 + i), m);
        for (std::size_t k = 0; k < run.gain.size(); ++k) {
            CHECK(run.gain[k] >= 0.0);
            CHECK(run.gain[k] <= 1.0);
            CHECK(run.filtered_var[k] >= 0.0);
            CHECK(run.innovation_var[k] > 0.0);
        }
    }
}

TEST_CASE("kalman_filter: precondition errors") {
    const std::vector<double> y{1.0, 2.0};
    CHECK_THROWS_AS(kalman_filter(y, {0.0, 0.5, 0.0, 0.0, 0.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(kalman_filter(y, {0.0, 0.5, -1.0, 0.1, 0.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(kalman_filter(y, {0.0, 0.5, 0.1, 0.1, 0.0, -1.0}), InvalidArgument);
    // Overflowing variances must surface as a breakdown, not NaNs.
    CHECK_THROWS_AS(kalman_filter(y, {0.0, 1e200, 1.0, 0.0, 0.0, 1e200}), NumericalBreakdown);
}

TEST_CASE("kalman_mle: near-deterministic limit") {
    OUParams p = truth(1.0);
    p.sigma = 1e-3;
    const auto paths = simulate(p, TimeGrid::from_horizon(1.0, 1000), 50, 12);
    const auto r = kalman_mle(paths, ObsNoise::fixed(0.0));
    CHECK(r.method == Method::Kalman);
    CHECK(r.converged());
    CHECK(std::abs(r.theta_hat - 3.0) < 0.03);
    CHECK(std::abs(r.mu_hat - 0.5) < 0.005);
    CHECK(std::abs(r.sigma_hat - 1e-3) < 1e-5);
}

TEST_CASE("kalman_mle: never worse than its OLS warm start") {
    const auto paths = simulate(truth(1.0), TimeGrid::from_horizon(1.0, 1000), 20, 4);
    for (const auto noise : {ObsNoise::fixed(0.0), ObsNoise::free()}) {
        const auto r = kalman_mle(paths, noise);
        CHECK(r.loglik() >= r.diagnostics.at("start_loglik"));
        CHECK(std::isfinite(r.mu_hat));
        CHECK(r.theta_hat > 0.0);
        CHECK(r.sigma_hat > 0.0);
        CHECK(r.paths == 20);
        CHECK(r.n_steps == 1000);
    }
}

TEST_CASE("kalman_mle: iteration cap raises DidNotConverge with the best point") {
    const auto paths = simulate(truth(1.0), TimeGrid::from_horizon(1.0, 200), 5, 9);
    try {
        kalman_mle(paths, ObsNoise::fixed(0.0), NelderMeadConfig{3, 1e-8});
        FAIL("expected DidNotConverge");
    } catch (const DidNotConverge& e) {
        CHECK(e.best_so_far().method == Method::Kalman);
        CHECK(std::isfinite(e.best_so_far().theta_hat));
        CHECK(e.best_so_far().loglik() >= e.best_so_far().diagnostics.at("start_loglik"));
    }
}

TEST_CASE("EstimateReport CSV row") {
    EstimateReport r;
    r.method = Method::Kalman;
    r.mu_hat = 0.5;
    r.theta_hat = 3.25;
    r.sigma_hat = 0.1;
    r.paths = 100;
    r.n_steps = 1000;
    r.horizon = 1.0;
    r.seed = 7;
    r.diagnostics["loglik"] = -12.5;
    r.diagnostics["converged"] = 1.0;
    CHECK(estimate_report_csv_row(r) == "Kalman,100,1000,1,7,0.5,3.25,0.1,-12.5,true");
    r.diagnostics.clear();
    r.method = Method::OLS;
    CHECK(estimate_report_csv_row(r) == "OLS,100,1000,1,7,0.5,3.25,0.1,,true");
    CHECK(estimate_report_csv_header() == "method,paths,n_steps,horizon,seed,mu_hat,theta_hat,sigma_hat,loglik,converged");
}

TEST_CASE("parse_method") {
    CHECK(parse_method("ols") == Method::OLS);
    CHECK(parse_method("Kalman") == Method::Kalman);
    CHECK(parse_method("NN") == Method::NN);
    CHECK_THROWS_AS(parse_method("mle"), InvalidArgument);
}
