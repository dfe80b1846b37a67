#include "oukit/classical.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>

#include "oukit/io.hpp"

namespace oukit {

BetaOutOfRange::BetaOutOfRange(double beta, Side side)
    : Error("BetaOutOfRange", "regression slope beta = " + io::format_double(beta) +
                                  (side == Side::AtOrBelowZero ? " is <= 0 (too noisy to resolve mean reversion)"
                                                               : " is >= 1 (no mean reversion / explosive fit)")),
      beta_(beta),
      side_(side) {}

std::string_view method_name(Method m) noexcept {
    switch (m) {
        case Method::OLS: return "OLS";
        case Method::Kalman: return "Kalman";
        case Method::NN: return "NN";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    std::string lower;
    for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "ols") return Method::OLS;
    if (lower == "kalman") return Method::Kalman;
    if (lower == "nn") return Method::NN;
    throw InvalidArgument("method", "unknown method '" + std::string(name) + "' (expected ols, kalman or nn)");
}

bool EstimateReport::converged() const {
    const auto it = diagnostics.find("converged");
    return it == diagnostics.end() || it->second != 0.0;
}

double EstimateReport::loglik() const {
    const auto it = diagnostics.find("loglik");
    return it == diagnostics.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
}

void EstimateReport::set_data_shape(const PathSet& data) {
    paths = data.n_paths();
    n_steps = data.grid().n_steps;
    horizon = static_cast<double>(data.grid().n_steps) * data.grid().dt;
    seed = data.seed();
}

std::string_view estimate_report_csv_header() {
    return "method,paths,n_steps,horizon,seed,mu_hat,theta_hat,sigma_hat,loglik,converged";
}

std::string estimate_report_csv_row(const EstimateReport& r) {
    std::string row{method_name(r.method)};
    row += ',' + std::to_string(r.paths);
    row += ',' + std::to_string(r.n_steps);
    row += ',' + io::format_double(r.horizon);
    row += ',' + std::to_string(r.seed);
    row += ',' + io::format_double(r.mu_hat);
    row += ',' + io::format_double(r.theta_hat);
    row += ',' + io::format_double(r.sigma_hat);
    row += ',';
    if (const double ll = r.loglik(); !std::isnan(ll)) row += io::format_double(ll);
    row += r.converged() ? ",true" : ",false";
    return row;
}

RegressionFit ols_fit(const PathSet& paths) {
    const std::size_t cols = paths.n_cols();
    if (cols < 2) throw InvalidArgument("paths", "need at least two time points");
    const std::size_t n = paths.n_paths() * (cols - 1);
    if (n < 3) throw InvalidArgument("paths", "need at least three pooled transitions");

    double sx = 0.0, sy = 0.0;
    for (std::size_t p = 0; p < paths.n_paths(); ++p) {
        const auto row = paths.path(p);
        for (std::size_t k = 0; k + 1 < cols; ++k) {
            sx += row[k];
            sy += row[k + 1];
        }
    }
    const double nd = static_cast<double>(n);
    const double mx = sx / nd;
    const double my = sy / nd;

    double sxx = 0.0, sxy = 0.0;
    for (std::size_t p = 0; p < paths.n_paths(); ++p) {
        const auto row = paths.path(p);
        for (std::size_t k = 0; k + 1 < cols; ++k) {
            const double dx = row[k] - mx;
            sxx += dx * dx;
            sxy += dx * (row[k + 1] - my);
        }
    }
    if (sxx / nd < 1e-14) throw DegenerateDesign("pooled predictor variance below 1e-14 (constant trajectories)");

    RegressionFit fit;
    fit.beta = sxy / sxx;
    fit.alpha = my - fit.beta * mx;
    fit.n_obs = n;

    double ssr = 0.0;
    for (std::size_t p = 0; p < paths.n_paths(); ++p) {
        const auto row = paths.path(p);
        for (std::size_t k = 0; k + 1 < cols; ++k) {
            const double e = row[k + 1] - fit.alpha - fit.beta * row[k];
            ssr += e * e;
        }
    }
    fit.resid_var = ssr / (nd - 2.0);
    return fit;
}

EstimateReport recover_params(const RegressionFit& fit, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("dt", "must be > 0");
    if (!(fit.beta > 0.0)) throw BetaOutOfRange(fit.beta, BetaOutOfRange::Side::AtOrBelowZero);
    if (!(fit.beta < 1.0)) throw BetaOutOfRange(fit.beta, BetaOutOfRange::Side::AtOrAboveOne);

    EstimateReport r;
    r.method = Method::OLS;
    r.theta_hat = -std::log(fit.beta) / dt;
    r.mu_hat = fit.alpha / (1.0 - fit.beta);
    r.sigma_hat = std::sqrt(fit.resid_var) * std::sqrt(2.0 * r.theta_hat / (1.0 - fit.beta * fit.beta));
    r.diagnostics["alpha"] = fit.alpha;
    r.diagnostics["beta"] = fit.beta;
    r.diagnostics["resid_var"] = fit.resid_var;
    r.diagnostics["n_obs"] = static_cast<double>(fit.n_obs);
    return r;
}

EstimateReport estimate_ols(const PathSet& paths) {
    EstimateReport r = recover_params(ols_fit(paths), paths.grid().dt);
    r.set_data_shape(paths);
    return r;
}

void StateSpaceParams::validate() const {
    for (double v : {alpha, beta, var_eta, var_eps, init_mean, init_var}) {
        if (!std::isfinite(v)) throw InvalidArgument("state_space", "all parameters must be finite");
    }
    if (var_eta < 0.0) throw InvalidArgument("var_eta", "must be >= 0");
    if (var_eps < 0.0) throw InvalidArgument("var_eps", "must be >= 0");
    if (var_eta == 0.0 && var_eps == 0.0) throw InvalidArgument("var_eta", "var_eta and var_eps cannot both be 0");
    if (init_var < 0.0) throw InvalidArgument("init_var", "must be >= 0");
}

namespace {

struct NoSink {
    void operator()(double, double, double, double, double) const noexcept {}
};

// Shared recursion for kalman_filter and kalman_loglik. Returns NaN on breakdown.
template <class Sink>
double run_filter(std::span<const double> ys, const StateSpaceParams& m, Sink&& sink) noexcept {
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    const double beta2 = m.beta * m.beta;
    double x = m.init_mean;
    double P = m.init_var;
    double ll = 0.0;
    double cached_S = -1.0;
    double cached_log_S = 0.0;
    for (const double y : ys) {
        const double x_pred = m.alpha + m.beta * x;
        const double P_pred = beta2 * P + m.var_eta;
        const double r = y - x_pred;
        const double S = P_pred + m.var_eps;
        if (!(S > 0.0) || !std::isfinite(S)) return std::numeric_limits<double>::quiet_NaN();
        const double K = P_pred / S;
        x = x_pred + K * r;
        P = P_pred * (1.0 - K);
        if (S != cached_S) {
            cached_S = S;
            cached_log_S = std::log(S);
        }
        ll += -0.5 * (log_2pi + cached_log_S) - r * r / (2.0 * S);
        sink(x, P, r, S, K);
    }
    return ll;
}

}  // namespace

KalmanRun kalman_filter(std::span<const double> observations, const StateSpaceParams& model) {
    model.validate();
    KalmanRun run;
    const std::size_t n = observations.size();
    run.filtered_mean.reserve(n);
    run.filtered_var.reserve(n);
    run.innovations.reserve(n);
    run.innovation_var.reserve(n);
    run.gain.reserve(n);
    run.loglik = run_filter(observations, model, [&](double x, double P, double r, double S, double K) {
        run.filtered_mean.push_back(x);
        run.filtered_var.push_back(P);
        run.innovations.push_back(r);
        run.innovation_var.push_back(S);
        run.gain.push_back(K);
    });
    if (std::isnan(run.loglik)) {
        throw NumericalBreakdown("innovation variance became non-positive at step " +
                                 std::to_string(run.innovation_var.size()));
    }
    return run;
}

double kalman_loglik(std::span<const double> observations, const StateSpaceParams& model) noexcept {
    return run_filter(observations, model, NoSink{});
}

namespace {

StateSpaceParams state_space_for(const KalmanCandidate& c, double dt, double x_first) {
    const OUParams ou{c.theta, c.mu, c.sigma, x_first, 1.0};
    const auto coef = step_coefficients(ou, dt);
    StateSpaceParams m;
    m.beta = coef.beta;
    m.alpha = c.mu * (1.0 - coef.beta);
    m.var_eta = coef.noise_std * coef.noise_std;
    m.var_eps = c.sigma_eps * c.sigma_eps;
    m.init_mean = x_first;
    m.init_var = ou.stationary_variance();
    return m;
}

}  // namespace

double pooled_kalman_loglik(const PathSet& paths, const KalmanCandidate& candidate) {
    double total = 0.0;
    for (std::size_t p = 0; p < paths.n_paths(); ++p) {
        const auto row = paths.path(p);
        const auto model = state_space_for(candidate, paths.grid().dt, row[0]);
        const double ll = kalman_loglik(row.subspan(1), model);
        if (std::isnan(ll)) return ll;
        total += ll;
    }
    return total;
}

EstimateReport kalman_mle(const PathSet& paths, const ObsNoise& obs_noise, const NelderMeadConfig& opt) {
    const bool free_noise = obs_noise.mode == ObsNoise::Mode::Free;
    if (!free_noise && !(obs_noise.sigma_eps >= 0.0 && std::isfinite(obs_noise.sigma_eps))) {
        throw InvalidArgument("sigma_eps", "must be finite and >= 0");
    }

    const RegressionFit warm_fit = ols_fit(paths);
    const EstimateReport warm = recover_params(warm_fit, paths.grid().dt);
    constexpr double floor_scale = 1e-8;
    const double sigma0 = std::max(warm.sigma_hat, floor_scale);

    auto candidate_of = [&](std::span<const double> v) {
        return KalmanCandidate{std::exp(v[0]), v[1], std::exp(v[2]),
                               free_noise ? std::exp(v[3]) : obs_noise.sigma_eps};
    };
    auto objective = [&](std::span<const double> v) {
        const KalmanCandidate c = candidate_of(v);
        if (!std::isfinite(c.theta) || !std::isfinite(c.sigma) || !(c.theta > 0.0)) {
            return std::numeric_limits<double>::infinity();
        }
        return -pooled_kalman_loglik(paths, c);
    };

    std::vector<double> start{std::log(warm.theta_hat), warm.mu_hat, std::log(sigma0)};
    std::vector<double> step{0.1, 0.05, 0.05};
    if (free_noise) {
        start.push_back(std::log(std::max(0.1 * std::sqrt(warm_fit.resid_var), floor_scale)));
        step.push_back(0.5);
    }
    const double start_loglik = -objective(start);

    const NelderMeadResult nm = nelder_mead(objective, start, step, opt);
    const KalmanCandidate best = candidate_of(nm.x);

    // Map back through the AR(1) coefficients, as for least squares.
    const auto ss = state_space_for(best, paths.grid().dt, 0.0);
    RegressionFit fit{ss.alpha, ss.beta, ss.var_eta, warm_fit.n_obs};
    EstimateReport r = recover_params(fit, paths.grid().dt);
    r.method = Method::Kalman;
    r.set_data_shape(paths);
    r.diagnostics.clear();
    r.diagnostics["loglik"] = -nm.value;
    r.diagnostics["start_loglik"] = start_loglik;
    r.diagnostics["iterations"] = static_cast<double>(nm.iterations);
    r.diagnostics["evaluations"] = static_cast<double>(nm.evaluations);
    r.diagnostics["converged"] = nm.converged ? 1.0 : 0.0;
    r.diagnostics["sigma_eps_hat"] = best.sigma_eps;
    if (!nm.converged) throw DidNotConverge(std::move(r));
    return r;
}

}  // namespace oukit
