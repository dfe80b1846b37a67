#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oukit/error.hpp"
#include "oukit/nelder_mead.hpp"
#include "oukit/ou_core.hpp"

namespace oukit {

enum class Method { OLS, Kalman, NN };

std::string_view method_name(Method m) noexcept;
/// Accepts "OLS"/"Kalman"/"NN" in any letter case.
Method parse_method(std::string_view name);

/// Pooled AR(1) fit x_{k+1} = alpha + beta x_k + eta.
struct RegressionFit {
    double alpha = 0.0;
    double beta = 0.0;
    double resid_var = 0.0;  ///< sum of squared residuals / (n_obs - 2)
    std::size_t n_obs = 0;
};

struct EstimateReport {
    Method method = Method::OLS;
    double mu_hat = 0.0;
    double theta_hat = 0.0;
    double sigma_hat = 0.0;
    std::map<std::string, double> diagnostics;

    // Shape of the data the estimate came from; zero when not applicable.
    std::size_t paths = 0;
    std::size_t n_steps = 0;
    double horizon = 0.0;
    std::uint64_t seed = 0;

    bool converged() const;
    double loglik() const;  ///< NaN when the method has no likelihood

    void set_data_shape(const PathSet& data);
};

/// Header matching estimate_report_csv_row.
std::string_view estimate_report_csv_header();
/// `method,paths,n_steps,horizon,seed,mu_hat,theta_hat,sigma_hat,loglik,converged`
std::string estimate_report_csv_row(const EstimateReport& report);

class DidNotConverge : public Error {
public:
    explicit DidNotConverge(EstimateReport best)
        : Error("DidNotConverge", "optimizer hit its iteration limit"), best_(std::move(best)) {}
    const EstimateReport& best_so_far() const noexcept { return best_; }

private:
    EstimateReport best_;
};

/// Exact normal-equation solution pooled over every transition of every path.
/// Throws DegenerateDesign if the pooled predictor variance is below 1e-14.
RegressionFit ols_fit(const PathSet& paths);

/// theta = -log(beta)/dt, mu = alpha/(1-beta), sigma = sqrt(resid_var) sqrt(2 theta/(1-beta^2)).
/// Throws BetaOutOfRange unless 0 < beta < 1.
EstimateReport recover_params(const RegressionFit& fit, double dt);

/// ols_fit + recover_params with the data shape filled in.
EstimateReport estimate_ols(const PathSet& paths);

struct StateSpaceParams {
    double alpha = 0.0;
    double beta = 1.0;
    double var_eta = 0.0;  ///< state noise variance
    double var_eps = 0.0;  ///< observation noise variance
    double init_mean = 0.0;
    double init_var = 0.0;

    void validate() const;
};

struct KalmanRun {
    std::vector<double> filtered_mean;
    std::vector<double> filtered_var;
    std::vector<double> innovations;
    std::vector<double> innovation_var;
    std::vector<double> gain;
    double loglik = 0.0;
};

/// Scalar filter for x_k = alpha + beta x_{k-1} + eta_k, y_k = x_k + eps_k.
/// The prior (init_mean, init_var) describes the state before observations[0].
/// Throws NumericalBreakdown if any innovation variance is not positive.
KalmanRun kalman_filter(std::span<const double> observations, const StateSpaceParams& model);

/// Same recursion as kalman_filter returning only the log-likelihood;
/// NaN signals breakdown instead of throwing.
double kalman_loglik(std::span<const double> observations, const StateSpaceParams& model) noexcept;

struct ObsNoise {
    enum class Mode { Fixed, Free };
    Mode mode = Mode::Fixed;
    double sigma_eps = 0.0;  ///< used in Fixed mode

    static ObsNoise fixed(double sigma_eps) { return {Mode::Fixed, sigma_eps}; }
    static ObsNoise free() { return {Mode::Free, 0.0}; }
};

/// Candidate parameters of the state-space likelihood.
struct KalmanCandidate {
    double theta;
    double mu;
    double sigma;
    double sigma_eps;
};

/// Summed innovations log-likelihood over paths. Each path is filtered from
/// x_hat_0 = its first value with P_0 = sigma^2/(2 theta); its remaining
/// values are the observations.
double pooled_kalman_loglik(const PathSet& paths, const KalmanCandidate& candidate);

/// Maximizes pooled_kalman_loglik over (log theta, mu, log sigma[, log sigma_eps])
/// with Nelder-Mead, warm-started at the OLS estimate.
/// diagnostics: loglik, start_loglik, iterations, evaluations, converged[, sigma_eps_hat].
EstimateReport kalman_mle(const PathSet& paths, const ObsNoise& obs_noise = ObsNoise::fixed(0.0),
                          const NelderMeadConfig& opt = {});

}  // namespace oukit
