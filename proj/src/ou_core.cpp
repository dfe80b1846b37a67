#include "oukit/ou_core.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "oukit/error.hpp"
#include "oukit/parallel.hpp"
#include "oukit/random.hpp"

namespace oukit {

namespace {

void require_finite(const char* field, double v) {
    if (!std::isfinite(v)) throw InvalidArgument(field, "must be finite");
}

std::atomic<std::size_t> g_budget{std::size_t{1} << 28};

}  // namespace

void OUParams::validate() const {
    require_finite("theta", theta);
    require_finite("mu", mu);
    require_finite("sigma", sigma);
    require_finite("x0", x0);
    require_finite("horizon", horizon);
    if (!(theta > 0.0)) throw InvalidArgument("theta", "must be > 0");
    if (sigma < 0.0) throw InvalidArgument("sigma", "must be >= 0");
    if (!(horizon > 0.0)) throw InvalidArgument("horizon", "must be > 0");
}

TimeGrid TimeGrid::from_horizon(double horizon, std::size_t n_steps) {
    if (n_steps < 1) throw InvalidArgument("n_steps", "must be >= 1");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon", "must be finite and > 0");
    return TimeGrid{n_steps, horizon / static_cast<double>(n_steps)};
}

void TimeGrid::validate() const {
    if (n_steps < 1) throw InvalidArgument("n_steps", "must be >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt", "must be finite and > 0");
}

PathSet::PathSet(TimeGrid grid, std::size_t n_paths, std::vector<double> values, std::uint64_t seed)
    : grid_(grid), n_paths_(n_paths), values_(std::move(values)), seed_(seed) {
    grid_.validate();
    if (n_paths_ < 1) throw InvalidArgument("n_paths", "must be >= 1");
    if (values_.size() != n_paths_ * n_cols()) {
        throw ShapeMismatch("PathSet expects " + std::to_string(n_paths_ * n_cols()) + " values, got " +
                            std::to_string(values_.size()));
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw InvalidArgument("values", "all path values must be finite");
    }
}

double analytic_mean(const OUParams& params, double t) {
    return params.mu + (params.x0 - params.mu) * std::exp(-params.theta * t);
}

double analytic_cov(const OUParams& params, double t, double s) {
    return params.stationary_variance() * std::exp(-params.theta * std::abs(t - s));
}

StepCoefficients step_coefficients(const OUParams& params, double dt) {
    const double beta = std::exp(-params.theta * dt);
    // -expm1(-2 theta dt) = 1 - beta^2 without cancellation for small dt.
    const double noise_var = params.stationary_variance() * -std::expm1(-2.0 * params.theta * dt);
    return {beta, std::sqrt(noise_var)};
}

void set_simulation_budget(std::size_t max_values) noexcept { g_budget.store(max_values); }
std::size_t simulation_budget() noexcept { return g_budget.load(); }

PathSet simulate(const OUParams& params, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed) {
    params.validate();
    grid.validate();
    if (n_paths < 1) throw InvalidArgument("n_paths", "must be >= 1");

    const std::size_t cols = grid.n_steps + 1;
    if (cols > simulation_budget() / n_paths) {
        throw CapacityError("simulation of " + std::to_string(n_paths) + " x " + std::to_string(cols) +
                            " values exceeds budget of " + std::to_string(simulation_budget()));
    }

    const auto [beta, noise_std] = step_coefficients(params, grid.dt);
    const double mu = params.mu;
    std::vector<double> values(n_paths * cols);

    parallel_for(n_paths, [&](std::size_t p) {
        double* row = values.data() + p * cols;
        NormalStream eps(seed, p);
        double x = params.x0;
        row[0] = x;
        for (std::size_t k = 1; k < cols; ++k) {
            x = mu + (x - mu) * beta + noise_std * eps.next();
            row[k] = x;
        }
    });
    return PathSet(grid, n_paths, std::move(values), seed);
}

}  // namespace oukit
