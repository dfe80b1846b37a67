#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace oukit {

/// Parameters of dX = theta (mu - X) dt + sigma dW started at x0 and run to `horizon`.
struct OUParams {
    double theta = 1.0;    ///< mean-reversion rate (1/time)
    double mu = 0.0;       ///< long-term mean
    double sigma = 1.0;    ///< volatility (state units per sqrt-time); 0 is the deterministic limit
    double x0 = 0.0;       ///< initial state
    double horizon = 1.0;  ///< total simulated time T

    /// Throws InvalidArgument naming the first offending field.
    void validate() const;

    double stationary_variance() const noexcept { return sigma * sigma / (2.0 * theta); }
};

struct TimeGrid {
    std::size_t n_steps = 1;  ///< update steps per path
    double dt = 1.0;

    static TimeGrid from_horizon(double horizon, std::size_t n_steps);
    void validate() const;
    double time_at(std::size_t k) const noexcept { return static_cast<double>(k) * dt; }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// P independent trajectories on a shared grid, stored path-major:
/// row p holds X_0 .. X_N of path p.
class PathSet {
public:
    PathSet() = default;
    PathSet(TimeGrid grid, std::size_t n_paths, std::vector<double> values, std::uint64_t seed);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t n_cols() const noexcept { return grid_.n_steps + 1; }
    std::uint64_t seed() const noexcept { return seed_; }

    std::span<const double> path(std::size_t p) const noexcept {
        return {values_.data() + p * n_cols(), n_cols()};
    }
    double at(std::size_t p, std::size_t k) const noexcept { return values_[p * n_cols() + k]; }
    const std::vector<double>& values() const noexcept { return values_; }

    friend bool operator==(const PathSet&, const PathSet&) = default;

private:
    TimeGrid grid_{};
    std::size_t n_paths_ = 0;
    std::vector<double> values_;
    std::uint64_t seed_ = 0;
};

/// E[X_t] = mu + (x0 - mu) exp(-theta t).
double analytic_mean(const OUParams& params, double t);

/// Stationary covariance kernel sigma^2/(2 theta) exp(-theta |t - s|).
double analytic_cov(const OUParams& params, double t, double s);

struct StepCoefficients {
    double beta;       ///< exp(-theta dt)
    double noise_std;  ///< sqrt(sigma^2/(2 theta) (1 - exp(-2 theta dt)))
};

StepCoefficients step_coefficients(const OUParams& params, double dt);

/// Upper bound on P*(N+1) doubles held by a single PathSet.
void set_simulation_budget(std::size_t max_values) noexcept;
std::size_t simulation_budget() noexcept;

/// Exact-transition simulator. Path p draws its noise from Philox stream p
/// keyed by `seed`, so output does not depend on thread partitioning.
PathSet simulate(const OUParams& params, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed);

}  // namespace oukit
