#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "oukit/classical.hpp"
#include "oukit/mlp.hpp"
#include "oukit/ou_core.hpp"

namespace oukit::harness {

struct Cell {
    std::size_t paths = 0;
    std::size_t n_steps = 0;
    double horizon = 0.0;

    friend bool operator==(const Cell&, const Cell&) = default;
};

struct ExperimentGrid {
    OUParams truth{3.0, 0.5, 0.5, 0.0, 1.0};  ///< horizon is overridden per cell
    std::vector<Cell> cells;
    std::size_t replicates = 20;
    std::vector<Method> methods{Method::OLS, Method::Kalman, Method::NN};
    ObsNoise kalman_noise = ObsNoise::fixed(0.0);
    NelderMeadConfig kalman_opt{};

    /// Paths {100, 500} x N {1000, 5000} x T {1, 5}, in that nesting order.
    static ExperimentGrid default_grid();

    /// Cross product in paths-major order.
    static std::vector<Cell> cross(const std::vector<std::size_t>& paths, const std::vector<std::size_t>& n_steps,
                                   const std::vector<double>& horizons);

    /// Throws InvalidArgument naming the offending field.
    void validate() const;
    bool uses(Method m) const;

    /// key=value text (theta, mu, sigma, x0, paths, n_steps, horizons, replicates,
    /// methods, kalman_obs_noise). Unknown keys are errors; missing keys keep defaults.
    static ExperimentGrid from_text(std::string_view text);
    std::string to_text() const;
};

inline constexpr std::string_view kStatusOk = "ok";

struct GridRow {
    std::size_t cell = 0;
    std::size_t replicate = 0;
    Method method = Method::OLS;
    std::uint64_t seed = 0;
    double mu_hat = 0.0;  ///< NaN when the estimator produced nothing
    double theta_hat = 0.0;
    double sigma_hat = 0.0;
    std::string status{kStatusOk};  ///< "ok" or the error tag

    bool ok() const noexcept { return status == kStatusOk; }
};

struct Aggregate {
    Method method = Method::OLS;
    std::size_t n_ok = 0;
    double mu_hat = 0.0;  ///< means over successful rows
    double theta_hat = 0.0;
    double sigma_hat = 0.0;
    double mae_mu = 0.0;  ///< mean absolute error against the truth
    double mae_theta = 0.0;
    double mae_sigma = 0.0;
};

struct GridResult {
    OUParams truth;
    std::vector<Cell> cells;
    std::vector<Method> methods;
    std::vector<GridRow> rows;  ///< ordered by (cell, replicate, method)
    std::vector<Aggregate> aggregate;  ///< one per method, in `methods` order

    const Aggregate& aggregate_for(Method m) const;
};

/// NaN-aware field-by-field equality.
bool operator==(const GridRow& a, const GridRow& b);
bool operator==(const Aggregate& a, const Aggregate& b);
bool operator==(const GridResult& a, const GridResult& b);

/// Recomputes `aggregate` from `rows` and `truth`.
void aggregate(GridResult& result);

/// Seed used for the PathSet of (cell, replicate).
std::uint64_t replicate_seed(std::uint64_t seed, std::size_t cell, std::size_t replicate);

struct RunOptions {
    /// Called before each estimator; throwing from it records a failed row.
    std::function<void(std::size_t cell, std::size_t replicate, Method)> before_estimate;
    /// Called after each (cell, replicate) finishes, in completion order.
    std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Simulates a fresh PathSet per (cell, replicate) and runs every method on it.
/// Estimator failures become rows with the error tag; they never abort the grid.
GridResult run_grid(const ExperimentGrid& grid, const mlp::MLPModel* nn_model, std::uint64_t seed,
                    const RunOptions& options = {});

/// Columns: paths,n_steps,horizon,replicate,method,mu_hat,theta_hat,sigma_hat,seed,status.
/// One row per (cell, replicate, method), then one `all,all,all,mean,...` row per method.
std::string table_to_csv(const GridResult& result);
/// Inverse of table_to_csv; `truth` restores the error columns of the aggregate.
GridResult table_from_csv(std::string_view text, const OUParams& truth);
void write_table(const GridResult& result, const std::filesystem::path& path);

/// Grouped bar chart of mean absolute error: one group per parameter, one bar per method.
std::string error_plot_svg(const GridResult& result);
void render_error_plot(const GridResult& result, const std::filesystem::path& path);

/// Fixed-width text rendering of the aggregate block.
std::string format_aggregate(const GridResult& result);

}  // namespace oukit::harness
