#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace oukit {

struct NelderMeadConfig {
    std::size_t max_iterations = 2000;
    /// Converged once every vertex lies within this distance (max-norm) of the best.
    double diameter_tol = 1e-8;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool converged = false;
};

/// Minimizes `f` with the standard simplex moves (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2). The initial simplex is `start` plus
/// `start + step[i] e_i`. Non-finite objective values compare as +inf.
/// The returned value never exceeds f(start).
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> start, std::span<const double> step,
                             const NelderMeadConfig& cfg = {});

}  // namespace oukit
