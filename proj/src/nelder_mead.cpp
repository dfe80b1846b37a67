#include "oukit/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oukit/error.hpp"

namespace oukit {

namespace {

struct Vertex {
    std::vector<double> x;
    double f;
};

double sanitize(double v) { return std::isnan(v) ? std::numeric_limits<double>::infinity() : v; }

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> start, std::span<const double> step,
                             const NelderMeadConfig& cfg) {
    const std::size_t n = start.size();
    if (n == 0) throw InvalidArgument("start", "must be non-empty");
    if (step.size() != n) throw InvalidArgument("step", "must match start dimension");

    NelderMeadResult result;
    auto eval = [&](const std::vector<double>& x) {
        ++result.evaluations;
        return sanitize(f(x));
    };

    std::vector<Vertex> simplex;
    simplex.reserve(n + 1);
    {
        std::vector<double> x0(start.begin(), start.end());
        simplex.push_back({x0, eval(x0)});
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> xi = x0;
            xi[i] += step[i];
            simplex.push_back({xi, eval(xi)});
        }
    }
    // Stable sort keeps the start vertex first among ties, so the best
    // vertex is never worse than the start.
    auto order = [&] {
        std::stable_sort(simplex.begin(), simplex.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    };
    auto diameter = [&] {
        double d = 0.0;
        for (std::size_t v = 1; v <= n; ++v)
            for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(simplex[v].x[i] - simplex[0].x[i]));
        return d;
    };
    auto toward = [&](const std::vector<double>& from, const std::vector<double>& to, double t) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = from[i] + t * (to[i] - from[i]);
        return x;
    };

    order();
    std::vector<double> centroid(n);
    while (true) {
        if (diameter() < cfg.diameter_tol) {
            result.converged = true;
            break;
        }
        if (result.iterations >= cfg.max_iterations) break;
        ++result.iterations;

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[v].x[i];
        for (double& c : centroid) c /= static_cast<double>(n);

        Vertex& worst = simplex[n];
        const double best_f = simplex[0].f;
        const double second_worst_f = simplex[n - 1].f;

        auto xr = toward(centroid, worst.x, -1.0);
        const double fr = eval(xr);
        if (fr < best_f) {
            auto xe = toward(centroid, worst.x, -2.0);
            const double fe = eval(xe);
            if (fe < fr) worst = {std::move(xe), fe};
            else worst = {std::move(xr), fr};
        } else if (fr < second_worst_f) {
            worst = {std::move(xr), fr};
        } else {
            const bool outside = fr < worst.f;
            auto xc = outside ? toward(centroid, xr, 0.5) : toward(centroid, worst.x, 0.5);
            const double fc = eval(xc);
            if (fc < (outside ? fr : worst.f)) {
                worst = {std::move(xc), fc};
            } else {
                for (std::size_t v = 1; v <= n; ++v) {
                    simplex[v].x = toward(simplex[0].x, simplex[v].x, 0.5);
                    simplex[v].f = eval(simplex[v].x);
                }
            }
        }
        order();
    }

    result.x = simplex[0].x;
    result.value = simplex[0].f;
    return result;
}

}  // namespace oukit
