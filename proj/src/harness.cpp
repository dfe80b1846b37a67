#include "oukit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>

#include "oukit/error.hpp"
#include "oukit/io.hpp"
#include "oukit/parallel.hpp"
#include "oukit/random.hpp"

namespace oukit::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    for (auto f : io::split_csv_line(s)) out.push_back(trim(f));
    return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

}  // namespace

ExperimentGrid ExperimentGrid::default_grid() {
    ExperimentGrid g;
    g.cells = cross({100, 500}, {1000, 5000}, {1.0, 5.0});
    return g;
}

std::vector<Cell> ExperimentGrid::cross(const std::vector<std::size_t>& paths, const std::vector<std::size_t>& n_steps,
                                        const std::vector<double>& horizons) {
    std::vector<Cell> cells;
    for (std::size_t p : paths)
        for (std::size_t n : n_steps)
            for (double t : horizons) cells.push_back({p, n, t});
    return cells;
}

void ExperimentGrid::validate() const {
    OUParams probe = truth;
    probe.horizon = 1.0;
    probe.validate();
    if (cells.empty()) throw InvalidArgument("cells", "grid has no cells");
    for (const Cell& c : cells) {
        if (c.paths < 1) throw InvalidArgument("paths", "must be >= 1");
        if (c.n_steps < 1) throw InvalidArgument("n_steps", "must be >= 1");
        if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) throw InvalidArgument("horizons", "must be finite and > 0");
    }
    if (replicates < 1) throw InvalidArgument("replicates", "must be >= 1");
    if (methods.empty()) throw InvalidArgument("methods", "at least one method is required");
    if (kalman_noise.mode == ObsNoise::Mode::Fixed && !(kalman_noise.sigma_eps >= 0.0)) {
        throw InvalidArgument("kalman_obs_noise", "fixed observation noise must be >= 0");
    }
}

bool ExperimentGrid::uses(Method m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }

ExperimentGrid ExperimentGrid::from_text(std::string_view text) {
    ExperimentGrid g = default_grid();
    std::vector<std::size_t> paths{100, 500}, steps{1000, 5000};
    std::vector<double> horizons{1.0, 5.0};
    const auto lines = lines_of(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const std::string_view line = trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "expected key=value");
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key == "theta") g.truth.theta = io::parse_double(value, line_no);
        else if (key == "mu") g.truth.mu = io::parse_double(value, line_no);
        else if (key == "sigma") g.truth.sigma = io::parse_double(value, line_no);
        else if (key == "x0") g.truth.x0 = io::parse_double(value, line_no);
        else if (key == "replicates") g.replicates = io::parse_size(value, line_no);
        else if (key == "paths" || key == "n_steps") {
            std::vector<std::size_t> v;
            for (auto f : split_list(value)) v.push_back(io::parse_size(f, line_no));
            (key == "paths" ? paths : steps) = std::move(v);
        } else if (key == "horizons") {
            horizons.clear();
            for (auto f : split_list(value)) horizons.push_back(io::parse_double(f, line_no));
        } else if (key == "methods") {
            g.methods.clear();
            try {
                for (auto f : split_list(value)) g.methods.push_back(parse_method(f));
            } catch (const InvalidArgument& e) {
                throw ParseError(line_no, e.what());
            }
        } else if (key == "kalman_obs_noise") {
            if (value == "free") g.kalman_noise = ObsNoise::free();
            else if (value.rfind("fixed:", 0) == 0) g.kalman_noise = ObsNoise::fixed(io::parse_double(value.substr(6), line_no));
            else throw ParseError(line_no, "kalman_obs_noise must be 'free' or 'fixed:<sigma_eps>'");
        } else {
            throw ParseError(line_no, "unknown key '" + std::string(key) + "'");
        }
    }
    g.cells = cross(paths, steps, horizons);
    return g;
}

std::string ExperimentGrid::to_text() const {
    // Only expressible for cross-product grids; emit the distinct values in order.
    std::vector<std::size_t> paths, steps;
    std::vector<double> horizons;
    for (const Cell& c : cells) {
        if (std::find(paths.begin(), paths.end(), c.paths) == paths.end()) paths.push_back(c.paths);
        if (std::find(steps.begin(), steps.end(), c.n_steps) == steps.end()) steps.push_back(c.n_steps);
        if (std::find(horizons.begin(), horizons.end(), c.horizon) == horizons.end()) horizons.push_back(c.horizon);
    }
    auto join = [](const auto& v, auto fmt) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
        return s;
    };
    auto size_fmt = [](std::size_t x) { return std::to_string(x); };
    auto dbl_fmt = [](double x) { return io::format_double(x); };
    auto method_fmt = [](Method m) { return std::string(method_name(m)); };
    std::string out;
    out += "theta=" + io::format_double(truth.theta) + '\n';
    out += "mu=" + io::format_double(truth.mu) + '\n';
    out += "sigma=" + io::format_double(truth.sigma) + '\n';
    out += "x0=" + io::format_double(truth.x0) + '\n';
    out += "paths=" + join(paths, size_fmt) + '\n';
    out += "n_steps=" + join(steps, size_fmt) + '\n';
    out += "horizons=" + join(horizons, dbl_fmt) + '\n';
    out += "replicates=" + std::to_string(replicates) + '\n';
    out += "methods=" + join(methods, method_fmt) + '\n';
    out += "kalman_obs_noise=" +
           (kalman_noise.mode == ObsNoise::Mode::Free ? std::string("free")
                                                      : "fixed:" + io::format_double(kalman_noise.sigma_eps)) +
           '\n';
    return out;
}

const Aggregate& GridResult::aggregate_for(Method m) const {
    for (const auto& a : aggregate) {
        if (a.method == m) return a;
    }
    throw InvalidArgument("method", "no aggregate for " + std::string(method_name(m)));
}

bool operator==(const GridRow& a, const GridRow& b) {
    return a.cell == b.cell && a.replicate == b.replicate && a.method == b.method && a.seed == b.seed &&
           same(a.mu_hat, b.mu_hat) && same(a.theta_hat, b.theta_hat) && same(a.sigma_hat, b.sigma_hat) &&
           a.status == b.status;
}

bool operator==(const Aggregate& a, const Aggregate& b) {
    return a.method == b.method && a.n_ok == b.n_ok && same(a.mu_hat, b.mu_hat) && same(a.theta_hat, b.theta_hat) &&
           same(a.sigma_hat, b.sigma_hat) && same(a.mae_mu, b.mae_mu) && same(a.mae_theta, b.mae_theta) &&
           same(a.mae_sigma, b.mae_sigma);
}

bool operator==(const GridResult& a, const GridResult& b) {
    return same(a.truth.theta, b.truth.theta) && same(a.truth.mu, b.truth.mu) && same(a.truth.sigma, b.truth.sigma) &&
           a.cells == b.cells && a.methods == b.methods && a.rows == b.rows && a.aggregate == b.aggregate;
}

void aggregate(GridResult& result) {
    result.aggregate.clear();
    for (Method m : result.methods) {
        Aggregate agg;
        agg.method = m;
        for (const GridRow& r : result.rows) {
            if (r.method != m || !r.ok()) continue;
            ++agg.n_ok;
            agg.mu_hat += r.mu_hat;
            agg.theta_hat += r.theta_hat;
            agg.sigma_hat += r.sigma_hat;
            agg.mae_mu += std::abs(r.mu_hat - result.truth.mu);
            agg.mae_theta += std::abs(r.theta_hat - result.truth.theta);
            agg.mae_sigma += std::abs(r.sigma_hat - result.truth.sigma);
        }
        const double n = agg.n_ok ? static_cast<double>(agg.n_ok) : kNaN;
        for (double* v : {&agg.mu_hat, &agg.theta_hat, &agg.sigma_hat, &agg.mae_mu, &agg.mae_theta, &agg.mae_sigma}) {
            *v /= n;
        }
        result.aggregate.push_back(agg);
    }
}

std::uint64_t replicate_seed(std::uint64_t seed, std::size_t cell, std::size_t replicate) {
    return derive_seed(seed, cell, replicate);
}

GridResult run_grid(const ExperimentGrid& grid, const mlp::MLPModel* nn_model, std::uint64_t seed,
                    const RunOptions& options) {
    grid.validate();
    if (grid.uses(Method::NN) && nn_model == nullptr) {
        throw InvalidArgument("model", "the NN method needs a trained model");
    }

    GridResult result;
    result.truth = grid.truth;
    result.cells = grid.cells;
    result.methods = grid.methods;

    const std::size_t n_methods = grid.methods.size();
    const std::size_t tasks = grid.cells.size() * grid.replicates;
    result.rows.resize(tasks * n_methods);
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;

    parallel_for(tasks, [&](std::size_t task) {
        const std::size_t cell_index = task / grid.replicates;
        const std::size_t rep = task % grid.replicates;
        const Cell& cell = grid.cells[cell_index];
        const std::uint64_t path_seed = replicate_seed(seed, cell_index, rep);

        std::optional<PathSet> paths;
        std::string sim_error;
        try {
            OUParams p = grid.truth;
            p.horizon = cell.horizon;
            paths = simulate(p, TimeGrid::from_horizon(cell.horizon, cell.n_steps), cell.paths, path_seed);
        } catch (const Error& e) {
            sim_error = e.tag();
        }

        for (std::size_t mi = 0; mi < n_methods; ++mi) {
            const Method method = grid.methods[mi];
            GridRow& row = result.rows[task * n_methods + mi];
            row = GridRow{cell_index, rep, method, path_seed, kNaN, kNaN, kNaN, std::string(kStatusOk)};
            if (!paths) {
                row.status = sim_error;
                continue;
            }
            auto take = [&row](const EstimateReport& r) {
                row.mu_hat = r.mu_hat;
                row.theta_hat = r.theta_hat;
                row.sigma_hat = r.sigma_hat;
            };
            try {
                if (options.before_estimate) options.before_estimate(cell_index, rep, method);
                switch (method) {
                    case Method::OLS: take(estimate_ols(*paths)); break;
                    case Method::Kalman: take(kalman_mle(*paths, grid.kalman_noise, grid.kalman_opt)); break;
                    case Method::NN: take(mlp::predict_params(*nn_model, *paths)); break;
                }
            } catch (const DidNotConverge& e) {
                take(e.best_so_far());
                row.status = e.tag();
            } catch (const Error& e) {
                row.status = e.tag();
            } catch (const std::exception&) {
                row.status = "Exception";
            }
        }
        const std::size_t finished = ++done;
        if (options.progress) {
            std::lock_guard lock(progress_mutex);
            options.progress(finished, tasks);
        }
    });

    aggregate(result);
    return result;
}

namespace {
constexpr std::string_view kTableHeader = "paths,n_steps,horizon,replicate,method,mu_hat,theta_hat,sigma_hat,seed,status";
}

std::string table_to_csv(const GridResult& result) {
    std::string out{kTableHeader};
    out += '\n';
    for (const GridRow& r : result.rows) {
        const Cell& c = result.cells.at(r.cell);
        out += std::to_string(c.paths) + ',' + std::to_string(c.n_steps) + ',' + io::format_double(c.horizon) + ',' +
               std::to_string(r.replicate) + ',' + std::string(method_name(r.method)) + ',' +
               io::format_double(r.mu_hat) + ',' + io::format_double(r.theta_hat) + ',' +
               io::format_double(r.sigma_hat) + ',' + std::to_string(r.seed) + ',' + r.status + '\n';
    }
    for (const Aggregate& a : result.aggregate) {
        out += "all,all,all,mean," + std::string(method_name(a.method)) + ',' + io::format_double(a.mu_hat) + ',' +
               io::format_double(a.theta_hat) + ',' + io::format_double(a.sigma_hat) + ",," +
               std::to_string(a.n_ok) + " ok\n";
    }
    return out;
}

GridResult table_from_csv(std::string_view text, const OUParams& truth) {
    auto lines = lines_of(text);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty() || trim(lines[0]) != kTableHeader) throw ParseError(1, "unexpected table header");

    GridResult result;
    result.truth = truth;
    std::vector<std::pair<Method, std::array<double, 3>>> file_means;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const auto f = io::split_csv_line(lines[i]);
        if (f.size() != 10) throw ParseError(line_no, "expected 10 fields");
        Method method;
        try {
            method = parse_method(f[4]);
        } catch (const InvalidArgument& e) {
            throw ParseError(line_no, e.what());
        }
        if (f[0] == "all") {
            file_means.push_back({method, {io::parse_double(f[5], line_no), io::parse_double(f[6], line_no),
                                           io::parse_double(f[7], line_no)}});
            continue;
        }
        if (!file_means.empty()) throw ParseError(line_no, "data row after the aggregate block");
        const Cell cell{io::parse_size(f[0], line_no), io::parse_size(f[1], line_no), io::parse_double(f[2], line_no)};
        auto it = std::find(result.cells.begin(), result.cells.end(), cell);
        if (it == result.cells.end()) it = result.cells.insert(result.cells.end(), cell);
        if (std::find(result.methods.begin(), result.methods.end(), method) == result.methods.end()) {
            result.methods.push_back(method);
        }
        GridRow row;
        row.cell = static_cast<std::size_t>(it - result.cells.begin());
        row.replicate = io::parse_size(f[3], line_no);
        row.method = method;
        row.mu_hat = io::parse_double(f[5], line_no);
        row.theta_hat = io::parse_double(f[6], line_no);
        row.sigma_hat = io::parse_double(f[7], line_no);
        row.seed = io::parse_size(f[8], line_no);
        row.status = std::string(f[9]);
        result.rows.push_back(std::move(row));
    }
    aggregate(result);
    // Means come from the file verbatim; the error columns are recomputed.
    for (const auto& [method, means] : file_means) {
        auto it = std::find_if(result.aggregate.begin(), result.aggregate.end(),
                               [m = method](const Aggregate& a) { return a.method == m; });
        if (it == result.aggregate.end()) {
            Aggregate a;
            a.method = method;
            result.methods.push_back(method);
            it = result.aggregate.insert(result.aggregate.end(), a);
        }
        it->mu_hat = means[0];
        it->theta_hat = means[1];
        it->sigma_hat = means[2];
    }
    return result;
}

void write_table(const GridResult& result, const std::filesystem::path& path) {
    if (result.methods.empty() || result.rows.empty()) throw EmptyResult("grid result has no methods or rows");
    io::write_file_atomic(path, table_to_csv(result));
}

namespace {

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

// Smallest of {1, 2, 5} x 10^k that is >= v.
double nice_ceiling(double v) {
    if (!(v > 0.0) || !std::isfinite(v)) return 1.0;
    const double base = std::pow(10.0, std::floor(std::log10(v)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (m * base >= v * (1.0 - 1e-12)) return m * base;
    }
    return 10.0 * base;
}

std::string_view method_color(Method m) {
    switch (m) {
        case Method::OLS: return "#1f77b4";
        case Method::Kalman: return "#ff7f0e";
        case Method::NN: return "#2ca02c";
    }
    return "#777777";
}

}  // namespace

std::string error_plot_svg(const GridResult& result) {
    if (result.methods.empty()) throw EmptyResult("grid result has no methods");
    constexpr double width = 640, height = 400;
    constexpr double left = 70, right = 150, top = 40, bottom = 60;
    constexpr double plot_w = width - left - right, plot_h = height - top - bottom;
    const char* params[] = {"mu", "theta", "sigma"};

    double max_err = 0.0;
    for (const Aggregate& a : result.aggregate) {
        for (double e : {a.mae_mu, a.mae_theta, a.mae_sigma}) {
            if (std::isfinite(e)) max_err = std::max(max_err, e);
        }
    }
    const double y_max = nice_ceiling(max_err);
    auto y_of = [&](double v) { return top + plot_h * (1.0 - v / y_max); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt3(width) << "\" height=\"" << fmt3(height)
        << "\" viewBox=\"0 0 " << fmt3(width) << ' ' << fmt3(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << fmt3(width) << "\" height=\"" << fmt3(height) << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << fmt3(left + plot_w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
        << "Average absolute error by method</text>\n";

    // Gridlines and y ticks.
    for (int i = 0; i <= 5; ++i) {
        const double v = y_max * i / 5.0;
        const double y = y_of(v);
        svg << "<line x1=\"" << fmt3(left) << "\" y1=\"" << fmt3(y) << "\" x2=\"" << fmt3(left + plot_w) << "\" y2=\""
            << fmt3(y) << "\" stroke=\"#dddddd\"/>\n";
        svg << "<text x=\"" << fmt3(left - 6) << "\" y=\"" << fmt3(y + 4) << "\" text-anchor=\"end\">"
            << io::format_double(v) << "</text>\n";
    }
    svg << "<line class=\"axis\" x1=\"" << fmt3(left) << "\" y1=\"" << fmt3(top) << "\" x2=\"" << fmt3(left) << "\" y2=\""
        << fmt3(top + plot_h) << "\" stroke=\"black\"/>\n";
    svg << "<line class=\"axis\" x1=\"" << fmt3(left) << "\" y1=\"" << fmt3(top + plot_h) << "\" x2=\""
        << fmt3(left + plot_w) << "\" y2=\"" << fmt3(top + plot_h) << "\" stroke=\"black\"/>\n";

    const double group_w = plot_w / 3.0;
    const double bar_w = group_w * 0.8 / static_cast<double>(result.methods.size());
    for (int g = 0; g < 3; ++g) {
        const double group_x = left + group_w * g + group_w * 0.1;
        for (std::size_t mi = 0; mi < result.methods.size(); ++mi) {
            const Method m = result.methods[mi];
            double err = 0.0;
            for (const Aggregate& a : result.aggregate) {
                if (a.method == m) err = g == 0 ? a.mae_mu : g == 1 ? a.mae_theta : a.mae_sigma;
            }
            if (!std::isfinite(err)) err = 0.0;
            const double h = plot_h * err / y_max;
            svg << "<rect class=\"bar\" data-method=\"" << method_name(m) << "\" data-param=\"" << params[g]
                << "\" x=\"" << fmt3(group_x + bar_w * static_cast<double>(mi)) << "\" y=\"" << fmt3(top + plot_h - h)
                << "\" width=\"" << fmt3(bar_w) << "\" height=\"" << fmt3(h) << "\" fill=\"" << method_color(m)
                << "\"/>\n";
        }
        svg << "<text x=\"" << fmt3(left + group_w * (g + 0.5)) << "\" y=\"" << fmt3(top + plot_h + 18)
            << "\" text-anchor=\"middle\">" << params[g] << "</text>\n";
    }
    svg << "<text x=\"" << fmt3(left + plot_w / 2) << "\" y=\"" << fmt3(height - 12)
        << "\" text-anchor=\"middle\">Parameter</text>\n";
    svg << "<text x=\"18\" y=\"" << fmt3(top + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
        << fmt3(top + plot_h / 2) << ")\">Mean absolute error</text>\n";

    const double legend_x = left + plot_w + 20;
    for (std::size_t mi = 0; mi < result.methods.size(); ++mi) {
        const double y = top + 10 + 22.0 * static_cast<double>(mi);
        svg << "<rect class=\"legend\" x=\"" << fmt3(legend_x) << "\" y=\"" << fmt3(y) << "\" width=\"14\" height=\"14\" fill=\""
            << method_color(result.methods[mi]) << "\"/>\n";
        svg << "<text x=\"" << fmt3(legend_x + 20) << "\" y=\"" << fmt3(y + 11) << "\">" << method_name(result.methods[mi])
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void render_error_plot(const GridResult& result, const std::filesystem::path& path) {
    io::write_file_atomic(path, error_plot_svg(result));
}

std::string format_aggregate(const GridResult& result) {
    std::string out = "method  n_ok  mu_hat  theta_hat  sigma_hat  mae_mu  mae_theta  mae_sigma\n";
    for (const Aggregate& a : result.aggregate) {
        out += std::string(method_name(a.method)) + "  " + std::to_string(a.n_ok);
        for (double v : {a.mu_hat, a.theta_hat, a.sigma_hat, a.mae_mu, a.mae_theta, a.mae_sigma}) {
            out += "  " + io::format_double(v);
        }
        out += '\n';
    }
    return out;
}

}  // namespace oukit::harness
