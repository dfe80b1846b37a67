#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "oukit/classical.hpp"
#include "oukit/error.hpp"
#include "oukit/harness.hpp"
#include "oukit/io.hpp"
#include "oukit/mlp.hpp"
#include "oukit/ou_core.hpp"
#include "oukit/parallel.hpp"

namespace py = pybind11;
using namespace oukit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(std::span<const double> v) {
    // Explicit shape vector: the (count, ptr) overload yields zero strides with older pybind11 under C++20.
    return Array(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())}, v.data());
}

Array pathset_array(const PathSet& ps) {
    return Array(std::vector<py::ssize_t>{static_cast<py::ssize_t>(ps.n_paths()), static_cast<py::ssize_t>(ps.n_cols())},
                 ps.values().data());
}

PathSet pathset_from_array(const Array& values, double dt, std::uint64_t seed) {
    if (values.ndim() != 2) throw ShapeMismatch("expected a 2-D array (paths x points)");
    const auto rows = static_cast<std::size_t>(values.shape(0));
    const auto cols = static_cast<std::size_t>(values.shape(1));
    if (cols < 2) throw TooShort("each path needs at least 2 points");
    std::vector<double> v(values.data(), values.data() + values.size());
    return PathSet(TimeGrid{cols - 1, dt}, rows, std::move(v), seed);
}

ObsNoise obs_noise_from(const std::string& text) {
    if (text == "free") return ObsNoise::free();
    if (text.rfind("fixed:", 0) == 0) return ObsNoise::fixed(io::parse_double(std::string_view(text).substr(6), 0));
    throw InvalidArgument("obs_noise", "expected 'fixed:<sigma_eps>' or 'free'");
}

}  // namespace

PYBIND11_MODULE(_oukit, m) {
    m.doc() = "Ornstein-Uhlenbeck simulation and parameter estimation";

    static py::exception<Error> base(m, "OukitError", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<CapacityError>(m, "CapacityError", base.ptr());
    py::register_exception<DegenerateDesign>(m, "DegenerateDesign", base.ptr());
    py::register_exception<BetaOutOfRange>(m, "BetaOutOfRange", base.ptr());
    py::register_exception<NumericalBreakdown>(m, "NumericalBreakdown", base.ptr());
    py::register_exception<ShapeMismatch>(m, "ShapeMismatch", base.ptr());
    py::register_exception<TooShort>(m, "TooShort", base.ptr());
    py::register_exception<InvalidConfig>(m, "InvalidConfig", base.ptr());
    py::register_exception<EmptyResult>(m, "EmptyResult", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<DidNotConverge>(m, "DidNotConverge", base.ptr());

    m.def("set_max_threads", &set_max_threads, py::arg("n"));

    py::class_<OUParams>(m, "OUParams")
        .def(py::init([](double theta, double mu, double sigma, double x0, double horizon) {
                 return OUParams{theta, mu, sigma, x0, horizon};
             }),
             py::arg("theta") = 1.0, py::arg("mu") = 0.0, py::arg("sigma") = 1.0, py::arg("x0") = 0.0,
             py::arg("horizon") = 1.0)
        .def_readwrite("theta", &OUParams::theta)
        .def_readwrite("mu", &OUParams::mu)
        .def_readwrite("sigma", &OUParams::sigma)
        .def_readwrite("x0", &OUParams::x0)
        .def_readwrite("horizon", &OUParams::horizon)
        .def("validate", &OUParams::validate)
        .def("__repr__", [](const OUParams& p) {
            return "OUParams(theta=" + io::format_double(p.theta) + ", mu=" + io::format_double(p.mu) +
                   ", sigma=" + io::format_double(p.sigma) + ", x0=" + io::format_double(p.x0) +
                   ", horizon=" + io::format_double(p.horizon) + ")";
        });

    py::class_<PathSet>(m, "PathSet")
        .def(py::init(&pathset_from_array), py::arg("values"), py::arg("dt"), py::arg("seed") = 0)
        .def_property_readonly("values", &pathset_array)
        .def_property_readonly("dt", [](const PathSet& p) { return p.grid().dt; })
        .def_property_readonly("n_steps", [](const PathSet& p) { return p.grid().n_steps; })
        .def_property_readonly("n_paths", &PathSet::n_paths)
        .def_property_readonly("seed", &PathSet::seed)
        .def("to_csv", &io::pathset_to_csv)
        .def_static("from_csv", [](const std::string& text) { return io::pathset_from_csv(text); })
        .def("__eq__", [](const PathSet& a, const PathSet& b) { return a == b; });

    m.def("analytic_mean", &analytic_mean, py::arg("params"), py::arg("t"));
    m.def("analytic_cov", &analytic_cov, py::arg("params"), py::arg("t"), py::arg("s"));
    m.def(
        "simulate",
        [](const OUParams& p, std::size_t n_steps, std::size_t n_paths, std::uint64_t seed) {
            py::gil_scoped_release release;
            return simulate(p, TimeGrid::from_horizon(p.horizon, n_steps), n_paths, seed);
        },
        py::arg("params"), py::arg("n_steps"), py::arg("n_paths"), py::arg("seed"));

    py::enum_<Method>(m, "Method").value("OLS", Method::OLS).value("Kalman", Method::Kalman).value("NN", Method::NN);

    py::class_<EstimateReport>(m, "EstimateReport")
        .def_property_readonly("method", [](const EstimateReport& r) { return std::string(method_name(r.method)); })
        .def_readonly("mu_hat", &EstimateReport::mu_hat)
        .def_readonly("theta_hat", &EstimateReport::theta_hat)
        .def_readonly("sigma_hat", &EstimateReport::sigma_hat)
        .def_readonly("diagnostics", &EstimateReport::diagnostics)
        .def_property_readonly("converged", &EstimateReport::converged)
        .def_property_readonly("loglik", &EstimateReport::loglik)
        .def("csv_row", &estimate_report_csv_row);

    m.def("estimate_ols", &estimate_ols, py::arg("paths"), py::call_guard<py::gil_scoped_release>());
    m.def(
        "kalman_mle",
        [](const PathSet& paths, const std::string& obs_noise) {
            const ObsNoise noise = obs_noise_from(obs_noise);
            py::gil_scoped_release release;
            return kalman_mle(paths, noise);
        },
        py::arg("paths"), py::arg("obs_noise") = "fixed:0");
    m.def(
        "kalman_filter",
        [](const Array& y, double alpha, double beta, double var_eta, double var_eps, double init_mean,
           double init_var) {
            const KalmanRun run = kalman_filter({y.data(), static_cast<std::size_t>(y.size())},
                                                {alpha, beta, var_eta, var_eps, init_mean, init_var});
            py::dict out;
            out["filtered_mean"] = to_array(run.filtered_mean);
            out["filtered_var"] = to_array(run.filtered_var);
            out["innovations"] = to_array(run.innovations);
            out["innovation_var"] = to_array(run.innovation_var);
            out["gain"] = to_array(run.gain);
            out["loglik"] = run.loglik;
            return out;
        },
        py::arg("observations"), py::arg("alpha"), py::arg("beta"), py::arg("var_eta"), py::arg("var_eps"),
        py::arg("init_mean"), py::arg("init_var"));

    py::class_<mlp::MLPModel>(m, "MLPModel")
        .def_readonly("layer_dims", &mlp::MLPModel::layer_dims)
        .def_readonly("feature_len", &mlp::MLPModel::feature_len)
        .def_readonly("config_hash", &mlp::MLPModel::config_hash)
        .def("save", [](const mlp::MLPModel& model, const std::filesystem::path& p) { mlp::save_checkpoint(model, p); })
        .def_static("load", &mlp::load_checkpoint);

    py::class_<mlp::TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_property(
            "theta_range", [](const mlp::TrainConfig& c) { return std::pair{c.theta.lo, c.theta.hi}; },
            [](mlp::TrainConfig& c, std::pair<double, double> v) { c.theta = {v.first, v.second}; })
        .def_property(
            "mu_range", [](const mlp::TrainConfig& c) { return std::pair{c.mu.lo, c.mu.hi}; },
            [](mlp::TrainConfig& c, std::pair<double, double> v) { c.mu = {v.first, v.second}; })
        .def_property(
            "sigma_range", [](const mlp::TrainConfig& c) { return std::pair{c.sigma.lo, c.sigma.hi}; },
            [](mlp::TrainConfig& c, std::pair<double, double> v) { c.sigma = {v.first, v.second}; })
        .def_property(
            "x0_range", [](const mlp::TrainConfig& c) { return std::pair{c.x0.lo, c.x0.hi}; },
            [](mlp::TrainConfig& c, std::pair<double, double> v) { c.x0 = {v.first, v.second}; })
        .def_property(
            "horizon_range", [](const mlp::TrainConfig& c) { return std::pair{c.horizon.lo, c.horizon.hi}; },
            [](mlp::TrainConfig& c, std::pair<double, double> v) { c.horizon = {v.first, v.second}; })
        .def_readwrite("step_choices", &mlp::TrainConfig::step_choices)
        .def_readwrite("n_train", &mlp::TrainConfig::n_train)
        .def_readwrite("n_val", &mlp::TrainConfig::n_val)
        .def_readwrite("feature_len", &mlp::TrainConfig::feature_len)
        .def_readwrite("hidden", &mlp::TrainConfig::hidden)
        .def_readwrite("batch_size", &mlp::TrainConfig::batch_size)
        .def_readwrite("epochs", &mlp::TrainConfig::epochs)
        .def_readwrite("seed", &mlp::TrainConfig::seed)
        .def_property(
            "learning_rate", [](const mlp::TrainConfig& c) { return c.adam.lr; },
            [](mlp::TrainConfig& c, double v) { c.adam.lr = v; })
        .def("validate", &mlp::TrainConfig::validate)
        .def("hash", &mlp::TrainConfig::hash);

    py::class_<mlp::TrainResult>(m, "TrainResult")
        .def_readonly("model", &mlp::TrainResult::model)
        .def_readonly("best_epoch", &mlp::TrainResult::best_epoch)
        .def_readonly("best_val_loss", &mlp::TrainResult::best_val_loss)
        .def_property_readonly("history",
                               [](const mlp::TrainResult& r) {
                                   py::list out;
                                   for (const auto& h : r.history) out.append(py::make_tuple(h.epoch, h.train_loss, h.val_loss));
                                   return out;
                               })
        .def("history_csv", [](const mlp::TrainResult& r) { return mlp::history_to_csv(r.history); });

    m.def(
        "featurize",
        [](const Array& path, double dt, std::size_t feature_len) {
            const auto n = static_cast<std::size_t>(path.size());
            if (n < 1) throw TooShort("empty path");
            const auto fv = mlp::featurize({path.data(), n}, TimeGrid{n - 1, dt}, feature_len);
            return to_array(fv.values);
        },
        py::arg("path"), py::arg("dt"), py::arg("feature_len"));
    m.def("train", &mlp::train, py::arg("config"), py::call_guard<py::gil_scoped_release>());
    m.def("predict_params", &mlp::predict_params, py::arg("model"), py::arg("paths"),
          py::call_guard<py::gil_scoped_release>());

    py::class_<harness::Cell>(m, "Cell")
        .def_readonly("paths", &harness::Cell::paths)
        .def_readonly("n_steps", &harness::Cell::n_steps)
        .def_readonly("horizon", &harness::Cell::horizon);

    py::class_<harness::ExperimentGrid>(m, "ExperimentGrid")
        .def_static("default", &harness::ExperimentGrid::default_grid)
        .def_static("from_text", &harness::ExperimentGrid::from_text)
        .def("to_text", &harness::ExperimentGrid::to_text)
        .def_readwrite("truth", &harness::ExperimentGrid::truth)
        .def_readwrite("replicates", &harness::ExperimentGrid::replicates)
        .def_readonly("cells", &harness::ExperimentGrid::cells)
        .def(
            "set_cells",
            [](harness::ExperimentGrid& g, const std::vector<std::size_t>& paths,
               const std::vector<std::size_t>& n_steps, const std::vector<double>& horizons) {
                g.cells = harness::ExperimentGrid::cross(paths, n_steps, horizons);
            },
            py::arg("paths"), py::arg("n_steps"), py::arg("horizons"))
        .def_property(
            "methods",
            [](const harness::ExperimentGrid& g) {
                std::vector<std::string> out;
                for (Method mt : g.methods) out.emplace_back(method_name(mt));
                return out;
            },
            [](harness::ExperimentGrid& g, const std::vector<std::string>& names) {
                g.methods.clear();
                for (const auto& n : names) g.methods.push_back(parse_method(n));
            });

    py::class_<harness::GridRow>(m, "GridRow")
        .def_readonly("cell", &harness::GridRow::cell)
        .def_readonly("replicate", &harness::GridRow::replicate)
        .def_property_readonly("method", [](const harness::GridRow& r) { return std::string(method_name(r.method)); })
        .def_readonly("seed", &harness::GridRow::seed)
        .def_readonly("mu_hat", &harness::GridRow::mu_hat)
        .def_readonly("theta_hat", &harness::GridRow::theta_hat)
        .def_readonly("sigma_hat", &harness::GridRow::sigma_hat)
        .def_readonly("status", &harness::GridRow::status);

    py::class_<harness::Aggregate>(m, "Aggregate")
        .def_property_readonly("method", [](const harness::Aggregate& a) { return std::string(method_name(a.method)); })
        .def_readonly("n_ok", &harness::Aggregate::n_ok)
        .def_readonly("mu_hat", &harness::Aggregate::mu_hat)
        .def_readonly("theta_hat", &harness::Aggregate::theta_hat)
        .def_readonly("sigma_hat", &harness::Aggregate::sigma_hat)
        .def_readonly("mae_mu", &harness::Aggregate::mae_mu)
        .def_readonly("mae_theta", &harness::Aggregate::mae_theta)
        .def_readonly("mae_sigma", &harness::Aggregate::mae_sigma);

    py::class_<harness::GridResult>(m, "GridResult")
        .def_readonly("rows", &harness::GridResult::rows)
        .def_readonly("aggregate", &harness::GridResult::aggregate)
        .def("to_csv", &harness::table_to_csv)
        .def("error_plot_svg", &harness::error_plot_svg)
        .def("format_aggregate", &harness::format_aggregate)
        .def("__eq__", [](const harness::GridResult& a, const harness::GridResult& b) { return a == b; });

    m.def(
        "run_grid",
        [](const harness::ExperimentGrid& grid, const mlp::MLPModel* model, std::uint64_t seed) {
            py::gil_scoped_release release;
            return harness::run_grid(grid, model, seed);
        },
        py::arg("grid"), py::arg("model") = nullptr, py::arg("seed") = 0);
}
