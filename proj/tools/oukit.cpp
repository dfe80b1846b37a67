// oukit command-line driver: simulate, estimate, train, bench.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "oukit/classical.hpp"
#include "oukit/error.hpp"
#include "oukit/harness.hpp"
#include "oukit/io.hpp"
#include "oukit/mlp.hpp"
#include "oukit/ou_core.hpp"
#include "oukit/parallel.hpp"

namespace fs = std::filesystem;
using namespace oukit;
using io::format_double;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised for flag problems found after CLI11 parsing; the message names the flag.
struct FlagError : std::runtime_error {
    FlagError(const std::string& flag, const std::string& what) : std::runtime_error("--" + flag + ": " + what) {}
};

// Library field names that differ from the flag spelling.
FlagError flag_error(const InvalidArgument& e) {
    std::string flag = e.field();
    if (flag == "n_steps") flag = "steps";
    if (flag == "kalman_obs_noise") flag = "obs-noise";
    std::string what = e.what();
    const std::string prefix = e.field() + ": ";
    if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
    return FlagError(flag, what);
}

struct Globals {
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    std::string output_dir;

    std::uint64_t resolve_seed() {
        if (!seed) {
            std::random_device rd;
            seed = (std::uint64_t{rd()} << 32) ^ rd();
        }
        std::cout << "seed=" << *seed << '\n';
        return *seed;
    }

    fs::path out(const std::string& name) const {
        const fs::path p(name);
        if (p.is_absolute() || output_dir.empty()) return p;
        return fs::path(output_dir) / p;
    }
};

ObsNoise parse_obs_noise(const std::string& text) {
    if (text == "free") return ObsNoise::free();
    if (text.rfind("fixed:", 0) == 0) {
        double s = 0.0;
        try {
            s = io::parse_double(std::string_view(text).substr(6), 0);
        } catch (const ParseError&) {
            throw FlagError("obs-noise", "expected fixed:<sigma_eps> or free");
        }
        if (!(s >= 0.0)) throw FlagError("obs-noise", "sigma_eps must be >= 0");
        return ObsNoise::fixed(s);
    }
    throw FlagError("obs-noise", "expected fixed:<sigma_eps> or free");
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
    std::vector<Method> out;
    for (const auto& n : names) {
        try {
            out.push_back(parse_method(n));
        } catch (const InvalidArgument&) {
            throw FlagError("methods", "unknown method '" + n + "'");
        }
    }
    return out;
}

mlp::Interval parse_interval(const std::string& flag, const std::vector<double>& v) {
    if (v.size() != 2 || !(v[0] <= v[1])) throw FlagError(flag, "expected lo,hi with lo <= hi");
    return {v[0], v[1]};
}

void print_report(const EstimateReport& r) {
    std::cout << "method=" << method_name(r.method) << '\n'
              << "mu_hat=" << format_double(r.mu_hat) << '\n'
              << "theta_hat=" << format_double(r.theta_hat) << '\n'
              << "sigma_hat=" << format_double(r.sigma_hat) << '\n';
    for (const auto& [k, v] : r.diagnostics) std::cout << k << '=' << format_double(v) << '\n';
}

// Appends one row, creating the file with a header if needed; the whole file is rewritten atomically.
void append_report(const fs::path& path, const EstimateReport& r) {
    std::string contents;
    if (fs::exists(path)) {
        contents = io::read_file(path);
        if (!contents.empty() && contents.back() != '\n') contents += '\n';
    }
    if (contents.empty()) contents = std::string(estimate_report_csv_header()) + '\n';
    contents += estimate_report_csv_row(r) + '\n';
    io::write_file_atomic(path, contents);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ornstein-Uhlenbeck simulation and parameter estimation"};
    app.require_subcommand(1);
    Globals g;
    if (const char* env = std::getenv("OUKIT_OUTPUT_DIR")) g.output_dir = env;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "RNG seed (drawn from entropy and printed when omitted)");
    app.add_option("--threads", g.threads, "worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--output-dir", g.output_dir, "directory for relative output paths (default $OUKIT_OUTPUT_DIR)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate OU paths to CSV")->fallthrough();
    OUParams sp{3.0, 0.5, 0.5, 0.0, 1.0};
    std::size_t sim_steps = 1000, sim_paths = 100;
    std::string sim_out = "paths.csv";
    sim->add_option("--theta", sp.theta, "mean-reversion rate")->capture_default_str();
    sim->add_option("--mu", sp.mu, "long-term mean")->capture_default_str();
    sim->add_option("--sigma", sp.sigma, "volatility")->capture_default_str();
    sim->add_option("--x0", sp.x0, "initial value")->capture_default_str();
    sim->add_option("--horizon", sp.horizon, "total time T")->capture_default_str();
    sim->add_option("--steps", sim_steps, "steps per path N")->capture_default_str();
    sim->add_option("--paths", sim_paths, "number of paths")->capture_default_str();
    sim->add_option("--out", sim_out, "output CSV")->capture_default_str();

    // estimate
    auto* est = app.add_subcommand("estimate", "estimate OU parameters from a path CSV")->fallthrough();
    std::string est_input, est_method = "ols", est_noise = "fixed:0", est_model, est_report = "estimates.csv";
    est->add_option("--input", est_input, "path CSV")->required();
    est->add_option("--method", est_method, "ols | kalman | nn")->capture_default_str();
    est->add_option("--obs-noise", est_noise, "Kalman observation noise: fixed:<sigma_eps> | free")->capture_default_str();
    est->add_option("--model", est_model, "MLP checkpoint (nn only)");
    est->add_option("--report", est_report, "report CSV to append to")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "train the MLP estimator")->fallthrough();
    mlp::TrainConfig tc;
    std::vector<double> r_theta{tc.theta.lo, tc.theta.hi}, r_mu{tc.mu.lo, tc.mu.hi}, r_sigma{tc.sigma.lo, tc.sigma.hi},
        r_x0{tc.x0.lo, tc.x0.hi}, r_horizon{tc.horizon.lo, tc.horizon.hi};
    std::string tr_model = "model.ckpt", tr_history = "history.csv";
    tr->add_option("--theta-range", r_theta, "prior lo,hi for theta")->delimiter(',')->expected(2);
    tr->add_option("--mu-range", r_mu, "prior lo,hi for mu")->delimiter(',')->expected(2);
    tr->add_option("--sigma-range", r_sigma, "prior lo,hi for sigma")->delimiter(',')->expected(2);
    tr->add_option("--x0-range", r_x0, "prior lo,hi for x0")->delimiter(',')->expected(2);
    tr->add_option("--horizon-range", r_horizon, "prior lo,hi for T")->delimiter(',')->expected(2);
    tr->add_option("--steps", tc.step_choices, "step counts drawn per instance")->delimiter(',');
    tr->add_option("--n-train", tc.n_train)->check(CLI::PositiveNumber)->capture_default_str();
    tr->add_option("--n-val", tc.n_val)->check(CLI::PositiveNumber)->capture_default_str();
    tr->add_option("--feature-len", tc.feature_len)->check(CLI::Range(std::size_t{2}, std::size_t{1} << 30))
        ->capture_default_str();
    tr->add_option("--hidden", tc.hidden, "hidden layer widths")->delimiter(',');
    tr->add_option("--batch-size", tc.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
    tr->add_option("--epochs", tc.epochs)->capture_default_str();
    tr->add_option("--lr", tc.adam.lr)->check(CLI::PositiveNumber)->capture_default_str();
    tr->add_option("--beta1", tc.adam.beta1)->check(CLI::Range(0.0, 0.999999))->capture_default_str();
    tr->add_option("--beta2", tc.adam.beta2)->check(CLI::Range(0.0, 0.999999))->capture_default_str();
    tr->add_option("--eps", tc.adam.eps)->check(CLI::PositiveNumber)->capture_default_str();
    tr->add_option("--model-out", tr_model, "checkpoint path")->capture_default_str();
    tr->add_option("--history-out", tr_history, "loss history CSV")->capture_default_str();

    // bench
    auto* bn = app.add_subcommand("bench", "run the estimator comparison grid")->fallthrough();
    std::string bn_grid, bn_model, bn_noise, bn_table = "bench_table.csv", bn_plot = "bench_errors.svg";
    std::vector<std::string> bn_methods;
    std::vector<std::size_t> bn_paths, bn_steps;
    std::vector<double> bn_horizons;
    std::size_t bn_replicates = 0;
    bool bn_progress = false;
    bn->add_option("--grid", bn_grid, "grid-definition file (key=value)")->check(CLI::ExistingFile);
    bn->add_option("--methods", bn_methods, "subset of ols,kalman,nn")->delimiter(',');
    bn->add_option("--paths", bn_paths, "path counts")->delimiter(',');
    bn->add_option("--steps", bn_steps, "step counts")->delimiter(',');
    bn->add_option("--horizons", bn_horizons, "horizons")->delimiter(',');
    bn->add_option("--replicates", bn_replicates)->check(CLI::PositiveNumber);
    bn->add_option("--obs-noise", bn_noise, "Kalman observation noise: fixed:<sigma_eps> | free");
    bn->add_option("--model", bn_model, "MLP checkpoint (required for nn)");
    bn->add_option("--table-out", bn_table, "result table CSV")->capture_default_str();
    bn->add_option("--plot-out", bn_plot, "error plot SVG")->capture_default_str();
    bn->add_flag("--progress", bn_progress, "report progress on stderr");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    if (*seed_opt) g.seed = seed_value;
    set_max_threads(g.threads);

    try {
        if (*sim) {
            try {
                sp.validate();
            } catch (const InvalidArgument& e) {
                throw flag_error(e);
            }
            if (sim_steps < 1) throw FlagError("steps", "must be >= 1");
            if (sim_paths < 1) throw FlagError("paths", "must be >= 1");
            const std::uint64_t seed = g.resolve_seed();
            const PathSet paths = simulate(sp, TimeGrid::from_horizon(sp.horizon, sim_steps), sim_paths, seed);
            const fs::path out = g.out(sim_out);
            io::write_pathset_csv(paths, out);
            std::cout << "wrote " << out.string() << '\n';
        } else if (*est) {
            const Method method = parse_methods({est_method}).front();
            const ObsNoise noise = parse_obs_noise(est_noise);
            if (method == Method::NN && est_model.empty()) throw FlagError("model", "required for --method nn");
            std::optional<mlp::MLPModel> model;
            if (method == Method::NN) model = mlp::load_checkpoint(est_model);
            const PathSet paths = io::read_pathset_csv(est_input);
            EstimateReport report;
            switch (method) {
                case Method::OLS: report = estimate_ols(paths); break;
                case Method::Kalman: report = kalman_mle(paths, noise); break;
                case Method::NN: report = mlp::predict_params(*model, paths); break;
            }
            print_report(report);
            const fs::path out = g.out(est_report);
            append_report(out, report);
            std::cout << "appended " << out.string() << '\n';
        } else if (*tr) {
            tc.theta = parse_interval("theta-range", r_theta);
            tc.mu = parse_interval("mu-range", r_mu);
            tc.sigma = parse_interval("sigma-range", r_sigma);
            tc.x0 = parse_interval("x0-range", r_x0);
            tc.horizon = parse_interval("horizon-range", r_horizon);
            if (!(tc.theta.lo > 0.0)) throw FlagError("theta-range", "lower bound must be > 0");
            if (!(tc.sigma.lo > 0.0)) throw FlagError("sigma-range", "lower bound must be > 0");
            if (!(tc.horizon.lo > 0.0)) throw FlagError("horizon-range", "lower bound must be > 0");
            if (tc.step_choices.empty()) throw FlagError("steps", "at least one step count is required");
            for (std::size_t s : tc.step_choices) {
                if (s + 1 < tc.feature_len) throw FlagError("steps", "each step count must be >= feature-len - 1");
            }
            for (std::size_t h : tc.hidden) {
                if (h == 0) throw FlagError("hidden", "layer widths must be positive");
            }
            tc.seed = g.resolve_seed();
            tc.validate();
            const mlp::TrainResult result = mlp::train(tc);
            const fs::path model_out = g.out(tr_model), history_out = g.out(tr_history);
            mlp::save_checkpoint(result.model, model_out);
            io::write_file_atomic(history_out, mlp::history_to_csv(result.history));
            std::cout << "best_epoch=" << result.best_epoch << '\n'
                      << "best_val_loss=" << format_double(result.best_val_loss) << '\n'
                      << "wrote " << model_out.string() << '\n'
                      << "wrote " << history_out.string() << '\n';
        } else if (*bn) {
            harness::ExperimentGrid grid =
                bn_grid.empty() ? harness::ExperimentGrid::default_grid()
                                : harness::ExperimentGrid::from_text(io::read_file(bn_grid));
            if (!bn_methods.empty()) grid.methods = parse_methods(bn_methods);
            if (!bn_noise.empty()) grid.kalman_noise = parse_obs_noise(bn_noise);
            if (bn_replicates) grid.replicates = bn_replicates;
            if (!bn_paths.empty() || !bn_steps.empty() || !bn_horizons.empty()) {
                std::vector<std::size_t> paths, steps;
                std::vector<double> horizons;
                for (const auto& c : grid.cells) {
                    if (std::find(paths.begin(), paths.end(), c.paths) == paths.end()) paths.push_back(c.paths);
                    if (std::find(steps.begin(), steps.end(), c.n_steps) == steps.end()) steps.push_back(c.n_steps);
                    if (std::find(horizons.begin(), horizons.end(), c.horizon) == horizons.end())
                        horizons.push_back(c.horizon);
                }
                grid.cells = harness::ExperimentGrid::cross(bn_paths.empty() ? paths : bn_paths,
                                                            bn_steps.empty() ? steps : bn_steps,
                                                            bn_horizons.empty() ? horizons : bn_horizons);
            }
            try {
                grid.validate();
            } catch (const InvalidArgument& e) {
                throw flag_error(e);
            }
            if (grid.uses(Method::NN) && bn_model.empty()) throw FlagError("model", "required when nn is in --methods");
            std::optional<mlp::MLPModel> model;
            if (!bn_model.empty()) model = mlp::load_checkpoint(bn_model);
            const std::uint64_t seed = g.resolve_seed();
            harness::RunOptions opt;
            if (bn_progress) {
                opt.progress = [](std::size_t done, std::size_t total) {
                    std::cerr << "\r" << done << '/' << total << std::flush;
                    if (done == total) std::cerr << '\n';
                };
            }
            const harness::GridResult result = harness::run_grid(grid, model ? &*model : nullptr, seed, opt);
            const fs::path table = g.out(bn_table), plot = g.out(bn_plot);
            harness::write_table(result, table);
            harness::render_error_plot(result, plot);
            std::cout << harness::format_aggregate(result) << "wrote " << table.string() << '\n'
                      << "wrote " << plot.string() << '\n';
            std::size_t failed = 0;
            for (const auto& row : result.rows) failed += row.ok() ? 0 : 1;
            if (failed) std::cout << "failed_rows=" << failed << '\n';
        }
    } catch (const FlagError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DidNotConverge& e) {
        std::cerr << "error: " << e.what() << "\nbest estimate so far:\n";
        print_report(e.best_so_far());
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
