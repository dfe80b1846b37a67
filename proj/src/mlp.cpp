#include "oukit/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oukit/error.hpp"
#include "oukit/io.hpp"
#include "oukit/parallel.hpp"
#include "oukit/random.hpp"

namespace oukit::mlp {

void MLPModel::check_shapes() const {
    if (layer_dims.size() < 2) throw ShapeMismatch("model needs at least an input and an output layer");
    if (layer_dims.back() != kOutputs) throw ShapeMismatch("output dimension must be 3");
    if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size()) {
        throw ShapeMismatch("layer count does not match layer_dims");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const auto rows = static_cast<Eigen::Index>(layer_dims[l + 1]);
        const auto cols = static_cast<Eigen::Index>(layer_dims[l]);
        if (weights[l].rows() != rows || weights[l].cols() != cols || biases[l].size() != rows) {
            throw ShapeMismatch("layer " + std::to_string(l) + " parameters do not match layer_dims");
        }
    }
}

bool MLPModel::all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
}

namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw InvalidArgument("layer_dims", "need at least input and output sizes");
    if (dims.back() != kOutputs) throw InvalidArgument("layer_dims", "output size must be 3");
    for (std::size_t d : dims) {
        if (d == 0) throw InvalidArgument("layer_dims", "sizes must be positive");
    }
}

void reset_adam(MLPModel& m) {
    m.adam = {};
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        m.adam.m_weights.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
        m.adam.v_weights.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
        m.adam.m_biases.push_back(Vector::Zero(m.biases[l].size()));
        m.adam.v_biases.push_back(Vector::Zero(m.biases[l].size()));
    }
}

}  // namespace

MLPModel zero_model(const std::vector<std::size_t>& layer_dims) {
    validate_dims(layer_dims);
    MLPModel m;
    m.layer_dims = layer_dims;
    m.feature_len = layer_dims.front() - 1;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        m.weights.push_back(Matrix::Zero(static_cast<Eigen::Index>(layer_dims[l + 1]),
                                         static_cast<Eigen::Index>(layer_dims[l])));
        m.biases.push_back(Vector::Zero(static_cast<Eigen::Index>(layer_dims[l + 1])));
    }
    reset_adam(m);
    return m;
}

MLPModel glorot_init(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
    MLPModel m = zero_model(layer_dims);
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer_dims[l] + layer_dims[l + 1]));
        UniformStream u(seed, l);
        Matrix& w = m.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u.next(-limit, limit);
    }
    return m;
}

FeatureVector featurize(std::span<const double> path, const TimeGrid& grid, std::size_t feature_len) {
    if (feature_len < 2) throw InvalidArgument("feature_len", "must be >= 2");
    if (path.size() != grid.n_steps + 1) throw ShapeMismatch("path length does not match the time grid");
    if (path.size() < feature_len) {
        throw TooShort("trajectory has " + std::to_string(path.size()) + " points, features need " +
                       std::to_string(feature_len));
    }
    const std::size_t n = grid.n_steps;
    const std::size_t last = feature_len - 1;
    FeatureVector f;
    f.values.reserve(feature_len + 1);
    for (std::size_t i = 0; i < feature_len; ++i) {
        // round(i n / last), halves rounded up, in exact integer arithmetic.
        const std::size_t idx = (2 * i * n + last) / (2 * last);
        f.values.push_back(path[idx]);
    }
    f.values.push_back(grid.dt * static_cast<double>(n) / static_cast<double>(last));
    return f;
}

Matrix forward(const MLPModel& model, const Matrix& batch, ForwardCache* cache) {
    model.check_shapes();
    if (batch.cols() != static_cast<Eigen::Index>(model.input_dim())) {
        throw ShapeMismatch("batch has " + std::to_string(batch.cols()) + " features, model expects " +
                            std::to_string(model.input_dim()));
    }
    if (cache) {
        cache->pre.clear();
        cache->post.clear();
        cache->post.push_back(batch);
    }
    Matrix a = batch;
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        Matrix z = (a * model.weights[l].transpose()).rowwise() + model.biases[l].transpose();
        const bool hidden = l + 1 < model.n_layers();
        a = hidden ? Matrix(z.cwiseMax(0.0)) : z;
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->post.push_back(a);
        }
    }
    return a;
}

double loss(const MLPModel& model, const Matrix& batch, const Matrix& targets) {
    const Matrix y = forward(model, batch);
    if (targets.rows() != y.rows() || targets.cols() != y.cols()) throw ShapeMismatch("targets shape mismatch");
    return (y - targets).squaredNorm() / static_cast<double>(y.size());
}

LossAndGrad loss_and_backward(const MLPModel& model, const Matrix& batch, const Matrix& targets) {
    ForwardCache cache;
    const Matrix y = forward(model, batch, &cache);
    if (targets.rows() != y.rows() || targets.cols() != y.cols()) throw ShapeMismatch("targets shape mismatch");

    LossAndGrad out;
    const Matrix diff = y - targets;
    out.loss = diff.squaredNorm() / static_cast<double>(y.size());

    const std::size_t layers = model.n_layers();
    out.grads.weights.resize(layers);
    out.grads.biases.resize(layers);
    Matrix dz = diff * (2.0 / static_cast<double>(y.size()));
    for (std::size_t l = layers; l-- > 0;) {
        out.grads.weights[l] = dz.transpose() * cache.post[l];
        out.grads.biases[l] = dz.colwise().sum().transpose();
        if (l > 0) {
            Matrix da = dz * model.weights[l];
            dz = da.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return out;
}

void adam_step(MLPModel& model, const Gradients& grads, const AdamConfig& cfg) {
    model.check_shapes();
    if (grads.weights.size() != model.n_layers() || grads.biases.size() != model.n_layers()) {
        throw ShapeMismatch("gradient layer count mismatch");
    }
    AdamState& s = model.adam;
    if (s.m_weights.size() != model.n_layers()) reset_adam(model);
    ++s.step;
    const double t = static_cast<double>(s.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);

    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        if (g.rows() != param.rows() || g.cols() != param.cols()) throw ShapeMismatch("gradient shape mismatch");
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        param.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
    };
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        update(model.weights[l], grads.weights[l], s.m_weights[l], s.v_weights[l]);
        update(model.biases[l], grads.biases[l], s.m_biases[l], s.v_biases[l]);
    }
}

void TrainConfig::validate() const {
    auto check_interval = [](const char* name, Interval iv, bool positive) {
        if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi) {
            throw InvalidConfig(std::string(name) + " range must be finite with lo <= hi");
        }
        if (positive && !(iv.lo > 0.0)) throw InvalidConfig(std::string(name) + " range must have a positive lower bound");
    };
    check_interval("theta", theta, true);
    check_interval("mu", mu, false);
    check_interval("sigma", sigma, true);
    check_interval("x0", x0, false);
    check_interval("horizon", horizon, true);
    if (step_choices.empty()) throw InvalidConfig("step_choices must be non-empty");
    if (n_train == 0 || n_val == 0) throw InvalidConfig("n_train and n_val must both be >= 1");
    if (feature_len < 2) throw InvalidConfig("feature_len must be >= 2");
    for (std::size_t s : step_choices) {
        if (s + 1 < feature_len) throw InvalidConfig("every step choice must give at least feature_len points");
    }
    if (batch_size == 0) throw InvalidConfig("batch_size must be >= 1");
    for (std::size_t h : hidden) {
        if (h == 0) throw InvalidConfig("hidden layer sizes must be positive");
    }
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0)) {
        throw InvalidConfig("adam hyperparameters out of range");
    }
}

std::vector<std::size_t> TrainConfig::layer_dims() const {
    std::vector<std::size_t> dims{feature_len + 1};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(kOutputs);
    return dims;
}

std::string TrainConfig::canonical() const {
    using io::format_double;
    std::ostringstream out;
    auto interval = [&](const char* name, Interval iv) {
        out << name << '=' << format_double(iv.lo) << ',' << format_double(iv.hi) << '\n';
    };
    auto list = [&](const char* name, const std::vector<std::size_t>& v) {
        out << name << '=';
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
        out << '\n';
    };
    interval("theta", theta);
    interval("mu", mu);
    interval("sigma", sigma);
    interval("x0", x0);
    interval("horizon", horizon);
    list("step_choices", step_choices);
    out << "n_train=" << n_train << "\nn_val=" << n_val << "\nfeature_len=" << feature_len << '\n';
    list("hidden", hidden);
    out << "batch_size=" << batch_size << "\nlr=" << format_double(adam.lr) << "\nbeta1=" << format_double(adam.beta1)
        << "\nbeta2=" << format_double(adam.beta2) << "\neps=" << format_double(adam.eps) << "\nepochs=" << epochs
        << "\nseed=" << seed << '\n';
    return out.str();
}

std::uint64_t TrainConfig::hash() const {
    // FNV-1a, 64-bit.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

Dataset make_dataset(const TrainConfig& config, std::size_t first, std::size_t count) {
    Dataset ds{Matrix(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(config.feature_len + 1)),
               Matrix(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(kOutputs))};
    const std::uint64_t draw_key = derive_seed(config.seed, 0xDA7Aull);
    parallel_for(count, [&](std::size_t i) {
        const std::size_t index = first + i;
        UniformStream u(draw_key, index);
        OUParams p;
        p.theta = u.next(config.theta.lo, config.theta.hi);
        p.mu = u.next(config.mu.lo, config.mu.hi);
        p.sigma = u.next(config.sigma.lo, config.sigma.hi);
        p.x0 = u.next(config.x0.lo, config.x0.hi);
        p.horizon = u.next(config.horizon.lo, config.horizon.hi);
        const auto pick = std::min(config.step_choices.size() - 1,
                                   static_cast<std::size_t>(u.next() * static_cast<double>(config.step_choices.size())));
        const TimeGrid grid = TimeGrid::from_horizon(p.horizon, config.step_choices[pick]);
        const PathSet path = simulate(p, grid, 1, derive_seed(config.seed, index, 1));
        const FeatureVector f = featurize(path.path(0), grid, config.feature_len);
        const auto row = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < f.values.size(); ++j) ds.features(row, static_cast<Eigen::Index>(j)) = f.values[j];
        ds.targets(row, 0) = p.mu;
        ds.targets(row, 1) = p.theta;
        ds.targets(row, 2) = p.sigma;
    });
    return ds;
}

TrainResult train(const TrainConfig& config) {
    config.validate();
    const Dataset train_set = make_dataset(config, 0, config.n_train);
    const Dataset val_set = make_dataset(config, config.n_train, config.n_val);

    TrainResult result;
    MLPModel model = glorot_init(config.layer_dims(), derive_seed(config.seed, 0x1417ull));
    model.feature_len = config.feature_len;
    model.config_hash = config.hash();

    result.history.push_back({0, loss(model, train_set.features, train_set.targets),
                              loss(model, val_set.features, val_set.targets)});
    result.best_val_loss = result.history.back().val_loss;
    result.model = model;

    const std::size_t n = config.n_train;
    const auto width = train_set.features.cols();
    std::vector<std::size_t> order(n);
    Matrix xb, yb;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        UniformStream shuffle(derive_seed(config.seed, 0x5EEDull), epoch);
        for (std::size_t i = n; i > 1; --i) {
            const auto j = std::min(i - 1, static_cast<std::size_t>(shuffle.next() * static_cast<double>(i)));
            std::swap(order[i - 1], order[j]);
        }

        double weighted_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, n - start);
            xb.resize(static_cast<Eigen::Index>(len), width);
            yb.resize(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(kOutputs));
            for (std::size_t b = 0; b < len; ++b) {
                const auto src = static_cast<Eigen::Index>(order[start + b]);
                xb.row(static_cast<Eigen::Index>(b)) = train_set.features.row(src);
                yb.row(static_cast<Eigen::Index>(b)) = train_set.targets.row(src);
            }
            const LossAndGrad lg = loss_and_backward(model, xb, yb);
            adam_step(model, lg.grads, config.adam);
            weighted_loss += lg.loss * static_cast<double>(len);
        }
        if (!model.all_finite()) throw NumericalBreakdown("training diverged at epoch " + std::to_string(epoch));

        const double val = loss(model, val_set.features, val_set.targets);
        result.history.push_back({epoch, weighted_loss / static_cast<double>(n), val});
        if (val < result.best_val_loss) {
            result.best_val_loss = val;
            result.best_epoch = epoch;
            result.model = model;
        }
    }
    return result;
}

EstimateReport predict_params(const MLPModel& model, const PathSet& paths) {
    model.check_shapes();
    if (model.input_dim() != model.feature_len + 1) throw ShapeMismatch("model input width is not feature_len + 1");
    Matrix features(static_cast<Eigen::Index>(paths.n_paths()), static_cast<Eigen::Index>(model.input_dim()));
    for (std::size_t p = 0; p < paths.n_paths(); ++p) {
        const FeatureVector f = featurize(paths.path(p), paths.grid(), model.feature_len);
        for (std::size_t j = 0; j < f.values.size(); ++j) {
            features(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) = f.values[j];
        }
    }
    const Vector mean = forward(model, features).colwise().mean().transpose();
    constexpr double floor = 1e-6;
    EstimateReport r;
    r.method = Method::NN;
    r.mu_hat = mean(0);
    r.theta_hat = std::max(mean(1), floor);
    r.sigma_hat = std::max(mean(2), floor);
    r.set_data_shape(paths);
    return r;
}

std::string history_to_csv(std::span<const EpochLoss> history) {
    std::string out = "epoch,train_loss,val_loss\n";
    for (const auto& h : history) {
        out += std::to_string(h.epoch) + ',' + io::format_double(h.train_loss) + ',' + io::format_double(h.val_loss) +
               '\n';
    }
    return out;
}

namespace {
constexpr const char* kCheckpointMagic = "oukit-mlp-checkpoint v1";
}

std::string checkpoint_to_string(const MLPModel& model) {
    model.check_shapes();
    std::string out = std::string(kCheckpointMagic) + '\n';
    out += "feature_len " + std::to_string(model.feature_len) + '\n';
    out += "layer_dims";
    for (std::size_t d : model.layer_dims) out += ' ' + std::to_string(d);
    out += "\nconfig_hash " + std::to_string(model.config_hash) + '\n';
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        const Matrix& w = model.weights[l];
        out += "weights " + std::to_string(l) + ' ' + std::to_string(w.rows()) + ' ' + std::to_string(w.cols()) + '\n';
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                if (c) out += ' ';
                out += io::format_double(w(r, c));
            }
            out += '\n';
        }
        const Vector& b = model.biases[l];
        out += "biases " + std::to_string(l) + ' ' + std::to_string(b.size()) + '\n';
        for (Eigen::Index r = 0; r < b.size(); ++r) {
            if (r) out += ' ';
            out += io::format_double(b(r));
        }
        out += '\n';
    }
    out += "end\n";
    return out;
}

namespace {

struct LineReader {
    std::istringstream in;
    std::size_t line_no = 0;

    std::vector<std::string> next_tokens() {
        std::string line;
        if (!std::getline(in, line)) throw ParseError(line_no + 1, "unexpected end of checkpoint");
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        for (std::string t; ls >> t;) tokens.push_back(t);
        return tokens;
    }

    std::vector<std::string> expect(const std::string& key, std::size_t n_values) {
        auto t = next_tokens();
        if (t.empty() || t[0] != key || t.size() != n_values + 1) {
            throw ParseError(line_no, "expected '" + key + "' with " + std::to_string(n_values) + " values");
        }
        return t;
    }
};

}  // namespace

MLPModel checkpoint_from_string(const std::string& text) {
    LineReader rd{std::istringstream(text)};
    std::string magic;
    std::getline(rd.in, magic);
    rd.line_no = 1;
    if (magic != kCheckpointMagic) throw ParseError(1, "not an oukit MLP checkpoint");

    const std::size_t feature_len = io::parse_size(rd.expect("feature_len", 1)[1], rd.line_no);
    auto dims_tokens = rd.next_tokens();
    if (dims_tokens.size() < 3 || dims_tokens[0] != "layer_dims") throw ParseError(rd.line_no, "expected layer_dims");
    std::vector<std::size_t> dims;
    for (std::size_t i = 1; i < dims_tokens.size(); ++i) dims.push_back(io::parse_size(dims_tokens[i], rd.line_no));
    const auto hash_tokens = rd.expect("config_hash", 1);
    std::uint64_t hash = 0;
    {
        std::istringstream hs(hash_tokens[1]);
        if (!(hs >> hash)) throw ParseError(rd.line_no, "bad config_hash");
    }

    MLPModel m;
    try {
        m = zero_model(dims);
    } catch (const InvalidArgument& e) {
        throw ParseError(rd.line_no - 1, e.what());
    }
    m.feature_len = feature_len;
    m.config_hash = hash;
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        Matrix& w = m.weights[l];
        const auto wh = rd.expect("weights", 3);
        if (io::parse_size(wh[1], rd.line_no) != l || io::parse_size(wh[2], rd.line_no) != static_cast<std::size_t>(w.rows()) ||
            io::parse_size(wh[3], rd.line_no) != static_cast<std::size_t>(w.cols())) {
            throw ParseError(rd.line_no, "weights header does not match layer_dims");
        }
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            const auto vals = rd.next_tokens();
            if (vals.size() != static_cast<std::size_t>(w.cols())) throw ParseError(rd.line_no, "wrong number of weights");
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = io::parse_double(vals[static_cast<std::size_t>(c)], rd.line_no);
        }
        Vector& b = m.biases[l];
        const auto bh = rd.expect("biases", 2);
        if (io::parse_size(bh[1], rd.line_no) != l || io::parse_size(bh[2], rd.line_no) != static_cast<std::size_t>(b.size())) {
            throw ParseError(rd.line_no, "biases header does not match layer_dims");
        }
        const auto vals = rd.next_tokens();
        if (vals.size() != static_cast<std::size_t>(b.size())) throw ParseError(rd.line_no, "wrong number of biases");
        for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = io::parse_double(vals[static_cast<std::size_t>(r)], rd.line_no);
    }
    if (rd.next_tokens() != std::vector<std::string>{"end"}) throw ParseError(rd.line_no, "expected 'end'");
    if (!m.all_finite()) throw ParseError(rd.line_no, "non-finite parameter in checkpoint");
    if (m.input_dim() != m.feature_len + 1) throw ParseError(2, "feature_len inconsistent with layer_dims");
    return m;
}

void save_checkpoint(const MLPModel& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, checkpoint_to_string(model));
}

MLPModel load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_string(io::read_file(path)); }

}  // namespace oukit::mlp
