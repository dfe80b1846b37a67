#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oukit/classical.hpp"
#include "oukit/ou_core.hpp"

namespace oukit::mlp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Number of regression outputs, ordered [mu, theta, sigma].
inline constexpr std::size_t kOutputs = 3;

struct AdamState {
    std::vector<Matrix> m_weights, v_weights;
    std::vector<Vector> m_biases, v_biases;
    std::uint64_t step = 0;
};

/// Fully connected ReLU network with a linear output layer.
/// weights[l] is (layer_dims[l+1] x layer_dims[l]).
struct MLPModel {
    std::vector<std::size_t> layer_dims;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    AdamState adam;
    std::size_t feature_len = 0;  ///< L; the input width is L + 1
    std::uint64_t config_hash = 0;

    std::size_t n_layers() const noexcept { return weights.size(); }
    std::size_t input_dim() const noexcept { return layer_dims.front(); }
    /// Throws ShapeMismatch if the weight shapes do not chain.
    void check_shapes() const;
    bool all_finite() const;
};

/// Per-parameter gradients with the same shapes as MLPModel weights/biases.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

/// Glorot-uniform weights on +-sqrt(6/(fan_in + fan_out)), zero biases, zeroed Adam state.
MLPModel glorot_init(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);

/// Model with every parameter zero (used for clamp tests and as a baseline).
MLPModel zero_model(const std::vector<std::size_t>& layer_dims);

struct FeatureVector {
    std::vector<double> values;  ///< L strided samples, then the sampling interval
};

/// Resamples a trajectory of N+1 points at indices round(i N / (L-1)), i = 0..L-1,
/// and appends the effective interval dt N / (L-1). Throws TooShort if N+1 < L.
FeatureVector featurize(std::span<const double> path, const TimeGrid& grid, std::size_t feature_len);

/// Activations kept for backprop. pre[l] = inputs to the ReLU of layer l (batch x dim);
/// post[0] is the input batch, post[l+1] the output of layer l.
struct ForwardCache {
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
};

/// batch is (samples x input_dim); returns (samples x 3) predictions.
Matrix forward(const MLPModel& model, const Matrix& batch, ForwardCache* cache = nullptr);

struct LossAndGrad {
    double loss = 0.0;
    Gradients grads;
};

/// Mean squared error over the batch and the three outputs, with exact backprop gradients.
LossAndGrad loss_and_backward(const MLPModel& model, const Matrix& batch, const Matrix& targets);

/// Mean squared error only.
double loss(const MLPModel& model, const Matrix& batch, const Matrix& targets);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update in place.
void adam_step(MLPModel& model, const Gradients& grads, const AdamConfig& cfg);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct TrainConfig {
    Interval theta{0.5, 10.0};
    Interval mu{-1.0, 2.0};
    Interval sigma{0.1, 2.0};
    Interval x0{-1.0, 2.0};
    Interval horizon{1.0, 5.0};
    /// Each training path uses one of these step counts, chosen uniformly.
    std::vector<std::size_t> step_choices{1000, 5000};
    std::size_t n_train = 20000;
    std::size_t n_val = 2000;
    std::size_t feature_len = 100;
    std::vector<std::size_t> hidden{128, 128};
    std::size_t batch_size = 8;
    AdamConfig adam{};
    std::size_t epochs = 30;
    std::uint64_t seed = 0;

    /// Throws InvalidConfig.
    void validate() const;
    std::vector<std::size_t> layer_dims() const;
    /// key=value lines in a fixed order; the basis of hash().
    std::string canonical() const;
    std::uint64_t hash() const;
};

struct EpochLoss {
    std::size_t epoch;  ///< 0 is the untrained model
    double train_loss;
    double val_loss;
};

struct TrainResult {
    MLPModel model;  ///< parameters from the epoch with the lowest validation loss
    std::vector<EpochLoss> history;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
};

/// Labelled features: one row per instance, targets in [mu, theta, sigma] order.
struct Dataset {
    Matrix features;
    Matrix targets;
};

/// Draws `count` instances starting at instance index `first` of the config's stream.
Dataset make_dataset(const TrainConfig& config, std::size_t first, std::size_t count);

TrainResult train(const TrainConfig& config);

/// Featurizes every path, averages the predictions and clamps theta, sigma to >= 1e-6.
EstimateReport predict_params(const MLPModel& model, const PathSet& paths);

std::string history_to_csv(std::span<const EpochLoss> history);

/// Text checkpoint: header, feature_len, layer_dims, config hash, then every
/// weight and bias in shortest round-trip decimal form.
std::string checkpoint_to_string(const MLPModel& model);
MLPModel checkpoint_from_string(const std::string& text);
void save_checkpoint(const MLPModel& model, const std::filesystem::path& path);
MLPModel load_checkpoint(const std::filesystem::path& path);

}  // namespace oukit::mlp
