#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imedbot/dataset.hpp"
#include "imedbot/error.hpp"
#include "imedbot/rng.hpp"

namespace imedbot::nn {

enum class Activation { kRelu, kTanh, kSigmoid };
enum class Optimizer { kSgd, kSgdMomentum, kAdam };
enum class WeightInit { kXavierUniform, kHeUniform };

const char* to_string(Activation a) noexcept;
const char* to_string(Optimizer o) noexcept;
const char* to_string(WeightInit w) noexcept;
// Throw InvalidSetting on unknown names.
Activation parse_activation(std::string_view s);
Optimizer parse_optimizer(std::string_view s);
WeightInit parse_weight_init(std::string_view s);

// The 13 tunable hyperparameters of a network and its training run.
struct HyperparameterSetting {
  int hidden_layer_count = 2;
  int hidden_units = 16;
  Activation hidden_activation = Activation::kRelu;
  double learning_rate = 0.01;
  double lr_decay = 0.0;  // lr at epoch e = learning_rate / (1 + lr_decay * e)
  int epochs = 50;
  int batch_size = 32;
  Optimizer optimizer = Optimizer::kAdam;
  double momentum = 0.9;  // only read by kSgdMomentum
  double dropout_rate = 0.0;
  double l2_lambda = 0.0;
  WeightInit weight_init = WeightInit::kHeUniform;
  int early_stop_patience = 0;  // 0 disables early stopping

  friend bool operator==(const HyperparameterSetting&,
                         const HyperparameterSetting&) = default;
};

inline constexpr std::size_t kHyperparameterCount = 13;

class NetworkError : public Error {
 public:
  using Error::Error;
};

// Field-level range violation, e.g. dropout_rate outside [0, 1).
class InvalidSetting : public NetworkError {
 public:
  InvalidSetting(std::string field, const std::string& reason);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class DimensionMismatch : public NetworkError {
 public:
  explicit DimensionMismatch(const std::string& message)
      : NetworkError("DimensionMismatch", message) {}
};

class NonFiniteLoss : public NetworkError {
 public:
  NonFiniteLoss(int epoch, std::size_t batch);
  int epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  int epoch_;
  std::size_t batch_;
};

void validate(const HyperparameterSetting& s);

// Dense row-major matrix, rows = outputs, cols = inputs.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct Layer {
  Matrix weights;
  std::vector<double> bias;

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Layer l maps width(l-1) -> width(l); the last layer has width 1.
struct NetworkWeights {
  std::vector<Layer> layers;

  std::size_t input_width() const noexcept {
    return layers.empty() ? 0 : layers.front().weights.cols;
  }
  std::size_t parameter_count() const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const NetworkWeights&, const NetworkWeights&) = default;
};

// Same shape as NetworkWeights, holding d(loss)/d(parameter).
using Gradients = NetworkWeights;

struct TrainConfig {
  HyperparameterSetting setting;
  std::uint64_t seed = 0;
  std::size_t input_width = 0;
};

NetworkWeights init_weights(const TrainConfig& cfg);

// Inverted dropout on hidden activations; survivors are scaled by 1/(1-rate).
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;
};

// Sigmoid output probability. Pass a Dropout only for training-mode passes.
double forward(const NetworkWeights& w, Activation activation,
               std::span<const double> x,
               std::optional<Dropout> dropout = std::nullopt);

inline constexpr double kProbabilityEpsilon = 1e-12;

// Binary cross-entropy on p clamped to [eps, 1-eps] plus
// (l2_lambda / 2) * sum of squared weights (biases excluded).
double loss(double p, double y, const NetworkWeights& w, double l2_lambda);
double l2_penalty(const NetworkWeights& w, double l2_lambda);

// A view of a minibatch: `rows` rows of width `cols`, row-major.
struct Batch {
  std::span<const double> features;
  std::span<const double> labels;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return features.subspan(i * cols, cols);
  }
};

struct LossAndGradients {
  double loss = 0.0;  // mean batch cross-entropy + L2 term
  Gradients gradients;
};

// Exact gradients of the mean batch loss (including the L2 term), without
// dropout.
LossAndGradients backprop_gradients(const NetworkWeights& w, const Batch& batch,
                                    const HyperparameterSetting& setting);

// Same, with dropout masks drawn from `rng` when setting.dropout_rate > 0.
LossAndGradients backprop_gradients(const NetworkWeights& w, const Batch& batch,
                                    const HyperparameterSetting& setting,
                                    Rng* dropout_rng);

// Minibatch training. Per-epoch shuffle and dropout streams derive from
// cfg.seed and the epoch index, so the result is a pure function of the
// arguments. When early stopping is enabled the holdout AUC is tracked after
// each epoch and the best weights are restored once patience runs out.
NetworkWeights train(const data::EncodedMatrix& m, const TrainConfig& cfg,
                     const data::EncodedMatrix* holdout = nullptr);

// Scores every row of m.
std::vector<double> predict(const NetworkWeights& w, Activation activation,
                            const data::EncodedMatrix& m);

}  // namespace imedbot::nn
