#include "imedbot/dfnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imedbot/metrics.hpp"

namespace imedbot::nn {

namespace {

// Seed-stream tags.
constexpr std::uint64_t kInitStream = 0x494E4954ULL;     // "INIT"
constexpr std::uint64_t kShuffleStream = 0x53485546ULL;  // "SHUF"
constexpr std::uint64_t kDropoutStream = 0x44524F50ULL;  // "DROP"

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kSigmoid: return sigmoid(z);
  }
  return z;
}

// Derivative expressed through the pre-activation z and activation value a.
double activate_grad(Activation act, double z, double a) {
  switch (act) {
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - a * a;
    case Activation::kSigmoid: return a * (1.0 - a);
  }
  return 1.0;
}

// Per-sample buffers reused across a batch.
struct Trace {
  std::vector<std::vector<double>> pre;    // z per layer
  std::vector<std::vector<double>> post;   // activation (after dropout) per layer
  std::vector<std::vector<double>> scale;  // dropout multiplier per hidden layer
  std::vector<std::vector<double>> delta;

  explicit Trace(const NetworkWeights& w) {
    for (const auto& layer : w.layers) {
      pre.emplace_back(layer.weights.rows, 0.0);
      post.emplace_back(layer.weights.rows, 0.0);
      scale.emplace_back(layer.weights.rows, 1.0);
      delta.emplace_back(layer.weights.rows, 0.0);
    }
  }
};

void check_input(const NetworkWeights& w, std::size_t width) {
  if (w.layers.empty()) throw DimensionMismatch("network has no layers");
  if (width != w.input_width()) {
    throw DimensionMismatch("input has width " + std::to_string(width) +
                            ", network expects " + std::to_string(w.input_width()));
  }
}

double run_forward(const NetworkWeights& w, Activation act,
                   std::span<const double> x, std::optional<Dropout> dropout,
                   Trace& t) {
  std::span<const double> in = x;
  const std::size_t last = w.layers.size() - 1;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& layer = w.layers[l];
    auto& z = t.pre[l];
    auto& a = t.post[l];
    for (std::size_t o = 0; o < layer.weights.rows; ++o) {
      const double* row = layer.weights.data.data() + o * layer.weights.cols;
      double sum = layer.bias[o];
      for (std::size_t i = 0; i < layer.weights.cols; ++i) sum += row[i] * in[i];
      z[o] = sum;
    }
    if (l == last) {
      a[0] = sigmoid(z[0]);
      return a[0];
    }
    const bool drop = dropout && dropout->rate > 0.0 && dropout->rng != nullptr;
    const double keep_scale = drop ? 1.0 / (1.0 - dropout->rate) : 1.0;
    for (std::size_t o = 0; o < z.size(); ++o) {
      double s = 1.0;
      if (drop) s = dropout->rng->uniform() < dropout->rate ? 0.0 : keep_scale;
      t.scale[l][o] = s;
      a[o] = activate(act, z[o]) * s;
    }
    in = a;
  }
  return 0.5;  // unreachable: the last layer returns
}

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

double cross_entropy(double p, double y) {
  p = clamp_probability(p);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

Gradients zeros_like(const NetworkWeights& w) {
  Gradients g;
  for (const auto& layer : w.layers) {
    g.layers.push_back({Matrix(layer.weights.rows, layer.weights.cols),
                        std::vector<double>(layer.bias.size(), 0.0)});
  }
  return g;
}

struct OptimizerState {
  NetworkWeights first;   // momentum velocity, or Adam first moment
  NetworkWeights second;  // Adam second moment
  long step = 0;
};

void apply_update(NetworkWeights& w, const Gradients& g,
                  const HyperparameterSetting& s, double lr, OptimizerState& st) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.step));

  auto update = [&](std::vector<double>& param, const std::vector<double>& grad,
                    std::vector<double>& m1, std::vector<double>& m2) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      switch (s.optimizer) {
        case Optimizer::kSgd:
          param[i] -= lr * grad[i];
          break;
        case Optimizer::kSgdMomentum:
          m1[i] = s.momentum * m1[i] - lr * grad[i];
          param[i] += m1[i];
          break;
        case Optimizer::kAdam: {
          m1[i] = kAdamBeta1 * m1[i] + (1.0 - kAdamBeta1) * grad[i];
          m2[i] = kAdamBeta2 * m2[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
          const double m_hat = m1[i] / bc1;
          const double v_hat = m2[i] / bc2;
          param[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
          break;
        }
      }
    }
  };

  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    update(w.layers[l].weights.data, g.layers[l].weights.data,
           st.first.layers[l].weights.data, st.second.layers[l].weights.data);
    update(w.layers[l].bias, g.layers[l].bias, st.first.layers[l].bias,
           st.second.layers[l].bias);
  }
}

double holdout_auc(const NetworkWeights& w, Activation act,
                   const data::EncodedMatrix& holdout) {
  const auto scores = predict(w, act, holdout);
  try {
    return metrics::roc_curve(scores, holdout.labels).auc;
  } catch (const metrics::MetricsError&) {
    return 0.5;
  }
}

}  // namespace

const char* to_string(Activation a) noexcept {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

const char* to_string(Optimizer o) noexcept {
  switch (o) {
    case Optimizer::kSgd: return "sgd";
    case Optimizer::kSgdMomentum: return "sgd_momentum";
    case Optimizer::kAdam: return "adam";
  }
  return "?";
}

const char* to_string(WeightInit w) noexcept {
  switch (w) {
    case WeightInit::kXavierUniform: return "xavier_uniform";
    case WeightInit::kHeUniform: return "he_uniform";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw InvalidSetting("hidden_activation", "unknown activation '" + std::string(s) + "'");
}

Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::kSgd;
  if (s == "sgd_momentum") return Optimizer::kSgdMomentum;
  if (s == "adam") return Optimizer::kAdam;
  throw InvalidSetting("optimizer", "unknown optimizer '" + std::string(s) + "'");
}

WeightInit parse_weight_init(std::string_view s) {
  if (s == "xavier_uniform") return WeightInit::kXavierUniform;
  if (s == "he_uniform") return WeightInit::kHeUniform;
  throw InvalidSetting("weight_init", "unknown initializer '" + std::string(s) + "'");
}

InvalidSetting::InvalidSetting(std::string field, const std::string& reason)
    : NetworkError("InvalidSetting", field + ": " + reason), field_(std::move(field)) {}

NonFiniteLoss::NonFiniteLoss(int epoch, std::size_t batch)
    : NetworkError("NonFiniteLoss", "loss became non-finite at epoch " +
                                        std::to_string(epoch) + ", batch " +
                                        std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

void validate(const HyperparameterSetting& s) {
  auto require = [](bool ok, const char* field, const char* reason) {
    if (!ok) throw InvalidSetting(field, reason);
  };
  require(s.hidden_layer_count >= 1, "hidden_layer_count", "must be >= 1");
  require(s.hidden_units >= 1, "hidden_units", "must be >= 1");
  // Zero is accepted: it freezes the network at its initialization.
  require(std::isfinite(s.learning_rate) && s.learning_rate >= 0.0, "learning_rate",
          "must be finite and >= 0");
  require(std::isfinite(s.lr_decay) && s.lr_decay >= 0.0, "lr_decay",
          "must be finite and >= 0");
  require(s.epochs >= 1, "epochs", "must be >= 1");
  require(s.batch_size >= 1, "batch_size", "must be >= 1");
  require(s.momentum >= 0.0 && s.momentum < 1.0, "momentum", "must be in [0, 1)");
  require(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0, "dropout_rate",
          "must be in [0, 1)");
  require(std::isfinite(s.l2_lambda) && s.l2_lambda >= 0.0, "l2_lambda",
          "must be finite and >= 0");
  require(s.early_stop_patience >= 0, "early_stop_patience", "must be >= 0");
}

std::size_t NetworkWeights::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.data.size() + l.bias.size();
  return n;
}

bool NetworkWeights::all_finite() const noexcept {
  for (const auto& l : layers) {
    for (double v : l.weights.data) if (!std::isfinite(v)) return false;
    for (double v : l.bias) if (!std::isfinite(v)) return false;
  }
  return true;
}

NetworkWeights init_weights(const TrainConfig& cfg) {
  validate(cfg.setting);
  if (cfg.input_width == 0) throw DimensionMismatch("input width must be positive");

  std::vector<std::size_t> widths{cfg.input_width};
  for (int i = 0; i < cfg.setting.hidden_layer_count; ++i) {
    widths.push_back(static_cast<std::size_t>(cfg.setting.hidden_units));
  }
  widths.push_back(1);

  Rng rng(mix_seed(cfg.seed, kInitStream, 0));
  NetworkWeights w;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const auto fan_in = static_cast<double>(widths[l - 1]);
    const auto fan_out = static_cast<double>(widths[l]);
    const double bound = cfg.setting.weight_init == WeightInit::kXavierUniform
                             ? std::sqrt(6.0 / (fan_in + fan_out))
                             : std::sqrt(6.0 / fan_in);
    Layer layer{Matrix(widths[l], widths[l - 1]), std::vector<double>(widths[l], 0.0)};
    for (double& v : layer.weights.data) v = rng.uniform(-bound, bound);
    w.layers.push_back(std::move(layer));
  }
  return w;
}

double forward(const NetworkWeights& w, Activation activation,
               std::span<const double> x, std::optional<Dropout> dropout) {
  check_input(w, x.size());
  Trace t(w);
  return run_forward(w, activation, x, dropout, t);
}

double l2_penalty(const NetworkWeights& w, double l2_lambda) {
  if (l2_lambda == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& l : w.layers) {
    for (double v : l.weights.data) sum += v * v;
  }
  return 0.5 * l2_lambda * sum;
}

double loss(double p, double y, const NetworkWeights& w, double l2_lambda) {
  return cross_entropy(p, y) + l2_penalty(w, l2_lambda);
}

LossAndGradients backprop_gradients(const NetworkWeights& w, const Batch& batch,
                                    const HyperparameterSetting& setting) {
  return backprop_gradients(w, batch, setting, nullptr);
}

LossAndGradients backprop_gradients(const NetworkWeights& w, const Batch& batch,
                                    const HyperparameterSetting& setting,
                                    Rng* dropout_rng) {
  check_input(w, batch.cols);
  if (batch.size() == 0 || batch.features.size() != batch.size() * batch.cols) {
    throw DimensionMismatch("batch features do not match labels x width");
  }

  LossAndGradients out{0.0, zeros_like(w)};
  Trace t(w);
  std::optional<Dropout> dropout;
  if (dropout_rng != nullptr && setting.dropout_rate > 0.0) {
    dropout = Dropout{setting.dropout_rate, dropout_rng};
  }
  const Activation act = setting.hidden_activation;
  const std::size_t last = w.layers.size() - 1;

  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto x = batch.row(s);
    const double y = batch.labels[s];
    const double p = run_forward(w, act, x, dropout, t);
    out.loss += cross_entropy(p, y);

    t.delta[last][0] = p - y;
    for (std::size_t l = last; l-- > 0;) {
      const auto& next = w.layers[l + 1].weights;
      for (std::size_t i = 0; i < next.cols; ++i) {
        double sum = 0.0;
        for (std::size_t o = 0; o < next.rows; ++o) sum += next(o, i) * t.delta[l + 1][o];
        const double scale = t.scale[l][i];
        const double a = scale == 0.0 ? 0.0 : t.post[l][i] / scale;
        t.delta[l][i] = sum * scale * activate_grad(act, t.pre[l][i], a);
      }
    }

    for (std::size_t l = 0; l <= last; ++l) {
      const std::span<const double> in = l == 0 ? x : std::span<const double>(t.post[l - 1]);
      auto& g = out.gradients.layers[l];
      for (std::size_t o = 0; o < g.weights.rows; ++o) {
        const double d = t.delta[l][o];
        g.bias[o] += d;
        if (d == 0.0) continue;
        double* row = g.weights.data.data() + o * g.weights.cols;
        for (std::size_t i = 0; i < g.weights.cols; ++i) row[i] += d * in[i];
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  out.loss = out.loss * inv_n + l2_penalty(w, setting.l2_lambda);
  for (std::size_t l = 0; l <= last; ++l) {
    auto& g = out.gradients.layers[l];
    const auto& wl = w.layers[l];
    for (std::size_t i = 0; i < g.weights.data.size(); ++i) {
      g.weights.data[i] = g.weights.data[i] * inv_n + setting.l2_lambda * wl.weights.data[i];
    }
    for (double& b : g.bias) b *= inv_n;
  }
  return out;
}

NetworkWeights train(const data::EncodedMatrix& m, const TrainConfig& cfg,
                     const data::EncodedMatrix* holdout) {
  const auto& s = cfg.setting;
  validate(s);
  if (m.rows == 0) throw DimensionMismatch("training matrix is empty");
  if (m.cols != cfg.input_width) {
    throw DimensionMismatch("training matrix width " + std::to_string(m.cols) +
                            " differs from configured input width " +
                            std::to_string(cfg.input_width));
  }
  const bool early_stop = s.early_stop_patience > 0;
  if (early_stop && holdout == nullptr) {
    throw InvalidSetting("early_stop_patience", "early stopping needs a holdout matrix");
  }

  NetworkWeights w = init_weights(cfg);
  OptimizerState state{zeros_like(w), zeros_like(w), 0};

  std::vector<std::size_t> order(m.rows);
  std::vector<double> batch_x;
  std::vector<double> batch_y;
  const auto batch_size = static_cast<std::size_t>(s.batch_size);

  double best_auc = -1.0;
  NetworkWeights best = w;
  int stale_epochs = 0;

  for (int epoch = 0; epoch < s.epochs; ++epoch) {
    const double lr = s.learning_rate / (1.0 + s.lr_decay * epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(cfg.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    Rng dropout_rng(mix_seed(cfg.seed, kDropoutStream, static_cast<std::uint64_t>(epoch)));

    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < m.rows; start += batch_size, ++batch_index) {
      const std::size_t end = std::min(m.rows, start + batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto r = m.row(order[k]);
        batch_x.insert(batch_x.end(), r.begin(), r.end());
        batch_y.push_back(m.labels[order[k]]);
      }
      const Batch batch{batch_x, batch_y, m.cols};
      auto lg = backprop_gradients(w, batch, s, &dropout_rng);
      if (!std::isfinite(lg.loss)) throw NonFiniteLoss(epoch, batch_index);
      apply_update(w, lg.gradients, s, lr, state);
      if (!w.all_finite()) throw NonFiniteLoss(epoch, batch_index);
    }

    if (early_stop) {
      const double auc = holdout_auc(w, s.hidden_activation, *holdout);
      if (auc > best_auc) {
        best_auc = auc;
        best = w;
        stale_epochs = 0;
      } else if (++stale_epochs >= s.early_stop_patience) {
        return best;
      }
    }
  }
  return w;
}

std::vector<double> predict(const NetworkWeights& w, Activation activation,
                            const data::EncodedMatrix& m) {
  check_input(w, m.cols);
  Trace t(w);
  std::vector<double> out;
  out.reserve(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    out.push_back(run_forward(w, activation, m.row(r), std::nullopt, t));
  }
  return out;
}

}  // namespace imedbot::nn
