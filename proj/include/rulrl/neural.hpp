#ifndef RULRL_NEURAL_HPP
#define RULRL_NEURAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rulrl/common.hpp"

namespace rulrl::nn {

enum class OutputHead { Logits, Linear };
enum class Loss { CrossEntropy, SquaredError };

/// Fully connected ReLU network. weights[l] is fan_in x fan_out so a batch
/// with samples in rows propagates as X * W + b.
template <typename Scalar>
struct Mlp {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  OutputHead head = OutputHead::Logits;
  /// Input standardization (x - mean) / scale; empty means identity.
  RowVector input_mean;
  RowVector input_scale;
  std::string init_scheme = "glorot-uniform";
  std::uint64_t init_seed = 0;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  bool standardized() const { return input_mean.size() != 0; }

  Eigen::Index num_parameters() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool parameters_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  /// The same network with parameters converted to another scalar type.
  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> m;
    m.layer_sizes = layer_sizes;
    m.head = head;
    m.init_scheme = init_scheme;
    m.init_seed = init_seed;
    m.input_mean = input_mean.template cast<Other>();
    m.input_scale = input_scale.template cast<Other>();
    for (std::size_t l = 0; l < weights.size(); ++l) {
      m.weights.push_back(weights[l].template cast<Other>());
      m.biases.push_back(biases[l].template cast<Other>());
    }
    return m;
  }

  bool operator==(const Mlp& o) const {
    if (layer_sizes != o.layer_sizes || head != o.head || init_seed != o.init_seed) return false;
    if (input_mean.size() != o.input_mean.size() || input_mean != o.input_mean) return false;
    if (input_scale.size() != o.input_scale.size() || input_scale != o.input_scale) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    }
    return true;
  }
};

using MlpModel = Mlp<double>;

/// Glorot-uniform weights, zero biases.
template <typename Scalar = double>
Mlp<Scalar> mlp_init(const std::vector<int>& layer_sizes, OutputHead head, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ValidationError("mlp_init: need at least input and output layers");
  for (int s : layer_sizes) {
    if (s <= 0) throw ValidationError("mlp_init: layer sizes must be positive");
  }
  Mlp<Scalar> m;
  m.layer_sizes = layer_sizes;
  m.head = head;
  m.init_seed = seed;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    typename Mlp<Scalar>::Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<Scalar>(uniform(rng, -a, a));
    m.weights.push_back(std::move(w));
    m.biases.push_back(Mlp<Scalar>::Vector::Zero(fan_out));
  }
  return m;
}

template <typename Scalar>
typename Mlp<Scalar>::Matrix standardize(const Mlp<Scalar>& model, const typename Mlp<Scalar>::Matrix& inputs) {
  if (!model.standardized()) return inputs;
  return (inputs.rowwise() - model.input_mean).array().rowwise() / model.input_scale.array();
}

/// Batch forward pass; rows of `inputs` are samples. Logit heads return raw logits.
template <typename Scalar>
typename Mlp<Scalar>::Matrix forward_batch(const Mlp<Scalar>& model, const typename Mlp<Scalar>::Matrix& inputs) {
  if (inputs.cols() != model.input_size()) {
    throw ValidationError("forward: expected " + std::to_string(model.input_size()) + " features, got " +
                          std::to_string(inputs.cols()));
  }
  typename Mlp<Scalar>::Matrix a = standardize(model, inputs);
  for (int l = 0; l < model.num_layers(); ++l) {
    typename Mlp<Scalar>::Matrix z = (a * model.weights[l]).rowwise() + model.biases[l].transpose();
    if (l + 1 < model.num_layers()) z = z.cwiseMax(Scalar(0));
    a = std::move(z);
  }
  return a;
}

template <typename Scalar>
typename Mlp<Scalar>::Vector forward(const Mlp<Scalar>& model, const typename Mlp<Scalar>::Vector& x) {
  typename Mlp<Scalar>::Matrix row = x.transpose();
  return forward_batch(model, row).row(0).transpose();
}

/// Numerically stable softmax of each row.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_rows(
    const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> p =
      (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

/// Inputs in rows. For CrossEntropy `targets` is n x 1 holding class
/// indices; for SquaredError it is n x outputs. Per-sample weights are
/// normalized within each batch, so scaling all weights changes nothing.
template <typename Scalar>
struct TrainingSet {
  typename Mlp<Scalar>::Matrix inputs;
  typename Mlp<Scalar>::Matrix targets;
  typename Mlp<Scalar>::Vector weights;  // empty means uniform

  Eigen::Index size() const { return inputs.rows(); }

  template <typename Other>
  TrainingSet<Other> cast() const {
    return {inputs.template cast<Other>(), targets.template cast<Other>(), weights.template cast<Other>()};
  }

  TrainingSet subset(std::span<const Eigen::Index> rows) const {
    TrainingSet s;
    s.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
    s.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
    if (weights.size()) s.weights.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      s.inputs.row(r) = inputs.row(rows[i]);
      s.targets.row(r) = targets.row(rows[i]);
      if (weights.size()) s.weights(r) = weights(rows[i]);
    }
    return s;
  }
};

template <typename Scalar>
struct Gradients {
  std::vector<typename Mlp<Scalar>::Matrix> weights;
  std::vector<typename Mlp<Scalar>::Vector> biases;

  static Gradients zeros_like(const Mlp<Scalar>& m) {
    Gradients g;
    for (int l = 0; l < m.num_layers(); ++l) {
      g.weights.push_back(Mlp<Scalar>::Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
      g.biases.push_back(Mlp<Scalar>::Vector::Zero(m.biases[l].size()));
    }
    return g;
  }
};

namespace detail {

template <typename Scalar>
typename Mlp<Scalar>::Vector normalized_weights(const TrainingSet<Scalar>& batch) {
  const Eigen::Index n = batch.size();
  typename Mlp<Scalar>::Vector w =
      batch.weights.size() ? batch.weights : Mlp<Scalar>::Vector::Ones(n);
  const Scalar total = w.sum();
  if (!(total > Scalar(0))) throw ValidationError("training batch has zero total weight");
  return w / total;
}

template <typename Scalar>
void check_targets(const Mlp<Scalar>& model, const TrainingSet<Scalar>& batch, Loss loss) {
  if (batch.size() == 0) throw ValidationError("empty training batch");
  if (batch.targets.rows() != batch.size()) throw ValidationError("targets do not match inputs");
  if (loss == Loss::CrossEntropy) {
    if (batch.targets.cols() != 1) throw ValidationError("cross-entropy targets must be one class index per row");
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      const Scalar c = batch.targets(i, 0);
      if (c < 0 || c >= model.output_size() || c != std::floor(c)) {
        throw ValidationError("class index out of range");
      }
    }
  } else if (batch.targets.cols() != model.output_size()) {
    throw ValidationError("regression targets must have one column per output");
  }
}

/// Loss of already-computed outputs, plus d(loss)/d(outputs) when requested.
template <typename Scalar>
Scalar output_loss(const typename Mlp<Scalar>::Matrix& out, const TrainingSet<Scalar>& batch, Loss loss,
                   const typename Mlp<Scalar>::Vector& w, typename Mlp<Scalar>::Matrix* d_out) {
  Scalar total = 0;
  if (loss == Loss::CrossEntropy) {
    const typename Mlp<Scalar>::Matrix p = softmax_rows(out);
    const typename Mlp<Scalar>::Vector row_max = out.rowwise().maxCoeff();
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const auto y = static_cast<Eigen::Index>(batch.targets(i, 0));
      const Scalar log_z = row_max(i) + std::log((out.row(i).array() - row_max(i)).exp().sum());
      total += w(i) * (log_z - out(i, y));
    }
    if (d_out) {
      *d_out = p;
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        (*d_out)(i, static_cast<Eigen::Index>(batch.targets(i, 0))) -= Scalar(1);
      }
      d_out->array().colwise() *= w.array();
    }
  } else {
    const typename Mlp<Scalar>::Matrix diff = out - batch.targets;
    const Scalar k = Scalar(out.cols());
    total = (diff.array().square().rowwise().sum().matrix().array() * w.array()).sum() / k;
    if (d_out) {
      *d_out = Scalar(2) / k * diff;
      d_out->array().colwise() *= w.array();
    }
  }
  return total;
}

}  // namespace detail

/// Weighted mean loss over the batch.
template <typename Scalar>
Scalar batch_loss(const Mlp<Scalar>& model, const TrainingSet<Scalar>& batch, Loss loss) {
  detail::check_targets(model, batch, loss);
  const auto w = detail::normalized_weights(batch);
  return detail::output_loss<Scalar>(forward_batch(model, batch.inputs), batch, loss, w, nullptr);
}

/// Backpropagation: returns the batch loss and fills `grads`.
template <typename Scalar>
Scalar loss_and_gradient(const Mlp<Scalar>& model, const TrainingSet<Scalar>& batch, Loss loss,
                         Gradients<Scalar>& grads) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  detail::check_targets(model, batch, loss);
  if (batch.inputs.cols() != model.input_size()) throw ValidationError("input width does not match model");
  const auto w = detail::normalized_weights(batch);
  const int layers = model.num_layers();
  std::vector<Matrix> acts;  // acts[l] is the input to layer l
  acts.reserve(static_cast<std::size_t>(layers));
  acts.push_back(standardize(model, batch.inputs));
  Matrix out;
  for (int l = 0; l < layers; ++l) {
    Matrix z = (acts.back() * model.weights[l]).rowwise() + model.biases[l].transpose();
    if (l + 1 < layers) {
      acts.push_back(z.cwiseMax(Scalar(0)));
    } else {
      out = std::move(z);
    }
  }
  Matrix delta;
  const Scalar value = detail::output_loss<Scalar>(out, batch, loss, w, &delta);
  if (grads.weights.size() != static_cast<std::size_t>(layers)) grads = Gradients<Scalar>::zeros_like(model);
  for (int l = layers - 1; l >= 0; --l) {
    const auto& a = acts[static_cast<std::size_t>(l)];
    grads.weights[l].noalias() = a.transpose() * delta;
    grads.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix back = delta * model.weights[l].transpose();
      delta = (a.array() > Scalar(0)).select(back, Scalar(0));
    }
  }
  return value;
}

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 64;
  int epochs = 50;
  std::uint64_t seed = 0;
  /// Fit per-feature mean/std on the training inputs and store them in the model.
  bool standardize = true;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ValidationError("train: learning_rate must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw ValidationError("train: Adam betas must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw ValidationError("train: epsilon must be positive");
    if (batch_size < 1 || epochs < 0) throw ValidationError("train: batch_size >= 1 and epochs >= 0 required");
  }
};

/// Adam with bias correction.
template <typename Scalar>
class Adam {
 public:
  Adam(const Mlp<Scalar>& model, const TrainConfig& config)
      : config_(config), m_(Gradients<Scalar>::zeros_like(model)), v_(Gradients<Scalar>::zeros_like(model)) {}

  void step(Mlp<Scalar>& model, const Gradients<Scalar>& g) {
    ++t_;
    const Scalar b1 = Scalar(config_.beta1), b2 = Scalar(config_.beta2);
    const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(t_));
    const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(t_));
    const Scalar lr = Scalar(config_.learning_rate), eps = Scalar(config_.epsilon);
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
      m = b1 * m + (Scalar(1) - b1) * grad;
      v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
      param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (int l = 0; l < model.num_layers(); ++l) {
      update(model.weights[l], g.weights[l], m_.weights[l], v_.weights[l]);
      update(model.biases[l], g.biases[l], m_.biases[l], v_.biases[l]);
    }
  }

  long steps() const { return t_; }

 private:
  TrainConfig config_;
  Gradients<Scalar> m_, v_;
  long t_ = 0;
};

/// Column means and standard deviations; near-constant columns get scale 1.
template <typename Scalar>
void fit_standardization(Mlp<Scalar>& model, const typename Mlp<Scalar>::Matrix& inputs) {
  model.input_mean = inputs.colwise().mean();
  const typename Mlp<Scalar>::Matrix centered = inputs.rowwise() - model.input_mean;
  model.input_scale = (centered.array().square().colwise().sum() / Scalar(std::max<Eigen::Index>(1, inputs.rows())))
                          .sqrt()
                          .matrix();
  for (Eigen::Index j = 0; j < model.input_scale.size(); ++j) {
    if (!(model.input_scale(j) > Scalar(1e-12))) model.input_scale(j) = Scalar(1);
  }
}

template <typename Scalar>
struct TrainResult {
  Mlp<Scalar> model;
  std::vector<Scalar> epoch_losses;
};

/// Mini-batch Adam, reshuffled every epoch from a seeded stream. The epoch
/// loss is the weight-averaged batch loss seen during that epoch.
template <typename Scalar>
TrainResult<Scalar> train(Mlp<Scalar> model, const TrainingSet<Scalar>& data, const TrainConfig& config, Loss loss) {
  config.validate();
  if (data.size() == 0) throw ValidationError("train: no samples");
  detail::check_targets(model, data, loss);
  if ((loss == Loss::CrossEntropy) != (model.head == OutputHead::Logits)) {
    throw ValidationError("train: loss does not match output head");
  }
  if (config.standardize) fit_standardization(model, data.inputs);

  TrainResult<Scalar> result;
  Adam<Scalar> adam(model, config);
  Gradients<Scalar> grads = Gradients<Scalar>::zeros_like(model);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto weights = data.weights.size() ? data.weights : Mlp<Scalar>::Vector::Ones(data.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    Scalar weighted = 0, weight_total = 0;
    int batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const Eigen::Index> rows(order.data() + start, end - start);
      const TrainingSet<Scalar> batch = data.subset(rows);
      const Scalar value = loss_and_gradient(model, batch, loss, grads);
      if (!std::isfinite(static_cast<double>(value))) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      adam.step(model, grads);
      Scalar bw = 0;
      for (Eigen::Index r : rows) bw += weights(r);
      weighted += value * bw;
      weight_total += bw;
      ++batch_no;
    }
    if (!model.parameters_finite()) {
      throw NumericError("training diverged: non-finite parameters after epoch " + std::to_string(epoch));
    }
    result.epoch_losses.push_back(weighted / weight_total);
  }
  result.model = std::move(model);
  return result;
}

/// Max relative error between backprop and central finite differences over
/// every parameter: |g_bp - g_fd| / max(1e-8, |g_bp| + |g_fd|).
///
/// Nudging weight (i, j) or bias j of layer l moves only column j of that
/// layer's pre-activation, so each probe patches that column of the cached
/// pre-activation and re-runs the later layers instead of the whole network.
template <typename Scalar>
double grad_check(const Mlp<Scalar>& model, const TrainingSet<Scalar>& batch, Loss loss, double step = 1e-5) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  Gradients<Scalar> analytic;
  loss_and_gradient(model, batch, loss, analytic);
  const auto w = detail::normalized_weights(batch);
  const int layers = model.num_layers();

  // inputs[l] feeds layer l; pre[l] is its pre-activation.
  std::vector<Matrix> inputs{standardize(model, batch.inputs)}, pre;
  for (int l = 0; l < layers; ++l) {
    pre.push_back((inputs.back() * model.weights[l]).rowwise() + model.biases[l].transpose());
    if (l + 1 < layers) inputs.push_back(pre.back().cwiseMax(Scalar(0)));
  }
  auto loss_from = [&](int l, Matrix z) {
    for (int m = l + 1; m < layers; ++m) z = (z.cwiseMax(Scalar(0)) * model.weights[m]).rowwise() + model.biases[m].transpose();
    return detail::output_loss<Scalar>(z, batch, loss, w, nullptr);
  };

  const Scalar h = Scalar(step);
  double worst = 0.0;
  Matrix z;
  // `column` is d(pre[l].col(j)) / d(parameter).
  auto compare = [&](int l, Eigen::Index j, const auto& column, Scalar bp) {
    z = pre[static_cast<std::size_t>(l)];
    z.col(j) = pre[static_cast<std::size_t>(l)].col(j) + h * column;
    const Scalar plus = loss_from(l, z);
    z.col(j) = pre[static_cast<std::size_t>(l)].col(j) - h * column;
    const Scalar minus = loss_from(l, z);
    const Scalar fd = (plus - minus) / Scalar(2 * step);
    const Scalar err = std::abs(bp - fd) / std::max(Scalar(1e-8), std::abs(bp) + std::abs(fd));
    worst = std::max(worst, static_cast<double>(err));
  };
  const typename Mlp<Scalar>::Vector ones = Mlp<Scalar>::Vector::Ones(batch.size());
  for (int l = 0; l < layers; ++l) {
    const Matrix& a = inputs[static_cast<std::size_t>(l)];
    for (Eigen::Index j = 0; j < model.weights[l].cols(); ++j) {
      for (Eigen::Index i = 0; i < model.weights[l].rows(); ++i) compare(l, j, a.col(i), analytic.weights[l](i, j));
      compare(l, j, ones, analytic.biases[l](j));
    }
  }
  return worst;
}

/// Coefficient of determination about the target mean.
double r_squared(std::span<const double> predictions, std::span<const double> targets);

/// Versioned text format. `meta` carries role-specific key/value pairs
/// (single tokens) written into the header.
struct ModelFile {
  MlpModel model;
  std::string role;
  std::map<std::string, std::string> meta;
};

void write_model(std::ostream& out, const ModelFile& file);
ModelFile read_model(std::istream& in);
void save_model(const std::string& path, const ModelFile& file);
ModelFile load_model(const std::string& path);

}  // namespace rulrl::nn

#endif  // RULRL_NEURAL_HPP
