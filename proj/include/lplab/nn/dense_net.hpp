#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lplab/core/error.hpp"
#include "lplab/core/rng.hpp"

namespace lplab::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation : std::uint8_t { identity = 0, relu = 1, sigmoid = 2, tanh = 3 };
enum class Mode { train, eval };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "unknown";
}

/// Per-feature batch normalization applied between the affine map and the
/// activation. Train mode normalizes with batch statistics and updates the
/// running estimates; eval mode uses the running estimates only.
struct BatchNorm {
  static constexpr double momentum = 0.9;
  static constexpr double epsilon = 1e-5;

  Vector scale;
  Vector shift;
  Vector running_mean;
  Vector running_var;

  static BatchNorm identity(int dim) {
    return {Vector::Ones(dim), Vector::Zero(dim), Vector::Zero(dim), Vector::Ones(dim)};
  }
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
  Activation activation = Activation::identity;
  std::optional<BatchNorm> batch_norm;

  [[nodiscard]] int in_dim() const { return static_cast<int>(weight.cols()); }
  [[nodiscard]] int out_dim() const { return static_cast<int>(weight.rows()); }
};

struct LayerSpec {
  int out_dim;
  Activation activation = Activation::identity;
  bool batch_norm = false;
};

/// Intermediates of one forward pass, consumed by DenseNet::backward.
struct Tape {
  struct Layer {
    Matrix input;
    Matrix normalized;  // x-hat of batch norm (train mode only)
    Vector inv_std;
    bool batch_stats = false;
    Matrix output;      // post-activation
  };
  std::vector<Layer> layers;

  [[nodiscard]] bool empty() const { return layers.empty(); }
  [[nodiscard]] const Matrix& output() const { return layers.back().output; }
};

struct LayerGradient {
  Matrix weight;
  Vector bias;
  Vector bn_scale;
  Vector bn_shift;
};

/// Gradient of a scalar loss with respect to every trainable parameter,
/// plus the gradient with respect to the network input.
struct Gradients {
  std::vector<LayerGradient> layers;
  Matrix input;

  /// Flat views in the same order as DenseNet::parameters().
  [[nodiscard]] std::vector<std::span<const double>> views() const {
    std::vector<std::span<const double>> out;
    for (const auto& l : layers) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
      if (l.bn_scale.size() > 0) {
        out.emplace_back(l.bn_scale.data(), static_cast<std::size_t>(l.bn_scale.size()));
        out.emplace_back(l.bn_shift.data(), static_cast<std::size_t>(l.bn_shift.size()));
      }
    }
    return out;
  }

  Gradients& operator+=(const Gradients& other) {
    if (other.layers.size() != layers.size()) throw DimensionError("gradient sets of different networks");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += other.layers[i].weight;
      layers[i].bias += other.layers[i].bias;
      if (layers[i].bn_scale.size() > 0) {
        layers[i].bn_scale += other.layers[i].bn_scale;
        layers[i].bn_shift += other.layers[i].bn_shift;
      }
    }
    return *this;
  }
};

struct ParamView {
  std::string name;
  std::span<double> values;
};

namespace detail {

inline void apply_activation(Matrix& m, Activation a) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: m = m.cwiseMax(0.0); break;
    case Activation::sigmoid: m = m.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); }); break;
    case Activation::tanh: m = m.array().tanh().matrix(); break;
  }
}

// d(act)/d(pre) expressed through the activation output.
inline Matrix activation_grad(const Matrix& out, const Matrix& upstream, Activation a) {
  switch (a) {
    case Activation::identity: return upstream;
    case Activation::relu: return (out.array() > 0.0).select(upstream, 0.0);
    case Activation::sigmoid: return (upstream.array() * out.array() * (1.0 - out.array())).matrix();
    case Activation::tanh: return (upstream.array() * (1.0 - out.array().square())).matrix();
  }
  return upstream;
}

}  // namespace detail

/// Feed-forward chain of affine layers with optional batch normalization.
class DenseNet {
 public:
  DenseNet() = default;

  /// Weights and biases uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)).
  DenseNet(int input_dim, const std::vector<LayerSpec>& specs, Rng& rng) {
    int in = input_dim;
    for (const auto& s : specs) {
      if (in <= 0 || s.out_dim <= 0) throw DimensionError("layer dimensions must be positive");
      DenseLayer layer;
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      layer.weight = Matrix(s.out_dim, in);
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-bound, bound);
      layer.bias = Vector(s.out_dim);
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-bound, bound);
      layer.activation = s.activation;
      if (s.batch_norm) layer.batch_norm = BatchNorm::identity(s.out_dim);
      layers_.push_back(std::move(layer));
      in = s.out_dim;
    }
  }

  explicit DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

  [[nodiscard]] int input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  [[nodiscard]] int output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
  [[nodiscard]] std::vector<DenseLayer>& layers() { return layers_; }
  [[nodiscard]] Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  [[nodiscard]] bool has_batch_norm() const {
    for (const auto& l : layers_)
      if (l.batch_norm) return true;
    return false;
  }

  /// Forward pass that records a tape. In train mode batch-norm layers use
  /// batch statistics and update their running estimates.
  Tape forward(const Matrix& batch) {
    check_input(batch);
    Tape tape;
    tape.layers.reserve(layers_.size());
    const Matrix* x = &batch;
    for (auto& layer : layers_) {
      Tape::Layer rec;
      rec.input = *x;
      Matrix z = (*x) * layer.weight.transpose();
      z.rowwise() += layer.bias.transpose();
      if (layer.batch_norm) {
        auto& bn = *layer.batch_norm;
        if (mode_ == Mode::train) {
          const auto b = static_cast<double>(z.rows());
          const RowVector mean = z.colwise().mean();
          z.rowwise() -= mean;
          const RowVector var = z.array().square().colwise().sum().matrix() / b;
          rec.inv_std = (var.array() + BatchNorm::epsilon).rsqrt().matrix().transpose();
          z = z * rec.inv_std.asDiagonal();
          rec.normalized = z;
          rec.batch_stats = true;
          bn.running_mean = BatchNorm::momentum * bn.running_mean + (1.0 - BatchNorm::momentum) * mean.transpose();
          bn.running_var = BatchNorm::momentum * bn.running_var +
                           (1.0 - BatchNorm::momentum) * (var.transpose() * (b / (b - 1.0)));
        } else {
          apply_running_stats(bn, z);
        }
        z = z * bn.scale.asDiagonal();
        z.rowwise() += bn.shift.transpose();
      }
      detail::apply_activation(z, layer.activation);
      rec.output = std::move(z);
      tape.layers.push_back(std::move(rec));
      x = &tape.layers.back().output;
    }
    return tape;
  }

  /// Eval-mode forward without a tape. Pure: never touches running statistics.
  [[nodiscard]] Matrix infer(const Matrix& batch) const {
    check_input(batch, /*train=*/false);
    Matrix x = batch;
    for (const auto& layer : layers_) {
      Matrix z = x * layer.weight.transpose();
      z.rowwise() += layer.bias.transpose();
      if (layer.batch_norm) {
        apply_running_stats(*layer.batch_norm, z);
        z = z * layer.batch_norm->scale.asDiagonal();
        z.rowwise() += layer.batch_norm->shift.transpose();
      }
      detail::apply_activation(z, layer.activation);
      x = std::move(z);
    }
    return x;
  }

  /// Reverse pass for the loss whose gradient w.r.t. the output is `output_grad`.
  [[nodiscard]] Gradients backward(const Tape& tape, const Matrix& output_grad) const {
    if (tape.empty() || tape.layers.size() != layers_.size()) {
      throw Error("backward called without a matching forward tape");
    }
    const auto& last = tape.layers.back().output;
    if (output_grad.rows() != last.rows() || output_grad.cols() != last.cols()) {
      throw DimensionError("output gradient shape does not match the recorded forward pass");
    }
    Gradients g;
    g.layers.resize(layers_.size());
    Matrix upstream = output_grad;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& layer = layers_[k];
      const auto& rec = tape.layers[k];
      auto& lg = g.layers[k];
      Matrix dz = detail::activation_grad(rec.output, upstream, layer.activation);
      if (layer.batch_norm) {
        const auto& bn = *layer.batch_norm;
        if (rec.batch_stats) {
          lg.bn_scale = (dz.array() * rec.normalized.array()).colwise().sum().transpose();
          lg.bn_shift = dz.colwise().sum().transpose();
          const Matrix dxhat = dz * bn.scale.asDiagonal();
          const auto b = static_cast<double>(dz.rows());
          const RowVector sum_dxhat = dxhat.colwise().sum();
          const RowVector sum_dxhat_xhat = (dxhat.array() * rec.normalized.array()).colwise().sum();
          Matrix t = b * dxhat;
          t.rowwise() -= sum_dxhat;
          t -= rec.normalized * sum_dxhat_xhat.asDiagonal();
          dz = t * (rec.inv_std / b).asDiagonal();
        } else {
          const Vector inv = (bn.running_var.array() + BatchNorm::epsilon).rsqrt().matrix();
          // x-hat is not stored in eval mode; recompute from the layer input.
          Matrix z = rec.input * layer.weight.transpose();
          z.rowwise() += (layer.bias - bn.running_mean).transpose();
          const Matrix xhat = z * inv.asDiagonal();
          lg.bn_scale = (dz.array() * xhat.array()).colwise().sum().transpose();
          lg.bn_shift = dz.colwise().sum().transpose();
          dz = dz * (bn.scale.array() * inv.array()).matrix().asDiagonal();
        }
      }
      lg.weight = dz.transpose() * rec.input;
      lg.bias = dz.colwise().sum().transpose();
      upstream = dz * layer.weight;
    }
    g.input = std::move(upstream);
    return g;
  }

  /// Trainable parameters: per layer weight, bias, then batch-norm scale and shift.
  [[nodiscard]] std::vector<ParamView> parameters() {
    std::vector<ParamView> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& l = layers_[i];
      const std::string p = "layer" + std::to_string(i) + ".";
      out.push_back({p + "weight", {l.weight.data(), static_cast<std::size_t>(l.weight.size())}});
      out.push_back({p + "bias", {l.bias.data(), static_cast<std::size_t>(l.bias.size())}});
      if (l.batch_norm) {
        out.push_back({p + "bn_scale", {l.batch_norm->scale.data(), static_cast<std::size_t>(l.batch_norm->scale.size())}});
        out.push_back({p + "bn_shift", {l.batch_norm->shift.data(), static_cast<std::size_t>(l.batch_norm->shift.size())}});
      }
    }
    return out;
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
      n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
      if (l.batch_norm) n += static_cast<std::size_t>(2 * l.batch_norm->scale.size());
    }
    return n;
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
      if (l.batch_norm && (!l.batch_norm->scale.allFinite() || !l.batch_norm->shift.allFinite() ||
                           !l.batch_norm->running_mean.allFinite() || !l.batch_norm->running_var.allFinite()))
        return false;
    }
    return true;
  }

  void set_zero() {
    for (auto& l : layers_) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }

 private:
  static void apply_running_stats(const BatchNorm& bn, Matrix& z) {
    z.rowwise() -= bn.running_mean.transpose();
    z = z * (bn.running_var.array() + BatchNorm::epsilon).rsqrt().matrix().asDiagonal();
  }

  void check_input(const Matrix& batch, bool train_semantics = true) const {
    if (layers_.empty()) throw DimensionError("network has no layers");
    if (batch.rows() < 1) throw DimensionError("empty batch");
    if (batch.cols() != input_dim()) {
      throw DimensionError("layer0: expected input width " + std::to_string(input_dim()) + ", got " +
                           std::to_string(batch.cols()));
    }
    if (train_semantics && mode_ == Mode::train && batch.rows() < 2 && has_batch_norm()) {
      throw DimensionError("batch norm in train mode needs a batch of at least 2 rows");
    }
  }

  void validate() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.size() != l.weight.rows())
        throw DimensionError("layer" + std::to_string(i) + ": bias length does not match weight rows");
      if (i > 0 && l.in_dim() != layers_[i - 1].out_dim())
        throw DimensionError("layer" + std::to_string(i) + ": input width " + std::to_string(l.in_dim()) +
                             " does not match previous output " + std::to_string(layers_[i - 1].out_dim()));
      if (l.batch_norm && (l.batch_norm->scale.size() != l.weight.rows() ||
                           l.batch_norm->running_var.size() != l.weight.rows()))
        throw DimensionError("layer" + std::to_string(i) + ": batch-norm width mismatch");
    }
  }

  std::vector<DenseLayer> layers_;
  Mode mode_ = Mode::train;
};

}  // namespace lplab::nn
