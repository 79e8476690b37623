#pragma once

#include <concepts>
#include <string>
#include <vector>

#include "lplab/arm/dataset.hpp"
#include "lplab/core/rng.hpp"
#include "lplab/nn/dense_net.hpp"

namespace lplab::genmod {

using nn::Matrix;
using nn::Vector;
using arm::Trajectory;

enum class ModelKind { vae, infogan };
enum class Prior { standard_normal, uniform };

inline std::string to_string(ModelKind k) { return k == ModelKind::vae ? "vae" : "infogan"; }
inline std::string to_string(Prior p) { return p == Prior::standard_normal ? "standard_normal" : "uniform"; }

inline ModelKind parse_kind(const std::string& s) {
  if (s == "vae") return ModelKind::vae;
  if (s == "infogan" || s == "gan") return ModelKind::infogan;
  throw InvalidArgument("unknown model kind '" + s + "'");
}

inline Prior parse_prior(const std::string& s) {
  if (s == "standard_normal") return Prior::standard_normal;
  if (s == "uniform") return Prior::uniform;
  throw InvalidArgument("unknown prior '" + s + "'");
}

inline Prior prior_for(ModelKind k) { return k == ModelKind::vae ? Prior::standard_normal : Prior::uniform; }

/// iid draws from N(0, I) or U(-1, 1)^dim, one latent per row.
inline Matrix sample_latents(Prior prior, int dim, std::size_t count, Rng& rng) {
  Matrix z(static_cast<Eigen::Index>(count), dim);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      z(i, j) = prior == Prior::standard_normal ? rng.normal() : rng.uniform(-1.0, 1.0);
  return z;
}

/// Anything that maps latent rows to trajectories and can sample its prior.
template <class G>
concept LatentGenerator = requires(const G& g, const Matrix& z, Rng& rng, std::size_t n) {
  { g.latent_dim() } -> std::convertible_to<int>;
  { g.prior() } -> std::same_as<Prior>;
  { g.sample_prior(n, rng) } -> std::same_as<Matrix>;
  { g.decode_batch(z) } -> std::same_as<std::vector<Trajectory>>;
};

/// Per-joint standardization of velocities, shared by every time step.
struct ChannelNormalization {
  Vector mean;
  Vector stddev;

  static ChannelNormalization identity(int joints) { return {Vector::Zero(joints), Vector::Ones(joints)}; }

  static ChannelNormalization fit(const arm::Dataset& ds) {
    if (ds.empty()) throw InvalidArgument("normalization: empty dataset");
    ChannelNormalization n{Vector::Zero(ds.M), Vector::Zero(ds.M)};
    const double count = static_cast<double>(ds.size()) * ds.T;
    for (const auto& r : ds.records) n.mean += r.trajectory.velocities.colwise().sum().transpose();
    n.mean /= count;
    for (const auto& r : ds.records)
      n.stddev += (r.trajectory.velocities.rowwise() - n.mean.transpose()).array().square().colwise().sum().matrix().transpose();
    n.stddev = (n.stddev / count).cwiseSqrt();
    for (Eigen::Index j = 0; j < n.stddev.size(); ++j)
      if (!(n.stddev(j) > 1e-12)) n.stddev(j) = 1.0;
    return n;
  }

  /// Applies to row-major flattened trajectories (width T*M).
  [[nodiscard]] Matrix normalize(const Matrix& flat) const {
    Matrix out = flat;
    const auto M = mean.size();
    for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c) = (out.col(c).array() - mean(c % M)) / stddev(c % M);
    return out;
  }

  [[nodiscard]] Matrix denormalize(const Matrix& flat) const {
    Matrix out = flat;
    const auto M = mean.size();
    for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c) = out.col(c).array() * stddev(c % M) + mean(c % M);
    return out;
  }
};

/// Hidden widths of the generator: 128, 256, 512 scaled down by `width_divisor`.
inline std::vector<nn::LayerSpec> generator_layers(int output_dim, int width_divisor) {
  using nn::Activation;
  return {{128 / width_divisor, Activation::relu, true},
          {256 / width_divisor, Activation::relu, true},
          {512 / width_divisor, Activation::relu, true},
          {output_dim, Activation::identity, false}};
}

/// g(alpha): latent vector to trajectory through a batch-normalized MLP.
class GenerativeModel {
 public:
  GenerativeModel() = default;

  GenerativeModel(ModelKind kind, int latent_dim, int T, int M, double velocity_limit, int width_divisor, Rng& rng)
      : kind_(kind),
        latent_dim_(latent_dim),
        T_(T),
        M_(M),
        velocity_limit_(velocity_limit),
        width_divisor_(width_divisor),
        normalization_(ChannelNormalization::identity(M)),
        decoder_(latent_dim, generator_layers(T * M, width_divisor), rng) {
    if (latent_dim < 1) throw InvalidArgument("latent dimension must be positive");
  }

  GenerativeModel(ModelKind kind, int T, int M, double velocity_limit, int width_divisor,
                  ChannelNormalization norm, nn::DenseNet decoder)
      : kind_(kind),
        latent_dim_(decoder.input_dim()),
        T_(T),
        M_(M),
        velocity_limit_(velocity_limit),
        width_divisor_(width_divisor),
        normalization_(std::move(norm)),
        decoder_(std::move(decoder)) {
    if (decoder_.output_dim() != T * M) throw DimensionError("decoder output does not match T*M");
  }

  [[nodiscard]] ModelKind kind() const { return kind_; }
  [[nodiscard]] Prior prior() const { return prior_for(kind_); }
  [[nodiscard]] int latent_dim() const { return latent_dim_; }
  [[nodiscard]] int steps() const { return T_; }
  [[nodiscard]] int joints() const { return M_; }
  [[nodiscard]] double velocity_limit() const { return velocity_limit_; }
  [[nodiscard]] int width_divisor() const { return width_divisor_; }
  [[nodiscard]] const ChannelNormalization& normalization() const { return normalization_; }
  void set_normalization(ChannelNormalization n) { normalization_ = std::move(n); }
  [[nodiscard]] nn::DenseNet& decoder() { return decoder_; }
  [[nodiscard]] const nn::DenseNet& decoder() const { return decoder_; }

  [[nodiscard]] Matrix sample_prior(std::size_t count, Rng& rng) const {
    return sample_latents(prior(), latent_dim_, count, rng);
  }

  /// Eval-mode network output in normalized units (no clamping).
  [[nodiscard]] Matrix decode_normalized(const Matrix& latents) const {
    if (latents.cols() != latent_dim_)
      throw DimensionError("decode: expected latent width " + std::to_string(latent_dim_) + ", got " +
                           std::to_string(latents.cols()));
    return decoder_.infer(latents);
  }

  /// De-normalized and clamped to the velocity limit; row-major flattened.
  [[nodiscard]] Matrix decode_flat(const Matrix& latents) const {
    Matrix v = normalization_.denormalize(decode_normalized(latents));
    return v.cwiseMax(-velocity_limit_).cwiseMin(velocity_limit_);
  }

  [[nodiscard]] std::vector<Trajectory> decode_batch(const Matrix& latents) const {
    const Matrix flat = decode_flat(latents);
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(flat.rows()));
    for (Eigen::Index i = 0; i < flat.rows(); ++i) out.push_back(Trajectory::unflatten(flat.row(i), T_, M_));
    return out;
  }

  [[nodiscard]] Trajectory decode(const Vector& latent) const {
    if (latent.size() != latent_dim_)
      throw DimensionError("decode: expected latent of size " + std::to_string(latent_dim_));
    return decode_batch(latent.transpose()).front();
  }

 private:
  ModelKind kind_ = ModelKind::vae;
  int latent_dim_ = 0;
  int T_ = 0;
  int M_ = 0;
  double velocity_limit_ = 0.0;
  int width_divisor_ = 1;
  ChannelNormalization normalization_;
  nn::DenseNet decoder_;
};

static_assert(LatentGenerator<GenerativeModel>);

}  // namespace lplab::genmod
