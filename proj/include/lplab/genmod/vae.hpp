#pragma once

#include <numeric>

#include "lplab/genmod/generative_model.hpp"
#include "lplab/nn/adam.hpp"
#include "lplab/nn/gaussian.hpp"

namespace lplab::genmod {

struct VaeConfig {
  int latent_dim = 2;
  double kl_threshold = 2.5;
  int epochs = 2000;
  int batch_size = 128;
  double learning_rate = 1e-4;
  double beta_step = 2e-4;
  int width_divisor = 4;
};

struct VaeEpochLog {
  int epoch = 0;
  double beta = 0.0;
  double kl = 0.0;
  double reconstruction = 0.0;
  double total = 0.0;
};

/// Encoder plus the KL-threshold annealing schedule of the beta weight.
struct VaeTrainState {
  nn::DenseNet encoder;
  double beta = 0.0;
  double kl_threshold = 0.0;
  bool beta_frozen = false;
  bool kl_exceeded = false;  // KL has reached the threshold at least once
  int epoch = 0;
  std::vector<VaeEpochLog> history;
};

/// Encoder mirrors the generator: T*M -> 512 -> 256 -> 128 -> [mean | log_std].
inline std::vector<nn::LayerSpec> encoder_layers(int latent_dim, int width_divisor) {
  using nn::Activation;
  return {{512 / width_divisor, Activation::relu, true},
          {256 / width_divisor, Activation::relu, true},
          {128 / width_divisor, Activation::relu, true},
          {2 * latent_dim, Activation::identity, false}};
}

struct VaeLoss {
  double reconstruction = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct VaeLossGradients {
  VaeLoss loss;
  nn::Gradients encoder;
  nn::Gradients decoder;
};

namespace detail {

struct VaeForward {
  nn::Tape enc_tape, dec_tape;
  nn::GaussianBatch posterior;
  Matrix latent;
  VaeLoss loss;
};

inline VaeForward vae_forward(nn::DenseNet& encoder, nn::DenseNet& decoder, const Matrix& batch,
                              const Matrix& noise, double beta) {
  VaeForward f;
  f.enc_tape = encoder.forward(batch);
  const int dim = decoder.input_dim();
  f.posterior = nn::split_gaussian(f.enc_tape.output(), dim);
  if (noise.rows() != batch.rows() || noise.cols() != dim) throw DimensionError("vae: noise shape mismatch");
  f.latent = f.posterior.mean + (f.posterior.log_std.array().exp() * noise.array()).matrix();
  f.dec_tape = decoder.forward(f.latent);
  const auto& recon = f.dec_tape.output();
  if (recon.cols() != batch.cols()) throw DimensionError("vae: decoder output width differs from the batch");
  f.loss.reconstruction = (recon - batch).array().square().mean();
  const auto var = (2.0 * f.posterior.log_std.array()).exp();
  f.loss.kl = (0.5 * (f.posterior.mean.array().square() + var - 1.0) - f.posterior.log_std.array()).rowwise().sum().mean();
  f.loss.total = f.loss.reconstruction + beta * f.loss.kl;
  return f;
}

}  // namespace detail

/// Negative evidence lower bound for a batch of normalized trajectories with
/// fixed reparameterization noise: MSE reconstruction + beta * KL(q(a|x) || N(0, I)).
inline VaeLoss vae_loss(nn::DenseNet& encoder, nn::DenseNet& decoder, const Matrix& batch, const Matrix& noise,
                        double beta) {
  return detail::vae_forward(encoder, decoder, batch, noise, beta).loss;
}

inline VaeLoss vae_loss(VaeTrainState& state, GenerativeModel& model, const Matrix& batch, Rng& rng) {
  const Matrix noise = sample_latents(Prior::standard_normal, model.latent_dim(), static_cast<std::size_t>(batch.rows()), rng);
  return vae_loss(state.encoder, model.decoder(), batch, noise, state.beta);
}

/// Loss and exact gradients, including the path through the reparameterized sample.
inline VaeLossGradients vae_loss_gradients(nn::DenseNet& encoder, nn::DenseNet& decoder, const Matrix& batch,
                                           const Matrix& noise, double beta) {
  auto f = detail::vae_forward(encoder, decoder, batch, noise, beta);
  const auto b = static_cast<double>(batch.rows());
  const Matrix d_recon = 2.0 * (f.dec_tape.output() - batch) / static_cast<double>(batch.size());
  VaeLossGradients out;
  out.loss = f.loss;
  out.decoder = decoder.backward(f.dec_tape, d_recon);
  const Matrix& d_latent = out.decoder.input;
  const Matrix stddev = f.posterior.log_std.array().exp().matrix();
  const Matrix d_mean = d_latent + (beta / b) * f.posterior.mean;
  const Matrix d_log_std = (d_latent.array() * noise.array() * stddev.array()).matrix() +
                           (beta / b) * (stddev.array().square() - 1.0).matrix();
  out.encoder = encoder.backward(f.enc_tape, nn::join_gradient(f.posterior, d_mean, d_log_std));
  return out;
}

/// Posterior means for normalized trajectories (eval mode).
inline Matrix encode_mean(const nn::DenseNet& encoder, const Matrix& normalized, int latent_dim) {
  return encoder.infer(normalized).leftCols(latent_dim);
}

/// Batch index ranges for one shuffled epoch; a trailing batch of one row
/// is dropped because batch norm needs two rows.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

struct VaeResult {
  GenerativeModel model;
  VaeTrainState state;
};

/// Trains a beta-VAE. beta starts at 0 and grows by `beta_step` after every
/// epoch whose mean KL is at or above the threshold. Once the KL has reached
/// the threshold, the first epoch that drops below it freezes beta for the
/// rest of training.
inline VaeResult train_vae(const arm::Dataset& ds, double velocity_limit, const VaeConfig& cfg, Rng& rng) {
  if (ds.empty()) throw InvalidArgument("train_vae: empty dataset");
  if (!(cfg.kl_threshold > 0.0)) throw InvalidArgument("train_vae: kl_threshold must be positive");
  Rng init_rng = rng.fork("init");
  VaeResult r{GenerativeModel(ModelKind::vae, cfg.latent_dim, ds.T, ds.M, velocity_limit, cfg.width_divisor, init_rng),
              VaeTrainState{}};
  auto& model = r.model;
  auto& st = r.state;
  st.kl_threshold = cfg.kl_threshold;
  st.encoder = nn::DenseNet(ds.T * ds.M, encoder_layers(cfg.latent_dim, cfg.width_divisor), init_rng);
  model.set_normalization(ChannelNormalization::fit(ds));
  const Matrix data = model.normalization().normalize(ds.flattened());

  nn::Adam enc_opt(cfg.learning_rate), dec_opt(cfg.learning_rate);
  model.decoder().set_mode(nn::Mode::train);
  st.encoder.set_mode(nn::Mode::train);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    VaeEpochLog log{epoch, st.beta, 0.0, 0.0, 0.0};
    double rows = 0.0;
    for (const auto& idx : epoch_batches(ds.size(), cfg.batch_size, rng)) {
      const Matrix batch = gather_rows(data, idx);
      const Matrix noise = sample_latents(Prior::standard_normal, cfg.latent_dim, idx.size(), rng);
      auto g = vae_loss_gradients(st.encoder, model.decoder(), batch, noise, st.beta);
      if (!std::isfinite(g.loss.total)) throw NumericError("train_vae: non-finite loss at epoch " + std::to_string(epoch));
      enc_opt.step(st.encoder, g.encoder);
      dec_opt.step(model.decoder(), g.decoder);
      const auto w = static_cast<double>(idx.size());
      log.kl += w * g.loss.kl;
      log.reconstruction += w * g.loss.reconstruction;
      log.total += w * g.loss.total;
      rows += w;
    }
    log.kl /= rows;
    log.reconstruction /= rows;
    log.total /= rows;
    st.history.push_back(log);
    st.epoch = epoch;
    if (!st.beta_frozen) {
      if (log.kl >= st.kl_threshold) {
        st.kl_exceeded = true;
        st.beta += cfg.beta_step;
      } else if (st.kl_exceeded) {
        st.beta_frozen = true;
      }
    }
  }
  model.decoder().set_mode(nn::Mode::eval);
  st.encoder.set_mode(nn::Mode::eval);
  return r;
}

}  // namespace lplab::genmod
