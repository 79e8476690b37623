#pragma once

#include <cmath>
#include <numbers>

#include "lplab/genmod/generative_model.hpp"
#include "lplab/genmod/vae.hpp"
#include "lplab/nn/adam.hpp"

namespace lplab::genmod {

struct InfoGanConfig {
  int latent_dim = 2;
  double lambda = 1.5;
  int epochs = 400;
  int batch_size = 128;
  double learning_rate = 2e-4;
  int width_divisor = 4;
};

struct InfoGanLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double i_loss = 0.0;
  double m_loss = 0.0;
};

struct InfoGanEpochLog {
  int epoch = 0;
  InfoGanLosses losses;
  double weighted_i_loss = 0.0;  // lambda * i_loss
};

/// Discriminator and Q network as two heads on one trunk; the trunk is stored once.
struct InfoGanTrainState {
  nn::DenseNet trunk;
  nn::DenseNet d_head;  // one logit; D = sigmoid(logit)
  nn::DenseNet q_head;  // mean of Q(alpha | tau), unit variance
  double lambda = 0.0;
  int epoch = 0;
  std::vector<InfoGanEpochLog> history;
};

/// Trunk: T*M -> 256 -> 128 (ReLU); D head: 128 -> 1; Q head: 128 -> 64 -> N_alpha.
inline InfoGanTrainState make_infogan_state(int input_dim, int latent_dim, double lambda, int width_divisor, Rng& rng) {
  using nn::Activation;
  InfoGanTrainState s;
  s.trunk = nn::DenseNet(input_dim,
                         {{256 / width_divisor, Activation::relu, false}, {128 / width_divisor, Activation::relu, false}},
                         rng);
  s.d_head = nn::DenseNet(128 / width_divisor, {{1, Activation::identity, false}}, rng);
  s.q_head = nn::DenseNet(128 / width_divisor,
                          {{64 / width_divisor, Activation::identity, false}, {latent_dim, Activation::identity, false}},
                          rng);
  s.lambda = lambda;
  return s;
}

namespace detail {

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double gaussian_nll_constant(int dim) { return 0.5 * dim * std::log(2.0 * std::numbers::pi); }

}  // namespace detail

/// Evaluates all four losses with eval-mode (running statistics) networks.
/// d_loss = -mean[log D(real) + log(1 - D(fake))], g_loss = -mean log D(fake),
/// i_loss = mean Gaussian NLL of alpha under Q(.|g(alpha)), m_loss = g_loss + lambda * i_loss.
inline InfoGanLosses infogan_losses(const InfoGanTrainState& st, const GenerativeModel& model, const Matrix& real_batch,
                                    const Matrix& latents) {
  if (real_batch.rows() < 1 || latents.rows() < 1) throw InvalidArgument("infogan_losses: empty batch");
  const Matrix fake = model.decoder().infer(latents);
  const Matrix h_real = st.trunk.infer(real_batch);
  const Matrix h_fake = st.trunk.infer(fake);
  const Matrix logit_real = st.d_head.infer(h_real);
  const Matrix logit_fake = st.d_head.infer(h_fake);
  const Matrix q = st.q_head.infer(h_fake);
  InfoGanLosses l;
  for (Eigen::Index i = 0; i < logit_real.rows(); ++i) l.d_loss += detail::softplus(-logit_real(i, 0));
  l.d_loss /= static_cast<double>(logit_real.rows());
  double fake_term = 0.0;
  for (Eigen::Index i = 0; i < logit_fake.rows(); ++i) {
    fake_term += detail::softplus(logit_fake(i, 0));
    l.g_loss += detail::softplus(-logit_fake(i, 0));
  }
  const auto nf = static_cast<double>(logit_fake.rows());
  l.d_loss += fake_term / nf;
  l.g_loss /= nf;
  l.i_loss = 0.5 * (latents - q).rowwise().squaredNorm().mean() + detail::gaussian_nll_constant(static_cast<int>(latents.cols()));
  l.m_loss = l.g_loss + st.lambda * l.i_loss;
  return l;
}

inline InfoGanLosses infogan_losses(const InfoGanTrainState& st, const GenerativeModel& model, const Matrix& real_batch, Rng& rng) {
  return infogan_losses(st, model, real_batch, model.sample_prior(static_cast<std::size_t>(real_batch.rows()), rng));
}

struct DiscriminatorGradients {
  double d_loss = 0.0;
  nn::Gradients trunk;
  nn::Gradients d_head;
};

/// Gradients of d_loss w.r.t. trunk and D head for a fixed fake batch.
inline DiscriminatorGradients discriminator_gradients(InfoGanTrainState& st, const Matrix& real, const Matrix& fake) {
  Matrix both(real.rows() + fake.rows(), real.cols());
  both << real, fake;
  const auto t_tape = st.trunk.forward(both);
  const auto d_tape = st.d_head.forward(t_tape.output());
  const Matrix& logit = d_tape.output();
  Matrix d_logit(logit.rows(), 1);
  DiscriminatorGradients g;
  const auto nr = static_cast<double>(real.rows());
  const auto nf = static_cast<double>(fake.rows());
  for (Eigen::Index i = 0; i < logit.rows(); ++i) {
    const double x = logit(i, 0);
    if (i < real.rows()) {
      g.d_loss += detail::softplus(-x) / nr;
      d_logit(i, 0) = (detail::sigmoid(x) - 1.0) / nr;
    } else {
      g.d_loss += detail::softplus(x) / nf;
      d_logit(i, 0) = detail::sigmoid(x) / nf;
    }
  }
  g.d_head = st.d_head.backward(d_tape, d_logit);
  g.trunk = st.trunk.backward(t_tape, g.d_head.input);
  return g;
}

struct GeneratorGradients {
  InfoGanLosses losses;  // d_loss left at 0
  nn::Gradients generator;  // from m_loss
  nn::Gradients trunk;      // from lambda * i_loss only
  nn::Gradients q_head;     // from lambda * i_loss
};

/// Gradients of m_loss for the generator and of lambda * i_loss for the Q path.
inline GeneratorGradients generator_gradients(InfoGanTrainState& st, nn::DenseNet& generator, const Matrix& latents) {
  const auto g_tape = generator.forward(latents);
  const auto t_tape = st.trunk.forward(g_tape.output());
  const auto d_tape = st.d_head.forward(t_tape.output());
  const auto q_tape = st.q_head.forward(t_tape.output());
  const auto n = static_cast<double>(latents.rows());
  GeneratorGradients out;
  const Matrix& logit = d_tape.output();
  Matrix d_logit(logit.rows(), 1);
  for (Eigen::Index i = 0; i < logit.rows(); ++i) {
    out.losses.g_loss += detail::softplus(-logit(i, 0)) / n;
    d_logit(i, 0) = (detail::sigmoid(logit(i, 0)) - 1.0) / n;
  }
  const Matrix resid = q_tape.output() - latents;
  out.losses.i_loss = 0.5 * resid.rowwise().squaredNorm().mean() + detail::gaussian_nll_constant(static_cast<int>(latents.cols()));
  out.losses.m_loss = out.losses.g_loss + st.lambda * out.losses.i_loss;

  const Matrix d_q = (st.lambda / n) * resid;
  out.q_head = st.q_head.backward(q_tape, d_q);
  const auto via_d = st.d_head.backward(d_tape, d_logit);
  out.trunk = st.trunk.backward(t_tape, out.q_head.input);
  const auto both = st.trunk.backward(t_tape, via_d.input + out.q_head.input);
  out.generator = generator.backward(g_tape, both.input);
  return out;
}

struct InfoGanResult {
  GenerativeModel model;
  InfoGanTrainState state;
};

/// Alternating 1:1 discriminator and generator+Q updates on normalized data.
inline InfoGanResult train_infogan(const arm::Dataset& ds, double velocity_limit, const InfoGanConfig& cfg, Rng& rng) {
  if (ds.empty()) throw InvalidArgument("train_infogan: empty dataset");
  if (!(cfg.lambda >= 0.0)) throw InvalidArgument("train_infogan: lambda must be non-negative");
  Rng init_rng = rng.fork("init");
  InfoGanResult r{GenerativeModel(ModelKind::infogan, cfg.latent_dim, ds.T, ds.M, velocity_limit, cfg.width_divisor, init_rng),
                  make_infogan_state(ds.T * ds.M, cfg.latent_dim, cfg.lambda, cfg.width_divisor, init_rng)};
  auto& model = r.model;
  auto& st = r.state;
  model.set_normalization(ChannelNormalization::fit(ds));
  const Matrix data = model.normalization().normalize(ds.flattened());

  nn::Adam g_opt(cfg.learning_rate), trunk_d_opt(cfg.learning_rate), d_head_opt(cfg.learning_rate),
      trunk_q_opt(cfg.learning_rate), q_head_opt(cfg.learning_rate);
  auto& gen = model.decoder();
  gen.set_mode(nn::Mode::train);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    InfoGanEpochLog log{epoch, {}, 0.0};
    double rows = 0.0;
    for (const auto& idx : epoch_batches(ds.size(), cfg.batch_size, rng)) {
      const Matrix real = gather_rows(data, idx);
      const Matrix z_d = model.sample_prior(idx.size(), rng);
      const Matrix fake = gen.forward(z_d).output();
      const auto dg = discriminator_gradients(st, real, fake);
      if (!std::isfinite(dg.d_loss)) throw NumericError("train_infogan: non-finite d_loss at epoch " + std::to_string(epoch));
      trunk_d_opt.step(st.trunk, dg.trunk);
      d_head_opt.step(st.d_head, dg.d_head);

      const Matrix z_g = model.sample_prior(idx.size(), rng);
      const auto gg = generator_gradients(st, gen, z_g);
      if (!std::isfinite(gg.losses.m_loss))
        throw NumericError("train_infogan: non-finite m_loss at epoch " + std::to_string(epoch));
      g_opt.step(gen, gg.generator);
      trunk_q_opt.step(st.trunk, gg.trunk);
      q_head_opt.step(st.q_head, gg.q_head);

      const auto w = static_cast<double>(idx.size());
      log.losses.d_loss += w * dg.d_loss;
      log.losses.g_loss += w * gg.losses.g_loss;
      log.losses.i_loss += w * gg.losses.i_loss;
      log.losses.m_loss += w * gg.losses.m_loss;
      rows += w;
    }
    log.losses.d_loss /= rows;
    log.losses.g_loss /= rows;
    log.losses.i_loss /= rows;
    log.losses.m_loss /= rows;
    log.weighted_i_loss = cfg.lambda * log.losses.i_loss;
    st.history.push_back(log);
    st.epoch = epoch;
  }
  gen.set_mode(nn::Mode::eval);
  return r;
}

/// Fraction of correct real/fake decisions (threshold D = 1/2) on the given sets.
inline double discriminator_accuracy(const InfoGanTrainState& st, const Matrix& real, const Matrix& fake) {
  const Matrix lr = st.d_head.infer(st.trunk.infer(real));
  const Matrix lf = st.d_head.infer(st.trunk.infer(fake));
  const double correct = (lr.array() > 0.0).cast<double>().sum() + (lf.array() <= 0.0).cast<double>().sum();
  return correct / static_cast<double>(real.rows() + fake.rows());
}

}  // namespace lplab::genmod
