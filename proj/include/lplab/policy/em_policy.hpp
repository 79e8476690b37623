#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lplab/arm/arm_world.hpp"
#include "lplab/genmod/generative_model.hpp"
#include "lplab/nn/adam.hpp"
#include "lplab/nn/gaussian.hpp"

namespace lplab::policy {

using nn::Matrix;
using nn::Vector;

inline constexpr double kRatioClip = 1e3;

/// Goal-conditioned diagonal Gaussian over latents: N_s -> hidden (tanh) -> [mean | log_std].
struct GaussianPolicy {
  nn::DenseNet net;
  int latent_dim = 0;

  GaussianPolicy() = default;
  GaussianPolicy(int state_dim, int latent_dim_, int hidden, int layers, Rng& rng) : latent_dim(latent_dim_) {
    std::vector<nn::LayerSpec> specs;
    for (int i = 0; i < layers; ++i) specs.push_back({hidden, nn::Activation::tanh, false});
    specs.push_back({2 * latent_dim_, nn::Activation::identity, false});
    net = nn::DenseNet(state_dim, specs, rng);
  }

  [[nodiscard]] nn::GaussianBatch heads(const Matrix& states) const {
    return nn::split_gaussian(net.infer(states), latent_dim);
  }
};

/// pi_theta(alpha | s). Rollout latents are only ever drawn from this type.
struct PolicyNet : GaussianPolicy {
  using GaussianPolicy::GaussianPolicy;
};

/// q_phi(alpha | s); same shape as the policy, re-initialized as its copy.
struct VariationalPolicy : GaussianPolicy {
  VariationalPolicy() = default;
  explicit VariationalPolicy(const PolicyNet& pi) : GaussianPolicy(pi) {}
};

/// V(s): N_s -> hidden (tanh) -> 1.
struct ValueNet {
  nn::DenseNet net;

  ValueNet() = default;
  ValueNet(int state_dim, int hidden, int layers, Rng& rng) {
    std::vector<nn::LayerSpec> specs;
    for (int i = 0; i < layers; ++i) specs.push_back({hidden, nn::Activation::tanh, false});
    specs.push_back({1, nn::Activation::identity, false});
    net = nn::DenseNet(state_dim, specs, rng);
  }

  [[nodiscard]] Vector predict(const Matrix& states) const { return net.infer(states).col(0); }
};

struct RolloutBatch {
  Matrix states;  // N x N_s goals
  Matrix latents;  // N x N_alpha, drawn from pi
  std::vector<arm::Trajectory> trajectories;
  Vector rewards;
  Vector advantages;
  std::vector<bool> failed;  // execution raised; reward set to 0

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
};

/// Goals uniform over the reachable workspace, alpha ~ pi(.|s), tau = decode(alpha),
/// r = reward(s, execute(tau)), A = r - V(s). Sample i uses its own sub-stream.
template <genmod::LatentGenerator G>
RolloutBatch collect_rollouts(const PolicyNet& pi, const ValueNet& value, const G& model, const arm::ArmConfig& cfg,
                              const arm::RewardParams& reward_params, int n, Rng& rng) {
  if (n < 1) throw InvalidArgument("collect_rollouts: N must be at least 1");
  if (pi.latent_dim != model.latent_dim()) throw DimensionError("collect_rollouts: policy and model latent sizes differ");
  RolloutBatch b;
  b.states.resize(n, arm::kStateDim);
  b.latents.resize(n, pi.latent_dim);
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    streams.push_back(rng.fork(static_cast<std::uint64_t>(i)));
    b.states.row(i) = arm::sample_reachable_goal(cfg, streams.back()).to_vector().transpose();
  }
  const auto heads = pi.heads(b.states);
  for (int i = 0; i < n; ++i) {
    const auto s = nn::gaussian_sample(heads.row(i), streams[static_cast<std::size_t>(i)]);
    b.latents.row(i) = s.value.transpose();
  }
  b.trajectories = model.decode_batch(b.latents);
  b.rewards.resize(n);
  b.failed.assign(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    const auto goal = arm::EndState::from_vector(b.states.row(i).transpose());
    try {
      b.rewards(i) = arm::reward(goal, arm::execute(b.trajectories[static_cast<std::size_t>(i)], cfg), reward_params);
    } catch (const Error&) {
      b.rewards(i) = 0.0;
      b.failed[static_cast<std::size_t>(i)] = true;
    }
  }
  b.advantages = b.rewards - value.predict(b.states);
  return b;
}

struct Surrogate {
  double objective = 0.0;  // mean[ratio * A - c * KL(q || pi)]
  double mean_kl = 0.0;
  int clipped = 0;
};

namespace detail {

struct SurrogateGrad {
  Surrogate value;
  Matrix d_raw;  // gradient of -objective w.r.t. q's raw output
};

inline SurrogateGrad surrogate_grad(const nn::GaussianBatch& q, const nn::GaussianBatch& p, const Matrix& latents,
                                    const Vector& adv, double kl_coef) {
  const auto n = static_cast<double>(q.rows());
  const Vector log_ratio = nn::log_density_rows(q, latents) - nn::log_density_rows(p, latents);
  const Vector kl = nn::kl_rows(q, p);
  const auto klg = nn::kl_gradient(q, p);
  SurrogateGrad g;
  Matrix d_mean(q.rows(), q.dim()), d_log_std(q.rows(), q.dim());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double ratio = std::exp(log_ratio(i));
    bool clip = false;
    if (!(ratio <= kRatioClip)) {
      ratio = kRatioClip;
      clip = true;
      ++g.value.clipped;
    }
    g.value.objective += (ratio * adv(i) - kl_coef * kl(i)) / n;
    g.value.mean_kl += kl(i) / n;
    for (Eigen::Index j = 0; j < q.dim(); ++j) {
      const double inv_var = std::exp(-2.0 * q.log_std(i, j));
      const double diff = latents(i, j) - q.mean(i, j);
      const double dr_mean = clip ? 0.0 : ratio * diff * inv_var;
      const double dr_log_std = clip ? 0.0 : ratio * (diff * diff * inv_var - 1.0);
      d_mean(i, j) = -(adv(i) * dr_mean - kl_coef * klg.q_mean(i, j)) / n;
      d_log_std(i, j) = -(adv(i) * dr_log_std - kl_coef * klg.q_log_std(i, j)) / n;
    }
  }
  g.d_raw = nn::join_gradient(q, d_mean, d_log_std);
  return g;
}

}  // namespace detail

/// E-step surrogate for fixed q, pi and batch; `kl_coef` weights the KL penalty.
inline Surrogate surrogate(const VariationalPolicy& q, const PolicyNet& pi, const RolloutBatch& b, double kl_coef = 1.0) {
  return detail::surrogate_grad(q.heads(b.states), pi.heads(b.states), b.latents, b.advantages, kl_coef).value;
}

/// Gradient of the negated surrogate w.r.t. all parameters of q, given pi's heads on the batch states.
inline std::pair<Surrogate, nn::Gradients> surrogate_gradients(VariationalPolicy& q, const nn::GaussianBatch& pi_heads,
                                                               const RolloutBatch& b, double kl_coef = 1.0) {
  const auto tape = q.net.forward(b.states);
  const auto qh = nn::split_gaussian(tape.output(), q.latent_dim);
  auto g = detail::surrogate_grad(qh, pi_heads, b.latents, b.advantages, kl_coef);
  return {g.value, q.net.backward(tape, g.d_raw)};
}

inline std::pair<Surrogate, nn::Gradients> surrogate_gradients(VariationalPolicy& q, const PolicyNet& pi,
                                                               const RolloutBatch& b, double kl_coef = 1.0) {
  return surrogate_gradients(q, pi.heads(b.states), b, kl_coef);
}

/// Gradient ascent on mean[q/pi * A - c * KL(q || pi)] with pi frozen. Returns the
/// surrogate value before each update and after the last.
inline std::vector<Surrogate> e_step(VariationalPolicy& q, const PolicyNet& pi, const RolloutBatch& b, int iters,
                                     double lr, double kl_coef = 1.0) {
  for (Eigen::Index i = 0; i < b.advantages.size(); ++i)
    if (!std::isfinite(b.advantages(i))) throw NumericError("e_step: non-finite advantage");
  const auto pi_heads = pi.heads(b.states);
  nn::Adam opt(lr);
  std::vector<Surrogate> trace;
  for (int it = 0; it < iters; ++it) {
    auto [value, grads] = surrogate_gradients(q, pi_heads, b, kl_coef);
    trace.push_back(value);
    opt.step(q.net, grads);
  }
  trace.push_back(detail::surrogate_grad(q.heads(b.states), pi_heads, b.latents, b.advantages, kl_coef).value);
  return trace;
}

/// mean KL(q(.|s_i) || pi(.|s_i)).
inline double mean_kl(const VariationalPolicy& q, const PolicyNet& pi, const Matrix& states) {
  return nn::kl_rows(q.heads(states), pi.heads(states)).mean();
}

/// Gradient of mean KL(q || pi) w.r.t. pi's parameters, given q's heads on `states`.
inline std::pair<double, nn::Gradients> m_step_gradients(PolicyNet& pi, const nn::GaussianBatch& qh, const Matrix& states) {
  const auto tape = pi.net.forward(states);
  const auto ph = nn::split_gaussian(tape.output(), pi.latent_dim);
  const auto n = static_cast<double>(states.rows());
  const auto g = nn::kl_gradient(qh, ph);
  const Matrix d_raw = nn::join_gradient(ph, g.p_mean / n, g.p_log_std / n);
  return {nn::kl_rows(qh, ph).mean(), pi.net.backward(tape, d_raw)};
}

inline std::pair<double, nn::Gradients> m_step_gradients(PolicyNet& pi, const VariationalPolicy& q, const Matrix& states) {
  return m_step_gradients(pi, q.heads(states), states);
}

/// Gradient descent on mean KL(q || pi) with q frozen. Returns the loss before each update and at the end.
inline std::vector<double> m_step(PolicyNet& pi, const VariationalPolicy& q, const Matrix& states, int iters, double lr) {
  const auto qh = q.heads(states);
  nn::Adam opt(lr);
  std::vector<double> trace;
  for (int it = 0; it < iters; ++it) {
    auto [loss, grads] = m_step_gradients(pi, qh, states);
    trace.push_back(loss);
    opt.step(pi.net, grads);
  }
  trace.push_back(nn::kl_rows(qh, pi.heads(states)).mean());
  return trace;
}

inline std::pair<double, nn::Gradients> value_gradients(ValueNet& v, const Matrix& states, const Vector& rewards) {
  const auto tape = v.net.forward(states);
  const Vector resid = tape.output().col(0) - rewards;
  const auto n = static_cast<double>(states.rows());
  Matrix d = (2.0 / n) * resid;
  return {resid.squaredNorm() / n, v.net.backward(tape, d)};
}

/// MSE regression of rewards on states. Returns the loss before each update and at the end.
inline std::vector<double> fit_value(ValueNet& v, const Matrix& states, const Vector& rewards, int iters, double lr) {
  if (states.rows() < 1) throw InvalidArgument("fit_value: empty batch");
  nn::Adam opt(lr);
  std::vector<double> trace;
  for (int it = 0; it < iters; ++it) {
    auto [loss, grads] = value_gradients(v, states, rewards);
    trace.push_back(loss);
    opt.step(v.net, grads);
  }
  trace.push_back((v.predict(states) - rewards).squaredNorm() / static_cast<double>(states.rows()));
  return trace;
}

struct EmConfig {
  int outer_iters = 200;
  int batch = 64;  // N
  int e_iters = 30;
  double e_lr = 1e-3;
  double kl_coef = 1.0;
  int m_iters = 60;
  double m_lr = 1e-3;
  int value_iters = 40;
  double value_lr = 1e-3;
  int hidden = 64;
  int hidden_layers = 2;
  int seeds = 3;

  void validate() const {
    if (!(kl_coef > 0.0)) throw InvalidArgument("em config: kl_coef must be positive");
    if (outer_iters < 1 || batch < 1 || e_iters < 0 || m_iters < 0 || value_iters < 0 || seeds < 1 || hidden < 1 ||
        hidden_layers < 0)
      throw InvalidArgument("em config: counts must be positive");
  }
};

struct CurvePoint {
  int iteration = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double success_rate = 0.0;
  double mean_kl = 0.0;
};

struct TrainingCurve {
  std::vector<CurvePoint> points;

  /// Maximum mean reward over the curve.
  [[nodiscard]] double label() const {
    double best = 0.0;
    for (const auto& p : points) best = std::max(best, p.mean_reward);
    return best;
  }
};

struct EmResult {
  TrainingCurve curve;
  PolicyNet policy;
  ValueNet value;
};

/// The EM loop: collect N rollouts from pi, q <- pi, E-step, M-step, value fit.
template <genmod::LatentGenerator G>
EmResult train_em(const G& model, const arm::ArmConfig& cfg, const arm::RewardParams& reward_params,
                  const EmConfig& em, Rng& rng) {
  em.validate();
  Rng init = rng.fork("init");
  EmResult r{{}, PolicyNet(arm::kStateDim, model.latent_dim(), em.hidden, em.hidden_layers, init),
             ValueNet(arm::kStateDim, em.hidden, em.hidden_layers, init)};
  for (int it = 1; it <= em.outer_iters; ++it) {
    try {
      Rng iter_rng = rng.fork("iteration").fork(static_cast<std::uint64_t>(it));
      const auto batch = collect_rollouts(r.policy, r.value, model, cfg, reward_params, em.batch, iter_rng);
      VariationalPolicy q(r.policy);
      (void)e_step(q, r.policy, batch, em.e_iters, em.e_lr, em.kl_coef);
      const auto m_trace = m_step(r.policy, q, batch.states, em.m_iters, em.m_lr);
      (void)fit_value(r.value, batch.states, batch.rewards, em.value_iters, em.value_lr);

      CurvePoint p;
      p.iteration = it;
      const auto n = static_cast<double>(batch.size());
      p.mean_reward = batch.rewards.mean();
      p.std_reward = std::sqrt((batch.rewards.array() - p.mean_reward).square().sum() / n);
      p.success_rate = (batch.rewards.array() >= reward_params.success_threshold).template cast<double>().sum() / n;
      p.mean_kl = m_trace.back();
      r.curve.points.push_back(p);
    } catch (const Error& e) {
      throw Error("train_em: iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  return r;
}

}  // namespace lplab::policy
