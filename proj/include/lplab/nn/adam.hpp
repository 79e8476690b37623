#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "lplab/core/error.hpp"
#include "lplab/nn/dense_net.hpp"

namespace lplab::nn {

/// First and second moment estimates, one buffer per parameter array.
struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-8;

  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

/// One bias-corrected Adam update. Throws NumericError naming the parameter
/// if any gradient entry is non-finite; parameters are left untouched then.
inline void adam_step(const std::vector<ParamView>& params, const std::vector<std::span<const double>>& grads,
                      AdamState& state, double lr) {
  if (params.size() != grads.size()) throw DimensionError("adam: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].values.size() != grads[i].size())
      throw DimensionError("adam: shape mismatch for " + params[i].name);
    for (double g : grads[i])
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in " + params[i].name);
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.values.size(), 0.0);
      state.v.emplace_back(p.values.size(), 0.0);
    }
  } else if (state.m.size() != params.size()) {
    throw DimensionError("adam: state does not belong to these parameters");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    auto p = params[i].values;
    const auto g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = AdamState::beta1 * m[k] + (1.0 - AdamState::beta1) * g[k];
      v[k] = AdamState::beta2 * v[k] + (1.0 - AdamState::beta2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + AdamState::epsilon);
    }
  }
}

/// Adam bound to one network.
class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void step(DenseNet& net, const Gradients& grads) { adam_step(net.parameters(), grads.views(), state_, lr_); }

  [[nodiscard]] double learning_rate() const { return lr_; }
  void reset() { state_ = {}; }

 private:
  double lr_;
  AdamState state_;
};

}  // namespace lplab::nn
