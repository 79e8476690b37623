#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lplab/core/error.hpp"
#include "lplab/core/rng.hpp"
#include "lplab/nn/dense_net.hpp"

namespace lplab::nn {

inline constexpr double kMinLogStd = -6.0;
inline constexpr double kMaxLogStd = 3.0;

inline double clamp_log_std(double s) { return std::clamp(s, kMinLogStd, kMaxLogStd); }

/// Diagonal Gaussian given by mean and clamped log standard deviation.
struct GaussianHead {
  Vector mean;
  Vector log_std;

  GaussianHead() = default;
  GaussianHead(Vector m, const Vector& ls) : mean(std::move(m)), log_std(ls.unaryExpr(&clamp_log_std)) {
    if (mean.size() != log_std.size()) throw DimensionError("gaussian head: mean/log_std length mismatch");
  }

  [[nodiscard]] int dim() const { return static_cast<int>(mean.size()); }
};

/// A reparameterized draw: value = mean + exp(log_std) * noise.
/// d value / d mean = 1 and d value / d log_std = noise * exp(log_std).
struct GaussianSample {
  Vector value;
  Vector noise;
};

inline GaussianSample gaussian_sample(const GaussianHead& head, Rng& rng) {
  GaussianSample s;
  s.noise = Vector(head.dim());
  for (int i = 0; i < head.dim(); ++i) s.noise(i) = rng.normal();
  s.value = head.mean + (head.log_std.array().exp() * s.noise.array()).matrix();
  return s;
}

inline double gaussian_log_density(const GaussianHead& head, const Vector& x) {
  if (x.size() != head.mean.size()) throw DimensionError("log density: dimension mismatch");
  const auto z = ((x - head.mean).array() / head.log_std.array().exp());
  return -0.5 * z.square().sum() - head.log_std.sum() - 0.5 * head.dim() * std::log(2.0 * std::numbers::pi);
}

/// KL(q || p) in closed form.
inline double gaussian_kl(const GaussianHead& q, const GaussianHead& p) {
  if (q.dim() != p.dim()) throw DimensionError("gaussian_kl: dimension mismatch");
  double kl = 0.0;
  for (int i = 0; i < q.dim(); ++i) {
    const double var_ratio = std::exp(2.0 * (q.log_std(i) - p.log_std(i)));
    const double d = (q.mean(i) - p.mean(i)) * std::exp(-p.log_std(i));
    kl += p.log_std(i) - q.log_std(i) + 0.5 * (var_ratio + d * d) - 0.5;
  }
  return std::max(kl, 0.0);
}

/// Row-wise diagonal Gaussians, one per batch element.
struct GaussianBatch {
  Matrix mean;
  Matrix log_std;
  Matrix pass;  // 1 where log_std was inside the clamp range, 0 where clamped

  [[nodiscard]] Eigen::Index rows() const { return mean.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return mean.cols(); }

  [[nodiscard]] GaussianHead row(Eigen::Index i) const {
    return GaussianHead(mean.row(i).transpose(), log_std.row(i).transpose());
  }
};

/// Interprets a network output [mean | raw log_std] of width 2*dim.
inline GaussianBatch split_gaussian(const Matrix& raw, int dim) {
  if (raw.cols() != 2 * dim) throw DimensionError("gaussian head: expected width " + std::to_string(2 * dim));
  GaussianBatch b;
  b.mean = raw.leftCols(dim);
  const Matrix ls = raw.rightCols(dim);
  b.log_std = ls.unaryExpr(&clamp_log_std);
  b.pass = ((ls.array() >= kMinLogStd) && (ls.array() <= kMaxLogStd)).cast<double>().matrix();
  return b;
}

/// Gradient w.r.t. the raw network output given gradients w.r.t. mean and log_std.
inline Matrix join_gradient(const GaussianBatch& b, const Matrix& d_mean, const Matrix& d_log_std) {
  Matrix out(b.rows(), 2 * b.dim());
  out.leftCols(b.dim()) = d_mean;
  out.rightCols(b.dim()) = d_log_std.cwiseProduct(b.pass);
  return out;
}

inline Vector log_density_rows(const GaussianBatch& b, const Matrix& x) {
  const Matrix z = ((x - b.mean).array() * (-b.log_std.array()).exp()).matrix();
  const double c = 0.5 * static_cast<double>(b.dim()) * std::log(2.0 * std::numbers::pi);
  return (-0.5 * z.array().square().rowwise().sum() - b.log_std.array().rowwise().sum() - c).matrix();
}

/// Per-row KL(q_i || p_i).
inline Vector kl_rows(const GaussianBatch& q, const GaussianBatch& p) {
  const auto var_ratio = (2.0 * (q.log_std - p.log_std).array()).exp();
  const auto d = (q.mean - p.mean).array() * (-p.log_std.array()).exp();
  return (p.log_std.array() - q.log_std.array() + 0.5 * (var_ratio + d.square()) - 0.5).rowwise().sum().matrix();
}

/// Partial derivatives of KL(q || p) per row element.
struct KlGradient {
  Matrix q_mean, q_log_std, p_mean, p_log_std;
};

inline KlGradient kl_gradient(const GaussianBatch& q, const GaussianBatch& p) {
  const auto inv_pvar = (-2.0 * p.log_std.array()).exp();
  const auto diff = (q.mean - p.mean).array();
  // expm1 keeps the gradient exactly zero when q equals p.
  const Matrix ratio_m1 = (2.0 * (q.log_std - p.log_std).array()).unaryExpr([](double x) { return std::expm1(x); }).matrix();
  KlGradient g;
  g.q_mean = (diff * inv_pvar).matrix();
  g.p_mean = -g.q_mean;
  g.q_log_std = ratio_m1;
  g.p_log_std = (-(ratio_m1.array() + diff.square() * inv_pvar)).matrix();
  return g;
}

}  // namespace lplab::nn
