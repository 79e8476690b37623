#pragma once

#include <cmath>
#include <vector>

#include "lplab/genmod/generative_model.hpp"
#include "lplab/metrics/dpr.hpp"

namespace lplab::metrics {

struct L3Config {
  double epsilon = 0.2;
  int anchors = 50;
  int neighbors = 500;
  double train_fraction = 0.7;

  void validate() const {
    if (!(epsilon > 0.0)) throw InvalidArgument("l3: epsilon must be positive");
    if (anchors < 1) throw InvalidArgument("l3: at least one anchor required");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("l3: train fraction must lie in (0, 1)");
  }

  [[nodiscard]] int train_count() const { return static_cast<int>(std::lround(train_fraction * neighbors)); }
};

inline constexpr double kRidgeFallback = 1e-8;
inline constexpr double kPivotRatio = 1e-7;

struct AffineFit {
  Matrix weights;  // (d + 1) x k; last row is the offset
  bool ridge = false;
};

/// Least-squares affine map x -> y from the normal equations; adds a ridge
/// of 1e-8 when they are not numerically positive definite.
inline AffineFit fit_affine(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw DimensionError("affine fit: row counts differ");
  Matrix design(x.rows(), x.cols() + 1);
  design << x, Vector::Ones(x.rows());
  Matrix gram = design.transpose() * design;
  const Matrix rhs = design.transpose() * y;
  AffineFit fit;
  Eigen::LLT<Matrix> llt(gram);
  // Cholesky pivots that vanish relative to the largest mark a numerically singular design.
  auto degenerate = [&] {
    if (llt.info() != Eigen::Success) return true;
    const Vector d = llt.matrixLLT().diagonal().cwiseAbs();
    return !(d.minCoeff() > kPivotRatio * d.maxCoeff());
  };
  if (degenerate()) {
    fit.ridge = true;
    gram += kRidgeFallback * Matrix::Identity(gram.rows(), gram.cols());
    llt.compute(gram);
    if (llt.info() != Eigen::Success) throw NumericError("affine fit: normal equations are singular even with ridge");
  }
  fit.weights = llt.solve(rhs);
  return fit;
}

inline Matrix apply_affine(const AffineFit& fit, const Matrix& x) {
  const Eigen::Index d = fit.weights.rows() - 1;
  if (x.cols() != d) throw DimensionError("affine fit: input width mismatch");
  return (x * fit.weights.topRows(d)).rowwise() + fit.weights.row(d);
}

/// Fit on (x_train, y_train), return mean squared error over all entries of the test split.
inline double affine_test_mse(const Matrix& x_train, const Matrix& y_train, const Matrix& x_test, const Matrix& y_test) {
  const auto fit = fit_affine(x_train, y_train);
  return (apply_affine(fit, x_test) - y_test).array().square().mean();
}

/// Uniform samples from the Euclidean ball of radius epsilon around `center`.
inline Matrix sample_ball(const Vector& center, double epsilon, int count, Rng& rng) {
  const auto dim = center.size();
  Matrix out(count, dim);
  for (int i = 0; i < count; ++i) {
    Vector dir(dim);
    for (Eigen::Index j = 0; j < dim; ++j) dir(j) = rng.normal();
    const double norm = dir.norm();
    const double radius = epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
    out.row(i) = (center + (radius / norm) * dir).transpose();
  }
  return out;
}

struct L3Result {
  double mean_mse = 0.0;
  std::vector<double> per_anchor;
};

/// Latent local linearity: for each prior anchor, affine fit from ball
/// neighbours to executed end states, scored by test MSE.
template <genmod::LatentGenerator G, class Exe>
L3Result l3(const G& model, Exe&& exe, const L3Config& cfg, Rng& rng) {
  cfg.validate();
  const int train = cfg.train_count();
  if (train < model.latent_dim() + 1 || cfg.neighbors - train < 1)
    throw InvalidArgument("l3: neighbourhood too small for an affine fit");
  L3Result r;
  for (int a = 0; a < cfg.anchors; ++a) {
    Rng anchor_rng = rng.fork(static_cast<std::uint64_t>(a));
    const Vector center = model.sample_prior(1, anchor_rng).row(0).transpose();
    const Matrix z = sample_ball(center, cfg.epsilon, cfg.neighbors, anchor_rng);
    const Matrix s = outcomes(model, exe, z);
    const int test = cfg.neighbors - train;
    r.per_anchor.push_back(affine_test_mse(z.topRows(train), s.topRows(train), z.bottomRows(test), s.bottomRows(test)));
  }
  double total = 0.0;
  for (double v : r.per_anchor) total += v;
  r.mean_mse = total / static_cast<double>(r.per_anchor.size());
  return r;
}

}  // namespace lplab::metrics
