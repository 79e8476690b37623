#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lplab/analysis/feature_matrix.hpp"

namespace lplab::analysis {

struct ArdConfig {
  double precision_cap = 1e10;
  int max_iterations = 500;
  double tolerance = 1e-6;  // max relative change of any precision
};

struct ArdResult {
  std::vector<std::string> names;
  Vector weight_precisions;  // lower = more relevant
  Vector weights;  // posterior means
  double intercept = 0.0;
  double noise_precision = 0.0;
  int iterations_used = 0;
  bool converged = false;
  bool degenerate = false;  // every weight precision reached the cap
};

/// Evidence-approximation ARD for Bayesian linear regression on centred data.
/// Features are never pruned: precisions are clamped to the cap instead.
inline ArdResult ard_fit(const Matrix& x_raw, const Vector& y_raw, const std::vector<std::string>& names,
                         const ArdConfig& cfg = {}) {
  const Eigen::Index n = x_raw.rows();
  const Eigen::Index d = x_raw.cols();
  if (y_raw.size() != n) throw DimensionError("ard: target length differs from rows");
  if (static_cast<Eigen::Index>(names.size()) != d) throw DimensionError("ard: name count differs from columns");
  if (n < 3) throw InvalidArgument("ard: at least 3 rows required");
  if (!x_raw.allFinite() || !y_raw.allFinite()) throw InvalidArgument("ard: non-finite input");

  const Eigen::RowVectorXd x_mean = x_raw.colwise().mean();
  const double y_mean = y_raw.mean();
  const Matrix x = x_raw.rowwise() - x_mean;
  const Vector y = y_raw.array() - y_mean;

  ArdResult r;
  r.names = names;
  r.weight_precisions = Vector::Ones(d);
  r.weights = Vector::Zero(d);
  const double cap = cfg.precision_cap;
  const double y_var = y.squaredNorm() / static_cast<double>(n);
  if (!(y_var > 0.0)) {
    r.weight_precisions.setConstant(cap);
    r.noise_precision = cap;
    r.intercept = y_mean;
    r.converged = true;
    r.degenerate = true;
    return r;
  }

  const Matrix xtx = x.transpose() * x;
  const Vector xty = x.transpose() * y;
  Vector& a = r.weight_precisions;
  double beta = 1.0 / y_var;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    Matrix precision = beta * xtx;
    precision.diagonal() += a;
    const Eigen::LDLT<Matrix> ldlt(precision);
    const Matrix sigma = ldlt.solve(Matrix::Identity(d, d));
    const Vector m = beta * sigma * xty;
    Vector a_new(d);
    double gamma_sum = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double gamma = std::clamp(1.0 - a(i) * sigma(i, i), 0.0, 1.0);
      gamma_sum += gamma;
      const double m2 = m(i) * m(i);
      a_new(i) = m2 > 0.0 ? std::clamp(gamma / m2, 1.0 / cap, cap) : cap;
    }
    const double resid = (y - x * m).squaredNorm();
    const double dof = std::max(static_cast<double>(n) - gamma_sum, 1e-12);
    const double beta_new = resid > 0.0 ? std::min(dof / resid, cap) : cap;

    double change = std::abs(beta_new - beta) / beta;
    for (Eigen::Index i = 0; i < d; ++i) change = std::max(change, std::abs(a_new(i) - a(i)) / a(i));
    a = a_new;
    beta = beta_new;
    r.weights = m;
    r.iterations_used = it;
    if (change < cfg.tolerance) {
      r.converged = true;
      break;
    }
  }
  // Posterior mean under the final hyperparameters.
  Matrix precision = beta * xtx;
  precision.diagonal() += a;
  r.weights = beta * precision.ldlt().solve(xty);
  r.noise_precision = beta;
  r.intercept = y_mean - x_mean.dot(r.weights);
  r.degenerate = (a.array() >= cap).all();
  return r;
}

inline ArdResult ard_fit(const FeatureMatrix& m, const ArdConfig& cfg = {}) {
  m.validate();
  return ard_fit(m.values, m.target, m.names, cfg);
}

}  // namespace lplab::analysis
