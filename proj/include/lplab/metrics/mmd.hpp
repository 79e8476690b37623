#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "lplab/core/error.hpp"
#include "lplab/core/rng.hpp"

namespace lplab::metrics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct MmdConfig {
  double gamma = 15.0;
  int permutations = 100;
  double eta = 0.001;

  void validate() const {
    if (!(gamma > 0.0)) throw InvalidArgument("mmd: gamma must be positive");
    if (permutations < 1) throw InvalidArgument("mmd: permutations must be at least 1");
    if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("mmd: eta must lie in (0, 1)");
  }
};

namespace detail {

inline void check_sets(const Matrix& a, const Matrix& b) {
  if (a.rows() < 2 || b.rows() < 2) throw InvalidArgument("mmd: each set needs at least 2 points");
  if (a.cols() != b.cols()) throw DimensionError("mmd: sets differ in dimension");
}

/// Sum of exp(-gamma |a_i - b_j|^2) over all i, j (or i != j when `skip_diagonal`).
inline double kernel_sum(const Matrix& a, const Matrix& b, double gamma, bool skip_diagonal) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      total += std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
    }
  }
  return total;
}

}  // namespace detail

/// Unbiased estimator of the squared MMD under k(x, y) = exp(-gamma |x - y|^2).
/// Rows are points. The result may be slightly negative.
inline double mmd2_unbiased(const Matrix& x, const Matrix& y, double gamma) {
  detail::check_sets(x, y);
  const auto m = static_cast<double>(x.rows());
  const auto n = static_cast<double>(y.rows());
  const double kxx = detail::kernel_sum(x, x, gamma, true);
  const double kyy = detail::kernel_sum(y, y, gamma, true);
  const double kxy = detail::kernel_sum(x, y, gamma, false);
  return kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n);
}

/// Index of the (1 - eta) empirical quantile among `count` sorted values:
/// order statistic ceil((1 - eta) * count), clamped to the maximum.
inline std::size_t quantile_rank(std::size_t count, double eta) {
  const double pos = std::ceil((1.0 - eta) * static_cast<double>(count) - 1e-9);
  const auto rank = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(count)));
  return rank - 1;
}

/// Permutation-test distribution of mmd2_unbiased: pools both sets, then
/// repeatedly shuffles and splits back into sizes |x| and |y|.
inline std::vector<double> permutation_distribution(const Matrix& x, const Matrix& y, double gamma, int permutations,
                                                    Rng& rng) {
  detail::check_sets(x, y);
  if (permutations < 1) throw InvalidArgument("mmd: permutations must be at least 1");
  const Eigen::Index m = x.rows();
  const Eigen::Index n = y.rows();
  const Eigen::Index total = m + n;
  Matrix pooled(total, x.cols());
  pooled << x, y;

  Matrix k(total, total);
  for (Eigen::Index i = 0; i < total; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i) = std::exp(-gamma * (pooled.row(i) - pooled.row(j)).squaredNorm());
  }
  const Vector row_sums = k.rowwise().sum();
  const double grand = row_sums.sum();

  // Column p of `a` indicates which pooled points land in the first set.
  Matrix a = Matrix::Zero(total, permutations);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  for (int p = 0; p < permutations; ++p) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(order.begin(), order.end());
    for (Eigen::Index i = 0; i < m; ++i) a(order[static_cast<std::size_t>(i)], p) = 1.0;
  }
  const Matrix ka = k * a;
  const auto md = static_cast<double>(m);
  const auto nd = static_cast<double>(n);
  std::vector<double> values(static_cast<std::size_t>(permutations));
  for (int p = 0; p < permutations; ++p) {
    const double sxx = a.col(p).dot(ka.col(p));   // includes m diagonal ones
    const double sx_all = a.col(p).dot(row_sums);  // sxx + sxy
    const double sxy = sx_all - sxx;
    const double syy = grand - 2.0 * sxy - sxx;  // includes n diagonal ones
    values[static_cast<std::size_t>(p)] =
        (sxx - md) / (md * (md - 1.0)) + (syy - nd) / (nd * (nd - 1.0)) - 2.0 * sxy / (md * nd);
  }
  return values;
}

/// The (1 - eta) empirical quantile of the permutation distribution.
inline double permutation_critical_value(const Matrix& x, const Matrix& y, double gamma, int permutations, double eta,
                                         Rng& rng) {
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("mmd: eta must lie in (0, 1)");
  auto values = permutation_distribution(x, y, gamma, permutations, rng);
  std::sort(values.begin(), values.end());
  return values[quantile_rank(values.size(), eta)];
}

inline double permutation_critical_value(const Matrix& x, const Matrix& y, const MmdConfig& cfg, Rng& rng) {
  cfg.validate();
  return permutation_critical_value(x, y, cfg.gamma, cfg.permutations, cfg.eta, rng);
}

struct MmdTest {
  double statistic = 0.0;
  double critical_value = 0.0;
  [[nodiscard]] bool significant() const { return statistic > critical_value; }
};

inline MmdTest mmd_test(const Matrix& x, const Matrix& y, const MmdConfig& cfg, Rng& rng) {
  return {mmd2_unbiased(x, y, cfg.gamma), permutation_critical_value(x, y, cfg, rng)};
}

}  // namespace lplab::metrics
