#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace lplab::testing {

/// Unbiased squared MMD written as the plain textbook triple of double loops.
inline double naive_mmd2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double gamma) {
  auto k = [&](const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
    double d = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) d += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
    return std::exp(-gamma * d);
  };
  const auto m = x.rows(), n = y.rows();
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) xx += k(x, i, x, j);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) yy += k(y, i, y, j);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) xy += k(x, i, y, j);
  return xx / static_cast<double>(m * (m - 1)) + yy / static_cast<double>(n * (n - 1)) -
         2.0 * xy / static_cast<double>(m * n);
}

/// kNN-manifold precision and recall from full pairwise distance matrices and sorted rows.
inline std::pair<double, double> brute_force_precision_recall(const Eigen::MatrixXd& real, const Eigen::MatrixXd& gen, int k) {
  auto dist = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd d(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
        d(i, j) = s;
      }
    return d;
  };
  auto radii = [&](const Eigen::MatrixXd& s) {
    const Eigen::MatrixXd d = dist(s, s);
    std::vector<double> r;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      std::vector<double> row;
      for (Eigen::Index j = 0; j < s.rows(); ++j)
        if (j != i) row.push_back(d(i, j));
      std::sort(row.begin(), row.end());
      r.push_back(row[static_cast<std::size_t>(k - 1)]);
    }
    return r;
  };
  auto covered = [&](const Eigen::MatrixXd& q, const Eigen::MatrixXd& manifold, const std::vector<double>& r) {
    const Eigen::MatrixXd d = dist(q, manifold);
    int hits = 0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      bool in = false;
      for (Eigen::Index j = 0; j < manifold.rows(); ++j) in = in || d(i, j) <= r[static_cast<std::size_t>(j)];
      hits += in ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(q.rows());
  };
  return {covered(gen, real, radii(real)), covered(real, gen, radii(gen))};
}

/// Least squares of y on [x | 1] through an explicit normal-equation inverse.
inline Eigen::MatrixXd normal_equation_solve(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a << x, Eigen::VectorXd::Ones(x.rows());
  const Eigen::MatrixXd gram = a.transpose() * a;
  return gram.fullPivLu().inverse() * (a.transpose() * y);
}

/// Two-sided p-value of a sample correlation under the t distribution with n - 2 degrees of freedom.
inline double t_test_p(double r, int n) {
  const double dof = n - 2;
  const double t = r * std::sqrt(dof / (1.0 - r * r));
  const boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace lplab::testing
