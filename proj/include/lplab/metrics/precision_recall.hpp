#pragma once

#include <algorithm>
#include <vector>

#include "lplab/genmod/generative_model.hpp"
#include "lplab/metrics/mmd.hpp"

namespace lplab::metrics {

struct PrConfig {
  int k = 3;
  int sample_count = 1000;

  void validate() const {
    if (k < 1) throw InvalidArgument("precision/recall: k must be at least 1");
    if (sample_count <= k) throw InvalidArgument("precision/recall: sample count must exceed k");
  }
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

namespace detail {

inline double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return s;
}

/// Squared distance from each point to its k-th nearest neighbour in the same set, itself excluded.
inline std::vector<double> knn_radii(const Matrix& set, int k) {
  const Eigen::Index n = set.rows();
  std::vector<double> radii(static_cast<std::size_t>(n));
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    dist.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dist.push_back(squared_distance(set, i, set, j));
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    radii[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(k - 1)];
  }
  return radii;
}

/// Fraction of `queries` inside at least one hypersphere of the manifold set.
inline double coverage(const Matrix& queries, const Matrix& manifold, const std::vector<double>& radii) {
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    for (Eigen::Index j = 0; j < manifold.rows(); ++j) {
      if (squared_distance(queries, i, manifold, j) <= radii[static_cast<std::size_t>(j)]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(queries.rows());
}

}  // namespace detail

/// kNN-manifold precision and recall; rows are flattened samples.
inline PrecisionRecall precision_recall(const Matrix& real, const Matrix& generated, int k) {
  if (k < 1) throw InvalidArgument("precision/recall: k must be at least 1");
  if (real.rows() <= k || generated.rows() <= k) throw InvalidArgument("precision/recall: each set needs more than k samples");
  if (real.cols() != generated.cols()) throw DimensionError("precision/recall: sets differ in dimension");
  const auto real_radii = detail::knn_radii(real, k);
  const auto gen_radii = detail::knn_radii(generated, k);
  return {detail::coverage(generated, real, real_radii), detail::coverage(real, generated, gen_radii)};
}

/// Trajectory sets compared after shared per-channel standardization.
inline PrecisionRecall precision_recall(const std::vector<arm::Trajectory>& real, const std::vector<arm::Trajectory>& generated,
                                        const genmod::ChannelNormalization& norm, int k) {
  auto flat = [&](const std::vector<arm::Trajectory>& set) {
    if (set.empty()) throw InvalidArgument("precision/recall: empty trajectory set");
    Matrix m(static_cast<Eigen::Index>(set.size()), set.front().velocities.size());
    for (std::size_t i = 0; i < set.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = set[i].flatten();
    return norm.normalize(m);
  };
  return precision_recall(flat(real), flat(generated), k);
}

}  // namespace lplab::metrics
