#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "lplab/analysis/ard.hpp"
#include "lplab/analysis/pearson.hpp"

namespace lplab::analysis {

namespace detail {

inline std::vector<std::string> order_by(const std::vector<std::string>& names, const std::vector<double>& keys) {
  std::vector<std::size_t> idx(names.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    return names[a] < names[b];
  });
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(names[i]);
  return out;
}

}  // namespace detail

/// Ascending ARD weight precision; ties alphabetical.
inline std::vector<std::string> rank_features(const ArdResult& r) {
  return detail::order_by(r.names, {r.weight_precisions.data(), r.weight_precisions.data() + r.weight_precisions.size()});
}

struct FeatureCorrelation {
  std::string name;
  Correlation corr;
};

/// Descending |R|; ties alphabetical.
inline std::vector<std::string> rank_features(const std::vector<FeatureCorrelation>& table) {
  std::vector<std::string> names;
  std::vector<double> keys;
  for (const auto& f : table) {
    names.push_back(f.name);
    keys.push_back(-std::abs(f.corr.r));
  }
  return detail::order_by(names, keys);
}

/// Pearson's R and p of every column against the target; a constant column or target gives r = 0, p = 1.
inline std::vector<FeatureCorrelation> correlate_features(const FeatureMatrix& m, int shuffles = kPermutationShuffles) {
  m.validate();
  std::vector<FeatureCorrelation> out;
  const bool target_varies = m.target.size() > 0 && (m.target.array() != m.target(0)).any();
  for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
    FeatureCorrelation f{m.names[static_cast<std::size_t>(j)], {}};
    const Vector col = m.values.col(j);
    if (target_varies && (col.array() != col(0)).any()) f.corr = pearson_r(col, m.target, shuffles);
    out.push_back(f);
  }
  return out;
}

}  // namespace lplab::analysis
