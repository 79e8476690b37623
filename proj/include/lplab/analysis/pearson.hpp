#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lplab/analysis/feature_matrix.hpp"
#include "lplab/core/rng.hpp"

namespace lplab::analysis {

inline constexpr int kPermutationShuffles = 10000;
inline constexpr std::uint64_t kPermutationSeed = 0x5eed;

struct Correlation {
  double r = 0.0;
  double p = 1.0;
};

/// Sample correlation coefficient; throws on constant input or length < 3.
inline double correlation(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw DimensionError("pearson: vectors differ in length");
  if (x.size() < 3) throw InvalidArgument("pearson: at least 3 pairs required");
  const Vector dx = x.array() - x.mean();
  const Vector dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm();
  const double syy = dy.squaredNorm();
  if (!(sxx > 0.0) || !(syy > 0.0)) throw InvalidArgument("pearson: input is constant");
  return std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Pearson's r with a two-sided permutation p-value, (1 + #{|r_perm| >= |r|}) / (1 + shuffles).
inline Correlation pearson_r(const Vector& x, const Vector& y, int shuffles = kPermutationShuffles,
                             std::uint64_t seed = kPermutationSeed) {
  if (shuffles < 1) throw InvalidArgument("pearson: at least one shuffle required");
  Correlation c;
  c.r = correlation(x, y);
  const Vector dx = x.array() - x.mean();
  const Vector dy = y.array() - y.mean();
  const double norm = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  const double observed = std::abs(c.r) - 1e-12;
  Rng rng(seed);
  std::vector<double> perm(dy.data(), dy.data() + dy.size());
  int extreme = 0;
  for (int s = 0; s < shuffles; ++s) {
    rng.shuffle(perm.begin(), perm.end());
    double dot = 0.0;
    for (Eigen::Index i = 0; i < dx.size(); ++i) dot += dx(i) * perm[static_cast<std::size_t>(i)];
    if (std::abs(dot / norm) >= observed) ++extreme;
  }
  c.p = static_cast<double>(1 + extreme) / static_cast<double>(1 + shuffles);
  return c;
}

}  // namespace lplab::analysis
