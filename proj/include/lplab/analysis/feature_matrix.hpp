#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lplab/core/error.hpp"

namespace lplab::analysis {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One row per generative model, one named column per feature, plus the label.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<std::string> row_ids;
  Matrix values;  // rows x features
  Vector target;

  void validate() const {
    if (static_cast<Eigen::Index>(names.size()) != values.cols()) throw DimensionError("feature matrix: name count differs from columns");
    if (target.size() != values.rows()) throw DimensionError("feature matrix: target length differs from rows");
    if (!row_ids.empty() && static_cast<Eigen::Index>(row_ids.size()) != values.rows())
      throw DimensionError("feature matrix: row id count differs from rows");
    if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
      throw InvalidArgument("feature matrix: column names must be unique");
    if (!values.allFinite() || !target.allFinite()) throw InvalidArgument("feature matrix: missing or non-finite values");
  }

  [[nodiscard]] Eigen::Index column(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidArgument("feature matrix: no column '" + name + "'");
    return static_cast<Eigen::Index>(it - names.begin());
  }

  /// Same rows restricted to `keep`, in that order.
  [[nodiscard]] FeatureMatrix select(const std::vector<std::string>& keep) const {
    FeatureMatrix out;
    out.names = keep;
    out.row_ids = row_ids;
    out.target = target;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) out.values.col(static_cast<Eigen::Index>(k)) = values.col(column(keep[k]));
    return out;
  }
};

/// Linear-interpolation quantile of a sample, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidArgument("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct ColumnScale {
  double median = 0.0;
  double iqr = 1.0;  // 1 when the interquartile range is zero
};

inline ColumnScale robust_column_scale(const Vector& column) {
  std::vector<double> v(column.data(), column.data() + column.size());
  ColumnScale s;
  s.median = quantile(v, 0.5);
  const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
  s.iqr = iqr > 0.0 ? iqr : 1.0;
  return s;
}

/// (x - median) / IQR per column; a zero IQR leaves the scale at 1.
inline FeatureMatrix robust_scale(const FeatureMatrix& m) {
  m.validate();
  if (m.values.rows() < 1) throw InvalidArgument("robust_scale: empty matrix");
  FeatureMatrix out = m;
  for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
    const auto s = robust_column_scale(m.values.col(j));
    out.values.col(j) = (m.values.col(j).array() - s.median) / s.iqr;
  }
  return out;
}

}  // namespace lplab::analysis
