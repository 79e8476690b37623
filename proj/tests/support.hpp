#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "lplab/core/rng.hpp"

namespace lplab::testing {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct FdReport {
  int probes = 0;
  double worst = 0.0;
};

/// Central differences of `loss` at `probes` entries of `values`, picked
/// round-robin over the arrays and uniformly inside each one.
inline FdReport fd_check(const std::vector<std::span<double>>& values, const std::vector<std::span<const double>>& grads,
                         const std::function<double()>& loss, int probes, Rng& rng) {
  FdReport r;
  for (int p = 0; p < probes; ++p) {
    const std::size_t a = static_cast<std::size_t>(p) % values.size();
    if (values[a].empty()) continue;
    const std::size_t k = rng.index(values[a].size());
    double& x = values[a][k];
    const double saved = x;
    x = saved + kFdStep;
    const double up = loss();
    x = saved - kFdStep;
    const double down = loss();
    x = saved;
    const double numeric = (up - down) / (2.0 * kFdStep);
    r.worst = std::max(r.worst, relative_error(grads[a][k], numeric));
    ++r.probes;
  }
  return r;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
  return m;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(std::filesystem::temp_directory_path() / ("lplab_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace lplab::testing
