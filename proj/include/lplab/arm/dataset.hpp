#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "lplab/arm/arm_world.hpp"
#include "lplab/core/binary_io.hpp"
#include "lplab/core/csv.hpp"

namespace lplab::arm {

struct Record {
  Trajectory trajectory;
  EndState end_state;  // execute(trajectory)
};

struct Dataset {
  int T = 0;
  int M = 0;
  std::vector<Record> records;

  [[nodiscard]] std::size_t size() const { return records.size(); }
  [[nodiscard]] bool empty() const { return records.empty(); }

  /// count x (T*M) matrix of row-major flattened trajectories.
  [[nodiscard]] Matrix flattened() const {
    Matrix out(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(T) * M);
    for (std::size_t i = 0; i < records.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = records[i].trajectory.flatten();
    return out;
  }

  /// count x 3 matrix of end states.
  [[nodiscard]] Matrix end_states() const {
    Matrix out(static_cast<Eigen::Index>(records.size()), kStateDim);
    for (std::size_t i = 0; i < records.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = records[i].end_state.to_vector().transpose();
    return out;
  }
};

struct DatasetOptions {
  double duration_min = 0.8;
  double duration_max = 1.8;
  int max_attempts = 20;
};

/// Planner-style demonstrations: uniform goals, IK, minimum-jerk motion of
/// random duration, stored together with the executed end state.
inline Dataset generate_dataset(std::size_t count, const ArmConfig& cfg, Rng& rng, const DatasetOptions& opt = {}) {
  cfg.validate();
  Dataset ds{cfg.T, cfg.M, {}};
  ds.records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::optional<Record> rec;
    std::string last_error;
    for (int attempt = 0; attempt < opt.max_attempts && !rec; ++attempt) {
      const EndState goal = sample_workspace(cfg, rng);
      const double duration = rng.uniform(opt.duration_min, opt.duration_max);
      try {
        const auto angles = inverse_kinematics(goal, cfg);
        Trajectory tr = min_jerk_trajectory(cfg.home_angles, angles, duration, cfg);
        const EndState reached = execute(tr, cfg);
        rec = Record{std::move(tr), reached};
      } catch (const UnreachableError& e) {
        last_error = e.what();
      } catch (const VelocityLimitError& e) {
        last_error = e.what();
      }
    }
    if (!rec) {
      throw Error("generate_dataset: record " + std::to_string(i) + " failed after " +
                  std::to_string(opt.max_attempts) + " attempts: " + last_error);
    }
    ds.records.push_back(std::move(*rec));
  }
  return ds;
}

inline constexpr std::uint32_t kDatasetVersion = 1;

// LPDS layout (little-endian): "LPDS" u32 version u64 count u32 T u32 M u32 N_s,
// then per record f64 velocities[T*M] (row-major) and f64 end_state[N_s].
inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  binio::write_magic(out, "LPDS");
  binio::write_le<std::uint32_t>(out, kDatasetVersion);
  binio::write_le<std::uint64_t>(out, ds.records.size());
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.T));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.M));
  binio::write_le<std::uint32_t>(out, kStateDim);
  for (const auto& r : ds.records) {
    for (int t = 0; t < ds.T; ++t)
      for (int j = 0; j < ds.M; ++j) binio::write_f64(out, r.trajectory.velocities(t, j));
    binio::write_f64(out, r.end_state.x);
    binio::write_f64(out, r.end_state.y);
    binio::write_f64(out, r.end_state.phi);
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  binio::expect_magic(in, "LPDS");
  const auto version = binio::read_le<std::uint32_t>(in);
  if (version != kDatasetVersion) throw IoError("unsupported dataset version " + std::to_string(version));
  const auto count = binio::read_le<std::uint64_t>(in);
  Dataset ds;
  ds.T = static_cast<int>(binio::read_le<std::uint32_t>(in));
  ds.M = static_cast<int>(binio::read_le<std::uint32_t>(in));
  const auto ns = binio::read_le<std::uint32_t>(in);
  if (ns != kStateDim || ds.T < 1 || ds.M < 1) throw IoError("unsupported dataset shape");
  ds.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Record r{Trajectory::zeros(ds.T, ds.M), {}};
    for (int t = 0; t < ds.T; ++t)
      for (int j = 0; j < ds.M; ++j) r.trajectory.velocities(t, j) = binio::read_f64(in);
    r.end_state.x = binio::read_f64(in);
    r.end_state.y = binio::read_f64(in);
    r.end_state.phi = binio::read_f64(in);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

/// One row per record: t0_j0..t{T-1}_j{M-1}, x, y, phi.
inline void export_dataset_csv(const std::string& path, const Dataset& ds, std::size_t max_rows = SIZE_MAX) {
  csv::Writer w(path);
  std::vector<std::string> header;
  for (int t = 0; t < ds.T; ++t)
    for (int j = 0; j < ds.M; ++j) header.push_back("t" + std::to_string(t) + "_j" + std::to_string(j));
  header.insert(header.end(), {"x", "y", "phi"});
  w.header(header);
  const std::size_t n = std::min(max_rows, ds.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = ds.records[i];
    std::vector<double> row;
    row.reserve(header.size());
    for (int t = 0; t < ds.T; ++t)
      for (int j = 0; j < ds.M; ++j) row.push_back(r.trajectory.velocities(t, j));
    row.insert(row.end(), {r.end_state.x, r.end_state.y, r.end_state.phi});
    w.row(row);
  }
}

/// Occupancy counts of end-state positions over a bins x bins grid in
/// (radius, sector angle) coordinates of the workspace.
inline std::vector<std::vector<int>> occupancy_grid(const Dataset& ds, const ArmConfig& cfg, int bins = 10) {
  std::vector<std::vector<int>> grid(bins, std::vector<int>(bins, 0));
  const auto& w = cfg.workspace;
  const double a0 = w.angle_center - 0.5 * w.angle_span;
  for (const auto& r : ds.records) {
    const double radius = std::hypot(r.end_state.x, r.end_state.y);
    const double angle = std::atan2(r.end_state.y, r.end_state.x);
    const int ri = static_cast<int>(std::floor((radius - w.radius_min) / (w.radius_max - w.radius_min) * bins));
    const int ai = static_cast<int>(std::floor((angle - a0) / w.angle_span * bins));
    if (ri >= 0 && ri < bins && ai >= 0 && ai < bins) ++grid[ri][ai];
  }
  return grid;
}

}  // namespace lplab::arm
