#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "lplab/core/error.hpp"
#include "lplab/core/rng.hpp"

namespace lplab::arm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kStateDim = 3;
inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

/// Goal region: an annular sector for the position and an interval for the
/// tool orientation, both centred on the bisector of the first quadrant.
struct Workspace {
  double radius_min = 0.8;
  double radius_max = 2.2;
  double angle_center = kPi / 4.0;
  double angle_span = kPi / 2.0;
  double phi_center = kPi / 4.0;
  double phi_span = 2.0;
};

struct ArmConfig {
  std::array<double, 3> link_lengths{1.0, 0.8, 0.6};
  std::array<double, 3> home_angles{kPi / 2.0, -kPi / 4.0, -kPi / 4.0};
  double dt = 0.1;
  int T = 20;
  int M = 3;
  double joint_velocity_limit = 8.0;
  Workspace workspace;

  [[nodiscard]] double reach() const { return link_lengths[0] + link_lengths[1] + link_lengths[2]; }

  void validate() const {
    for (double l : link_lengths)
      if (!(l > 0.0)) throw InvalidArgument("arm: link lengths must be positive");
    if (!(dt > 0.0)) throw InvalidArgument("arm: dt must be positive");
    if (T < 2) throw InvalidArgument("arm: T must be at least 2");
    if (M != 3) throw InvalidArgument("arm: the planar arm has exactly 3 joints");
    if (!(joint_velocity_limit > 0.0)) throw InvalidArgument("arm: velocity limit must be positive");
    if (!(workspace.radius_min < workspace.radius_max) || workspace.radius_max > reach() || workspace.radius_min < 0.0)
      throw InvalidArgument("arm: workspace radii must satisfy 0 <= min < max <= reach");
  }
};

struct EndState {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;

  [[nodiscard]] Vector to_vector() const { return Vector{{x, y, phi}}; }
  static EndState from_vector(const Vector& v) { return {v(0), v(1), wrap_angle(v(2))}; }
};

/// T x M joint velocities (rad/s); trailing rows may be zero padding.
struct Trajectory {
  Matrix velocities;

  [[nodiscard]] int steps() const { return static_cast<int>(velocities.rows()); }
  [[nodiscard]] int joints() const { return static_cast<int>(velocities.cols()); }

  /// Row-major flattening: index t*M + j.
  [[nodiscard]] Eigen::RowVectorXd flatten() const {
    Eigen::RowVectorXd out(velocities.size());
    for (Eigen::Index t = 0; t < velocities.rows(); ++t)
      for (Eigen::Index j = 0; j < velocities.cols(); ++j) out(t * velocities.cols() + j) = velocities(t, j);
    return out;
  }

  static Trajectory unflatten(const Eigen::Ref<const Eigen::RowVectorXd>& flat, int T, int M) {
    if (flat.size() != static_cast<Eigen::Index>(T) * M) throw DimensionError("trajectory: flat size mismatch");
    Trajectory tr{Matrix(T, M)};
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < M; ++j) tr.velocities(t, j) = flat(t * M + j);
    return tr;
  }

  static Trajectory zeros(int T, int M) { return {Matrix::Zero(T, M)}; }
};

class UnreachableError : public Error {
 public:
  UnreachableError(const std::string& msg, double wrist_distance) : Error(msg), wrist_distance_(wrist_distance) {}
  [[nodiscard]] double wrist_distance() const { return wrist_distance_; }

 private:
  double wrist_distance_;
};

class VelocityLimitError : public Error {
 public:
  using Error::Error;
};

inline EndState forward_kinematics(const std::array<double, 3>& angles, const ArmConfig& cfg) {
  double x = 0.0, y = 0.0, cum = 0.0;
  for (int i = 0; i < 3; ++i) {
    cum += angles[i];
    x += cfg.link_lengths[i] * std::cos(cum);
    y += cfg.link_lengths[i] * std::sin(cum);
  }
  return {x, y, wrap_angle(cum)};
}

/// Joint angles reached by Euler-integrating the velocities from home.
inline std::array<double, 3> integrate_angles(const Trajectory& traj, const ArmConfig& cfg) {
  if (traj.joints() != cfg.M || traj.steps() != cfg.T)
    throw DimensionError("execute: trajectory must be " + std::to_string(cfg.T) + "x" + std::to_string(cfg.M));
  std::array<double, 3> theta = cfg.home_angles;
  for (int t = 0; t < traj.steps(); ++t) {
    for (int j = 0; j < 3; ++j) {
      const double v = traj.velocities(t, j);
      if (!(std::abs(v) <= cfg.joint_velocity_limit)) {
        throw VelocityLimitError("execute: joint " + std::to_string(j) + " at step " + std::to_string(t) +
                                 " exceeds the velocity limit");
      }
      theta[j] += cfg.dt * v;
    }
  }
  return theta;
}

/// The Exe map: end state after executing the trajectory open-loop from home.
inline EndState execute(const Trajectory& traj, const ArmConfig& cfg) {
  return forward_kinematics(integrate_angles(traj, cfg), cfg);
}

/// Elbow-up analytic solution; theta3 absorbs the remaining orientation.
inline std::array<double, 3> inverse_kinematics(const EndState& target, const ArmConfig& cfg) {
  const auto [l1, l2, l3] = cfg.link_lengths;
  const double wx = target.x - l3 * std::cos(target.phi);
  const double wy = target.y - l3 * std::sin(target.phi);
  const double dist = std::hypot(wx, wy);
  const double c2 = (dist * dist - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (c2 > 1.0 + 1e-12 || c2 < -1.0 - 1e-12) {
    throw UnreachableError("inverse kinematics: wrist point at distance " + std::to_string(dist) +
                               " is outside the reachable annulus",
                           dist);
  }
  const double theta2 = -std::acos(std::clamp(c2, -1.0, 1.0));
  const double theta1 = wrap_angle(std::atan2(wy, wx) - std::atan2(l2 * std::sin(theta2), l1 + l2 * std::cos(theta2)));
  const double theta3 = wrap_angle(target.phi - theta1 - theta2);
  return {theta1, theta2, theta3};
}

/// Normalized quintic position profile 10u^3 - 15u^4 + 6u^5.
inline double min_jerk_position(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

/// Derivative of min_jerk_position with respect to u.
inline double min_jerk_rate(double u) {
  if (u < 0.0 || u > 1.0) return 0.0;
  return 30.0 * u * u * (1.0 - u) * (1.0 - u);
}

/// Minimum-jerk joint motion sampled at dt and zero-padded to T rows.
inline Trajectory min_jerk_trajectory(const std::array<double, 3>& start, const std::array<double, 3>& goal,
                                      double duration, const ArmConfig& cfg) {
  if (!(duration > 0.0) || duration > cfg.T * cfg.dt + 1e-12)
    throw InvalidArgument("min_jerk_trajectory: duration must be in (0, T*dt]");
  Trajectory tr = Trajectory::zeros(cfg.T, cfg.M);
  for (int t = 0; t < cfg.T; ++t) {
    const double time = t * cfg.dt;
    if (time > duration) break;
    const double rate = min_jerk_rate(time / duration) / duration;
    for (int j = 0; j < 3; ++j) {
      const double v = (goal[j] - start[j]) * rate;
      if (std::abs(v) > cfg.joint_velocity_limit) {
        throw VelocityLimitError("min_jerk_trajectory: joint " + std::to_string(j) + " needs " + std::to_string(v) +
                                 " rad/s");
      }
      tr.velocities(t, j) = v;
    }
  }
  return tr;
}

/// Uniform sample over the workspace sector and orientation interval.
inline EndState sample_workspace(const ArmConfig& cfg, Rng& rng) {
  const auto& w = cfg.workspace;
  const double r = std::sqrt(rng.uniform(w.radius_min * w.radius_min, w.radius_max * w.radius_max));
  const double a = w.angle_center + rng.uniform(-0.5, 0.5) * w.angle_span;
  const double phi = w.phi_center + rng.uniform(-0.5, 0.5) * w.phi_span;
  return {r * std::cos(a), r * std::sin(a), wrap_angle(phi)};
}

/// Workspace sample conditioned on being reachable by the arm.
inline EndState sample_reachable_goal(const ArmConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    EndState g = sample_workspace(cfg, rng);
    try {
      (void)inverse_kinematics(g, cfg);
      return g;
    } catch (const UnreachableError&) {
    }
  }
  throw InvalidArgument("workspace has no reachable goals");
}

struct RewardParams {
  double sigma_position = 0.1;
  double sigma_angle = 0.3;
  double success_threshold = 0.5;
};

/// exp(-(d_pos^2 / sigma_p^2 + d_ang^2 / sigma_a^2)) with wrapped angular distance.
inline double reward(const EndState& goal, const EndState& achieved, const RewardParams& p = {}) {
  const double dx = goal.x - achieved.x;
  const double dy = goal.y - achieved.y;
  const double da = wrap_angle(goal.phi - achieved.phi);
  return std::exp(-((dx * dx + dy * dy) / (p.sigma_position * p.sigma_position) +
                    (da * da) / (p.sigma_angle * p.sigma_angle)));
}

}  // namespace lplab::arm
