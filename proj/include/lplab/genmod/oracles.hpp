#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "lplab/arm/arm_world.hpp"
#include "lplab/genmod/generative_model.hpp"

namespace lplab::genmod {

/// Ignores its latent input: every latent decodes to the same trajectory.
class ConstantGenerator {
 public:
  ConstantGenerator(int latent_dim, Trajectory trajectory, Prior prior = Prior::standard_normal)
      : latent_dim_(latent_dim), trajectory_(std::move(trajectory)), prior_(prior) {}

  [[nodiscard]] int latent_dim() const { return latent_dim_; }
  [[nodiscard]] Prior prior() const { return prior_; }
  [[nodiscard]] Matrix sample_prior(std::size_t n, Rng& rng) const { return sample_latents(prior_, latent_dim_, n, rng); }
  [[nodiscard]] std::vector<Trajectory> decode_batch(const Matrix& z) const {
    if (z.cols() != latent_dim_) throw DimensionError("constant generator: latent width mismatch");
    return std::vector<Trajectory>(static_cast<std::size_t>(z.rows()), trajectory_);
  }

 private:
  int latent_dim_;
  Trajectory trajectory_;
  Prior prior_;
};

/// Closest goal with the same orientation whose wrist point lies strictly inside the reachable annulus.
inline arm::EndState project_reachable(const arm::EndState& goal, const arm::ArmConfig& cfg, double margin = 1e-6) {
  const double l1 = cfg.link_lengths[0], l2 = cfg.link_lengths[1], l3 = cfg.link_lengths[2];
  const double wx = goal.x - l3 * std::cos(goal.phi);
  const double wy = goal.y - l3 * std::sin(goal.phi);
  const double r = std::hypot(wx, wy);
  const double lo = std::abs(l1 - l2) + margin;
  const double hi = l1 + l2 - margin;
  if (r >= lo && r <= hi) return goal;
  const double target = std::clamp(r, lo, hi);
  const double ux = r > 0.0 ? wx / r : 1.0;
  const double uy = r > 0.0 ? wy / r : 0.0;
  return {target * ux + l3 * std::cos(goal.phi), target * uy + l3 * std::sin(goal.phi), goal.phi};
}

/// Disentangled by construction: latent component i (i < 3) sets end-state
/// component i through goal = center + scale * alpha, realized by inverse
/// kinematics and a fixed-duration minimum-jerk motion. Extra latent
/// components are ignored. Unreachable goals are first projected onto the
/// reachable set; motions over the velocity limit decode to zeros.
class GoalOracleGenerator {
 public:
  GoalOracleGenerator(arm::ArmConfig cfg, int latent_dim, std::array<double, 3> center, std::array<double, 3> scale,
                      double duration, Prior prior = Prior::uniform)
      : cfg_(std::move(cfg)), latent_dim_(latent_dim), center_(center), scale_(scale), duration_(duration), prior_(prior) {
    if (latent_dim < arm::kStateDim) throw InvalidArgument("goal oracle: latent dimension must be at least 3");
  }

  /// Box [0.6, 1.2]^2 x [pi/4 - 0.5, pi/4 + 0.5] for alpha in [-1, 1]^3: every goal is reachable.
  static GoalOracleGenerator reachable_box(const arm::ArmConfig& cfg, int latent_dim = 3) {
    return {cfg, latent_dim, {0.9, 0.9, arm::kPi / 4.0}, {0.3, 0.3, 0.5}, 1.8};
  }

  /// Box covering the default workspace sector for alpha in [-1, 1]^3.
  static GoalOracleGenerator workspace_box(const arm::ArmConfig& cfg, int latent_dim = 3) {
    return {cfg, latent_dim, {1.1, 1.1, arm::kPi / 4.0}, {1.1, 1.1, 1.0}, 1.8};
  }

  [[nodiscard]] int latent_dim() const { return latent_dim_; }
  [[nodiscard]] Prior prior() const { return prior_; }
  [[nodiscard]] Matrix sample_prior(std::size_t n, Rng& rng) const { return sample_latents(prior_, latent_dim_, n, rng); }

  [[nodiscard]] arm::EndState goal_for(const Eigen::Ref<const Eigen::RowVectorXd>& alpha) const {
    return {center_[0] + scale_[0] * alpha(0), center_[1] + scale_[1] * alpha(1), center_[2] + scale_[2] * alpha(2)};
  }

  /// Inverse of goal_for on the first three components.
  [[nodiscard]] Vector latent_for(const arm::EndState& goal) const {
    Vector a = Vector::Zero(latent_dim_);
    a(0) = (goal.x - center_[0]) / scale_[0];
    a(1) = (goal.y - center_[1]) / scale_[1];
    a(2) = arm::wrap_angle(goal.phi - center_[2]) / scale_[2];
    return a;
  }

  [[nodiscard]] Trajectory decode_one(const Eigen::Ref<const Eigen::RowVectorXd>& alpha) const {
    try {
      const auto angles = arm::inverse_kinematics(project_reachable(goal_for(alpha), cfg_), cfg_);
      return arm::min_jerk_trajectory(cfg_.home_angles, angles, duration_, cfg_);
    } catch (const arm::VelocityLimitError&) {
    }
    return Trajectory::zeros(cfg_.T, cfg_.M);
  }

  [[nodiscard]] std::vector<Trajectory> decode_batch(const Matrix& z) const {
    if (z.cols() != latent_dim_) throw DimensionError("goal oracle: latent width mismatch");
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) out.push_back(decode_one(z.row(i)));
    return out;
  }

 private:
  arm::ArmConfig cfg_;
  int latent_dim_;
  std::array<double, 3> center_;
  std::array<double, 3> scale_;
  double duration_;
  Prior prior_;
};

static_assert(LatentGenerator<ConstantGenerator>);
static_assert(LatentGenerator<GoalOracleGenerator>);

}  // namespace lplab::genmod
