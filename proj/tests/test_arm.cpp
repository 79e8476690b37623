#include <gtest/gtest.h>

#include <cmath>

#include "lplab/arm/arm_world.hpp"
#include "lplab/arm/dataset.hpp"
#include "support.hpp"

namespace {

using namespace lplab;
using namespace lplab::arm;

constexpr double kTol = 1e-12;

ArmConfig zero_home() {
  ArmConfig cfg;
  cfg.home_angles = {0.0, 0.0, 0.0};
  return cfg;
}

void expect_state(const EndState& s, double x, double y, double phi, double tol = kTol) {
  EXPECT_NEAR(s.x, x, tol);
  EXPECT_NEAR(s.y, y, tol);
  EXPECT_NEAR(wrap_angle(s.phi - phi), 0.0, tol);
}

TEST(WrapAngle, MapsIntoHalfOpenInterval) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3.0 * kPi / 2.0), -kPi / 2.0, kTol);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double a = wrap_angle(rng.uniform(-50.0, 50.0));
    EXPECT_GT(a, -kPi);
    EXPECT_LE(a, kPi);
  }
}

TEST(ForwardKinematics, StraightArm) { expect_state(forward_kinematics({0.0, 0.0, 0.0}, ArmConfig{}), 2.4, 0.0, 0.0); }

TEST(ForwardKinematics, RotatedStraightArm) {
  expect_state(forward_kinematics({kPi / 2.0, 0.0, 0.0}, ArmConfig{}), 0.0, 2.4, kPi / 2.0);
}

TEST(ForwardKinematics, BentArm) {
  expect_state(forward_kinematics({kPi / 2.0, -kPi / 2.0, 0.0}, ArmConfig{}), 1.4, 1.0, 0.0);
}

TEST(Execute, ZeroVelocitiesStayHome) {
  const ArmConfig cfg;
  const auto s = execute(Trajectory::zeros(cfg.T, cfg.M), cfg);
  const auto home = forward_kinematics(cfg.home_angles, cfg);
  expect_state(s, home.x, home.y, home.phi);
}

TEST(Execute, SingleStepIntegratesOnce) {
  const ArmConfig cfg = zero_home();
  Trajectory tr = Trajectory::zeros(cfg.T, cfg.M);
  tr.velocities(0, 0) = 0.1;
  const auto angles = integrate_angles(tr, cfg);
  EXPECT_NEAR(angles[0], 0.01, kTol);
  EXPECT_EQ(angles[1], 0.0);
  EXPECT_EQ(angles[2], 0.0);
  const auto s = execute(tr, cfg);
  expect_state(s, 2.4 * std::cos(0.01), 2.4 * std::sin(0.01), 0.01);
}

TEST(Execute, DoubledStepWithHalvedVelocitiesIsInvariant) {
  ArmConfig cfg;
  Rng rng(2);
  Trajectory tr{lplab::testing::random_matrix(cfg.T, cfg.M, rng, 0.5)};
  const auto a = execute(tr, cfg);
  cfg.dt *= 2.0;
  tr.velocities *= 0.5;
  const auto b = execute(tr, cfg);
  expect_state(b, a.x, a.y, a.phi, 1e-12);
}

TEST(Execute, RejectsVelocityOverLimit) {
  const ArmConfig cfg;
  Trajectory tr = Trajectory::zeros(cfg.T, cfg.M);
  tr.velocities(3, 1) = cfg.joint_velocity_limit * 1.01;
  EXPECT_THROW((void)execute(tr, cfg), VelocityLimitError);
  tr.velocities(3, 1) = std::nan("");
  EXPECT_THROW((void)execute(tr, cfg), VelocityLimitError);
}

TEST(Execute, RejectsWrongShape) {
  const ArmConfig cfg;
  EXPECT_THROW((void)execute(Trajectory::zeros(cfg.T - 1, cfg.M), cfg), DimensionError);
}

TEST(Execute, LipschitzInSingleVelocityEntry) {
  const ArmConfig cfg;
  const double bound_per_delta = cfg.reach() * cfg.dt;
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    Trajectory tr{lplab::testing::random_matrix(cfg.T, cfg.M, rng, 0.5)};
    const auto a = execute(tr, cfg);
    const int t = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.T)));
    const int j = static_cast<int>(rng.index(3));
    const double delta = rng.uniform(-0.5, 0.5);
    tr.velocities(t, j) += delta;
    const auto b = execute(tr, cfg);
    EXPECT_LE(std::hypot(a.x - b.x, a.y - b.y), bound_per_delta * std::abs(delta) + 1e-12);
  }
}

TEST(Execute, Deterministic) {
  const ArmConfig cfg;
  Rng rng(4);
  const Trajectory tr{lplab::testing::random_matrix(cfg.T, cfg.M, rng, 0.5)};
  const auto a = execute(tr, cfg);
  const auto b = execute(tr, cfg);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.phi, b.phi);
}

TEST(InverseKinematics, FullyExtended) {
  const auto a = inverse_kinematics({2.4, 0.0, 0.0}, ArmConfig{});
  for (double v : a) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(InverseKinematics, RoundTripOnRandomReachableTargets) {
  const ArmConfig cfg;
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const std::array<double, 3> q{rng.uniform(-kPi, kPi), rng.uniform(-kPi + 0.05, -0.05), rng.uniform(-kPi, kPi)};
    const auto target = forward_kinematics(q, cfg);
    const auto back = forward_kinematics(inverse_kinematics(target, cfg), cfg);
    expect_state(back, target.x, target.y, target.phi, 1e-9);
  }
}

TEST(InverseKinematics, UnreachableTargetCarriesWristDistance) {
  try {
    (void)inverse_kinematics({10.0, 0.0, 0.0}, ArmConfig{});
    FAIL() << "expected UnreachableError";
  } catch (const UnreachableError& e) {
    EXPECT_NEAR(e.wrist_distance(), 9.4, 1e-12);
  }
}

TEST(InverseKinematics, ElbowUpBranch) {
  const ArmConfig cfg;
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const auto a = inverse_kinematics(sample_reachable_goal(cfg, rng), cfg);
    EXPECT_LE(a[1], 0.0);
  }
}

TEST(MinJerk, ProfileMidpointIsOneHalf) {
  EXPECT_DOUBLE_EQ(min_jerk_position(0.5), 0.5);
  EXPECT_EQ(min_jerk_position(0.0), 0.0);
  EXPECT_EQ(min_jerk_position(1.0), 1.0);
  EXPECT_EQ(min_jerk_rate(0.0), 0.0);
  EXPECT_EQ(min_jerk_rate(1.0), 0.0);
}

TEST(MinJerk, RateIsDerivativeOfPosition) {
  for (double u = 0.05; u < 1.0; u += 0.05) {
    const double h = 1e-6;
    EXPECT_NEAR(min_jerk_rate(u), (min_jerk_position(u + h) - min_jerk_position(u - h)) / (2.0 * h), 1e-8);
  }
}

TEST(MinJerk, RowsBeyondDurationAreZero) {
  const ArmConfig cfg;
  const double duration = 1.25;
  const auto tr = min_jerk_trajectory({0.0, 0.0, 0.0}, {0.5, -0.3, 0.2}, duration, cfg);
  const int active = static_cast<int>(std::ceil(duration / cfg.dt));
  for (int t = active; t < cfg.T; ++t)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(tr.velocities(t, j), 0.0);
  EXPECT_EQ(tr.velocities.row(0).norm(), 0.0);
}

TEST(MinJerk, ComposedExecutionReachesGoal) {
  const ArmConfig cfg;
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto goal = sample_reachable_goal(cfg, rng);
    const double d = rng.uniform(1.2, 2.0);
    try {
      const auto s = execute(min_jerk_trajectory(cfg.home_angles, inverse_kinematics(goal, cfg), d, cfg), cfg);
      EXPECT_LT(std::hypot(s.x - goal.x, s.y - goal.y), 0.02);
    } catch (const VelocityLimitError&) {
    }
  }
}

TEST(MinJerk, RejectsDurationBeyondHorizon) {
  const ArmConfig cfg;
  EXPECT_THROW((void)min_jerk_trajectory({0, 0, 0}, {1, 0, 0}, cfg.T * cfg.dt + 0.5, cfg), InvalidArgument);
}

TEST(MinJerk, FastMotionExceedsLimit) {
  const ArmConfig cfg;
  EXPECT_THROW((void)min_jerk_trajectory({0, 0, 0}, {6, 0, 0}, 0.2, cfg), VelocityLimitError);
}

TEST(Trajectory, FlattenRoundTrip) {
  Rng rng(8);
  const Trajectory tr{lplab::testing::random_matrix(20, 3, rng)};
  const auto flat = tr.flatten();
  EXPECT_EQ(flat(3), tr.velocities(1, 0));
  EXPECT_EQ(Trajectory::unflatten(flat, 20, 3).velocities, tr.velocities);
}

TEST(Reward, OneAtGoal) {
  const EndState g{1.0, 1.0, 0.5};
  EXPECT_EQ(reward(g, g), 1.0);
}

TEST(Reward, OneSigmaOffsetGivesInverseE) {
  const EndState g{1.0, 1.0, 0.5};
  EXPECT_NEAR(reward(g, {1.1, 1.0, 0.5}), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(reward(g, {1.0, 1.0, 0.8}), std::exp(-1.0), 1e-12);
}

TEST(Reward, StrictlyDecreasingInPositionError) {
  const EndState g{1.0, 1.0, 0.5};
  double prev = 2.0;
  for (double d = 0.0; d < 0.5; d += 0.01) {
    const double r = reward(g, {1.0 + d, 1.0, 0.5});
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Reward, AngularDistanceWraps) {
  const double r = reward({0.0, 0.0, kPi - 0.01}, {0.0, 0.0, -kPi + 0.01});
  EXPECT_NEAR(r, std::exp(-(0.02 * 0.02) / (0.3 * 0.3)), 1e-12);
}

TEST(Dataset, ZeroCountIsEmpty) {
  Rng rng(9);
  EXPECT_TRUE(generate_dataset(0, ArmConfig{}, rng).empty());
}

TEST(Dataset, StoredEndStatesAreSelfConsistent) {
  const ArmConfig cfg;
  Rng rng(10);
  const auto ds = generate_dataset(300, cfg, rng);
  ASSERT_EQ(ds.size(), 300u);
  for (const auto& r : ds.records) {
    const auto s = execute(r.trajectory, cfg);
    expect_state(s, r.end_state.x, r.end_state.y, r.end_state.phi, 1e-9);
    EXPECT_GT(r.end_state.phi, -kPi);
    EXPECT_LE(r.end_state.phi, kPi);
  }
}

TEST(Dataset, FillsOccupancyGridAndSpansWorkspace) {
  const ArmConfig cfg;
  Rng rng(11);
  const auto ds = generate_dataset(4000, cfg, rng);
  const auto grid = occupancy_grid(ds, cfg, 10);
  for (const auto& row : grid)
    for (int c : row) EXPECT_GT(c, 0);

  const auto& w = cfg.workspace;
  double rmin = 1e9, rmax = -1e9, amin = 1e9, amax = -1e9, pmin = 1e9, pmax = -1e9;
  for (const auto& r : ds.records) {
    const double rad = std::hypot(r.end_state.x, r.end_state.y);
    const double ang = std::atan2(r.end_state.y, r.end_state.x);
    rmin = std::min(rmin, rad), rmax = std::max(rmax, rad);
    amin = std::min(amin, ang), amax = std::max(amax, ang);
    pmin = std::min(pmin, r.end_state.phi), pmax = std::max(pmax, r.end_state.phi);
  }
  const double rtol = 0.01 * (w.radius_max - w.radius_min);
  const double atol = 0.01 * w.angle_span;
  const double ptol = 0.01 * w.phi_span;
  EXPECT_NEAR(rmin, w.radius_min, rtol);
  EXPECT_NEAR(rmax, w.radius_max, rtol);
  EXPECT_NEAR(amin, w.angle_center - 0.5 * w.angle_span, atol);
  EXPECT_NEAR(amax, w.angle_center + 0.5 * w.angle_span, atol);
  EXPECT_NEAR(pmin, w.phi_center - 0.5 * w.phi_span, ptol);
  EXPECT_NEAR(pmax, w.phi_center + 0.5 * w.phi_span, ptol);
}

TEST(Dataset, SameSeedSameRecords) {
  const ArmConfig cfg;
  Rng a(12), b(12);
  const auto x = generate_dataset(50, cfg, a);
  const auto y = generate_dataset(50, cfg, b);
  EXPECT_EQ(x.flattened(), y.flattened());
  EXPECT_EQ(x.end_states(), y.end_states());
}

TEST(Dataset, BinaryRoundTripAndHeader) {
  const ArmConfig cfg;
  Rng rng(13);
  const auto ds = generate_dataset(40, cfg, rng);
  lplab::testing::TempDir dir("dataset");
  save_dataset(dir.file("d.lpds"), ds);
  const auto bytes = lplab::testing::read_file(dir.path() / "d.lpds");
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(0, 4), "LPDS");
  const auto back = load_dataset(dir.file("d.lpds"));
  EXPECT_EQ(back.T, ds.T);
  EXPECT_EQ(back.M, ds.M);
  EXPECT_EQ(back.flattened(), ds.flattened());
  EXPECT_EQ(back.end_states(), ds.end_states());
}

TEST(Dataset, CorruptMagicIsRejected) {
  lplab::testing::TempDir dir("dataset_bad");
  {
    std::ofstream out(dir.file("bad.lpds"), std::ios::binary);
    out << "NOPE0000000000000000";
  }
  EXPECT_THROW((void)load_dataset(dir.file("bad.lpds")), Error);
}

TEST(Dataset, CsvExportHasOneColumnPerEntry) {
  const ArmConfig cfg;
  Rng rng(14);
  const auto ds = generate_dataset(5, cfg, rng);
  lplab::testing::TempDir dir("dataset_csv");
  export_dataset_csv(dir.file("d.csv"), ds);
  const auto text = lplab::testing::read_file(dir.path() / "d.csv");
  const auto header = text.substr(0, text.find('\n'));
  EXPECT_EQ(header.rfind("t0_j0,", 0), 0u);
  EXPECT_NE(header.find("t19_j2,x,y,phi"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
}

}  // namespace
