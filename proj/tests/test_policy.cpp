#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "lplab/genmod/oracles.hpp"
#include "lplab/policy/em_policy.hpp"
#include "support.hpp"

namespace {

using namespace lplab;
using namespace lplab::policy;
using lplab::testing::random_matrix;

constexpr int kLatent = 3;

PolicyNet make_policy(std::uint64_t seed) {
  Rng rng(seed);
  return PolicyNet(arm::kStateDim, kLatent, 16, 2, rng);
}

void perturb(GaussianPolicy& p, double scale, Rng& rng) {
  for (auto& v : p.net.parameters())
    for (double& x : v.values) x += scale * rng.normal();
}

RolloutBatch synthetic_batch(int n, std::uint64_t seed) {
  Rng rng(seed);
  RolloutBatch b;
  b.states = random_matrix(n, arm::kStateDim, rng);
  b.latents = random_matrix(n, kLatent, rng);
  b.rewards = (random_matrix(n, 1, rng).col(0).array().abs().min(1.0)).matrix();
  b.advantages = random_matrix(n, 1, rng).col(0);
  return b;
}

std::vector<double> flat_params(GaussianPolicy& p) {
  std::vector<double> out;
  for (auto& v : p.net.parameters()) out.insert(out.end(), v.values.begin(), v.values.end());
  return out;
}

TEST(Rollouts, SameSeedSameBatchAndRewardsInRange) {
  const arm::ArmConfig cfg;
  const auto oracle = genmod::GoalOracleGenerator::workspace_box(cfg);
  auto pi = make_policy(1);
  Rng vr(2);
  ValueNet v(arm::kStateDim, 16, 2, vr);
  Rng a(3), b(3);
  const auto x = collect_rollouts(pi, v, oracle, cfg, {}, 64, a);
  const auto y = collect_rollouts(pi, v, oracle, cfg, {}, 64, b);
  EXPECT_EQ(x.rewards, y.rewards);
  EXPECT_EQ(x.latents, y.latents);
  EXPECT_GE(x.rewards.minCoeff(), 0.0);
  EXPECT_LE(x.rewards.maxCoeff(), 1.0);
  EXPECT_LT((x.advantages - (x.rewards - v.predict(x.states))).cwiseAbs().maxCoeff(), 1e-15);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x.failed[i]) {
      EXPECT_EQ(x.rewards(static_cast<Eigen::Index>(i)), 0.0);
    }
}

TEST(Rollouts, DeterministicPolicyRepeatsAcrossSeeds) {
  const arm::ArmConfig cfg;
  const auto oracle = genmod::GoalOracleGenerator::reachable_box(cfg);
  auto pi = make_policy(4);
  auto& last = pi.net.layers().back();
  last.weight.bottomRows(kLatent).setZero();
  last.bias.tail(kLatent).setConstant(-50.0);
  Rng vr(5);
  ValueNet v(arm::kStateDim, 16, 2, vr);
  Rng a(6), b(6);
  const auto x = collect_rollouts(pi, v, oracle, cfg, {}, 32, a);
  const auto y = collect_rollouts(pi, v, oracle, cfg, {}, 32, b);
  EXPECT_EQ(x.rewards, y.rewards);
  const auto heads = pi.heads(x.states);
  EXPECT_LT((x.latents - heads.mean).cwiseAbs().maxCoeff(), 0.01);
}

TEST(Rollouts, UntrainedPolicyMatchesPriorBaseline) {
  const arm::ArmConfig cfg;
  Rng init(7);
  genmod::GenerativeModel model(genmod::ModelKind::vae, kLatent, cfg.T, cfg.M, cfg.joint_velocity_limit, 4, init);
  model.decoder().set_mode(nn::Mode::eval);
  model.set_normalization({Vector::Zero(3), Vector::Constant(3, 0.4)});
  auto pi = make_policy(8);
  pi.net.layers().back().weight.setZero();
  pi.net.layers().back().bias.setZero();
  Rng vr(9);
  ValueNet v(arm::kStateDim, 16, 2, vr);
  Rng rng(10);
  const int n = 500;
  const auto batch = collect_rollouts(pi, v, model, cfg, {}, n, rng);

  Rng prior_rng(11);
  const Matrix z = model.sample_prior(n, prior_rng);
  const auto trajectories = model.decode_batch(z);
  Vector prior_rewards(n);
  for (int i = 0; i < n; ++i) {
    const auto goal = arm::EndState::from_vector(batch.states.row(i).transpose());
    prior_rewards(i) = arm::reward(goal, arm::execute(trajectories[static_cast<std::size_t>(i)], cfg));
  }
  auto sd = [](const Vector& r) { return std::sqrt((r.array() - r.mean()).square().mean()); };
  const double se = std::sqrt((sd(batch.rewards) * sd(batch.rewards) + sd(prior_rewards) * sd(prior_rewards)) / n);
  EXPECT_LE(std::abs(batch.rewards.mean() - prior_rewards.mean()), 2.0 * se + 1e-12);
}

TEST(EStep, SurrogateAtPolicyIsMeanAdvantage) {
  const auto pi = make_policy(12);
  const VariationalPolicy q(pi);
  const auto b = synthetic_batch(40, 13);
  const auto s = surrogate(q, pi, b);
  EXPECT_EQ(s.mean_kl, 0.0);
  EXPECT_NEAR(s.objective, b.advantages.mean(), 1e-15);
}

TEST(EStep, ZeroAdvantageKeepsKlAtZero) {
  const auto pi = make_policy(14);
  VariationalPolicy q(pi);
  auto b = synthetic_batch(40, 15);
  b.advantages.setZero();
  const auto trace = e_step(q, pi, b, 30, 1e-3);
  for (const auto& t : trace) EXPECT_LE(t.mean_kl, 1e-14);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i].mean_kl, trace[i - 1].mean_kl + 1e-14);
}

TEST(EStep, MovesTowardPositiveAdvantageLatent) {
  const auto pi = make_policy(16);
  VariationalPolicy q(pi);
  RolloutBatch b;
  b.states = Matrix::Zero(2, arm::kStateDim);
  b.states.row(0) << 0.5, -0.2, 0.1;
  b.states.row(1) = b.states.row(0);
  const Vector mu = pi.heads(b.states).mean.row(0).transpose();
  Rng rng(17);
  const Vector dir = random_matrix(kLatent, 1, rng).col(0).normalized();
  b.latents = Matrix(2, kLatent);
  b.latents.row(0) = (mu + 0.5 * dir).transpose();
  b.latents.row(1) = (mu - 0.5 * dir).transpose();
  b.advantages = Vector{{1.0, -1.0}};
  (void)e_step(q, pi, b, 20, 1e-3);
  const Vector moved = q.heads(b.states).mean.row(0).transpose() - mu;
  EXPECT_GT(moved.dot(dir), 0.0);
}

TEST(EStep, ObjectiveNonDecreasingForSmallSteps) {
  const auto pi = make_policy(18);
  VariationalPolicy q(pi);
  const auto b = synthetic_batch(64, 19);
  const auto trace = e_step(q, pi, b, 50, 1e-3);
  ASSERT_EQ(trace.size(), 51u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_GE(trace[i].objective, trace[i - 1].objective - 1e-12);
  EXPECT_GT(trace.back().objective, trace.front().objective);
}

TEST(EStep, BatchOrderDoesNotMatter) {
  const auto pi = make_policy(20);
  const auto b = synthetic_batch(32, 21);
  std::vector<Eigen::Index> order(32);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(22);
  rng.shuffle(order.begin(), order.end());
  RolloutBatch p = b;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    p.states.row(r) = b.states.row(order[i]);
    p.latents.row(r) = b.latents.row(order[i]);
    p.advantages(r) = b.advantages(order[i]);
  }
  VariationalPolicy q1(pi), q2(pi);
  (void)e_step(q1, pi, b, 10, 1e-3);
  (void)e_step(q2, pi, p, 10, 1e-3);
  const auto a = flat_params(q1), c = flat_params(q2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], c[i], 1e-12);
}

TEST(EStep, KlCoefficientMustBePositive) {
  EmConfig em;
  em.kl_coef = 0.0;
  EXPECT_THROW(em.validate(), InvalidArgument);
}

TEST(MStep, PolicyEqualToTargetHasZeroLossAndGradient) {
  auto pi = make_policy(23);
  const VariationalPolicy q(pi);
  const auto b = synthetic_batch(20, 24);
  const auto [loss, grads] = m_step_gradients(pi, q, b.states);
  EXPECT_EQ(loss, 0.0);
  for (auto v : grads.views())
    for (double g : v) EXPECT_EQ(g, 0.0);
}

TEST(MStep, LossStrictlyDecreasesAndConverges) {
  auto pi = make_policy(25);
  VariationalPolicy q(pi);
  Rng rng(26);
  perturb(q, 0.05, rng);
  const auto b = synthetic_batch(64, 27);
  const auto trace = m_step(pi, q, b.states, 100, 1e-3);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LT(trace[i], trace[i - 1]);
  const auto more = m_step(pi, q, b.states, 2000, 1e-3);
  EXPECT_LT(more.back(), 0.01);
}

TEST(ValueFit, ConstantRewardIsLearned) {
  Rng rng(28);
  ValueNet v(arm::kStateDim, 16, 2, rng);
  const Matrix s = random_matrix(64, arm::kStateDim, rng);
  const Vector r = Vector::Constant(64, 0.37);
  const auto trace = fit_value(v, s, r, 3000, 1e-2);
  EXPECT_LT(trace.back(), 1e-4);
  EXPECT_LT((v.predict(s).array() - 0.37).abs().maxCoeff(), 0.02);
}

TEST(ValueFit, LossNonIncreasingForSmallSteps) {
  Rng rng(29);
  ValueNet v(arm::kStateDim, 16, 2, rng);
  const Matrix s = random_matrix(64, arm::kStateDim, rng);
  const Vector r = random_matrix(64, 1, rng).col(0).cwiseAbs();
  const auto trace = fit_value(v, s, r, 40, 1e-3);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12);
}

TEST(ValueFit, LinearRewardMatchesLeastSquares) {
  Rng rng(30);
  ValueNet v(arm::kStateDim, 16, 2, rng);
  const Matrix s = random_matrix(128, arm::kStateDim, rng, 0.5);
  const Vector w{{0.3, -0.2, 0.1}};
  const Vector r = (s * w).array() + 0.5;
  Matrix design(128, 4);
  design << s, Vector::Ones(128);
  const Vector coef = design.colPivHouseholderQr().solve(r);
  const Vector oracle = design * coef;
  (void)fit_value(v, s, r, 4000, 3e-3);
  EXPECT_LT((v.predict(s) - oracle).norm() / oracle.norm(), 0.05);
}

TEST(TrainEm, SeedsGiveDistinctCurvesOfConfiguredLength) {
  const arm::ArmConfig cfg;
  const auto oracle = genmod::GoalOracleGenerator::reachable_box(cfg);
  EmConfig em;
  em.outer_iters = 4;
  em.batch = 16;
  std::vector<std::vector<double>> curves;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng = Rng(99).fork(seed);
    const auto r = train_em(oracle, cfg, {}, em, rng);
    ASSERT_EQ(r.curve.points.size(), 4u);
    std::vector<double> c;
    for (const auto& p : r.curve.points) {
      c.push_back(p.mean_reward);
      EXPECT_GE(p.success_rate, 0.0);
      EXPECT_LE(p.success_rate, 1.0);
      EXPECT_GE(p.mean_kl, 0.0);
    }
    double best = 0.0;
    for (double x : c) best = std::max(best, x);
    EXPECT_EQ(r.curve.label(), best);
    curves.push_back(c);
  }
  EXPECT_NE(curves[0], curves[1]);
  EXPECT_NE(curves[1], curves[2]);
  EXPECT_NE(curves[0], curves[2]);
}

TEST(TrainEm, SameSeedReproducesCurve) {
  const arm::ArmConfig cfg;
  const auto oracle = genmod::GoalOracleGenerator::reachable_box(cfg);
  EmConfig em;
  em.outer_iters = 3;
  em.batch = 16;
  Rng a(5), b(5);
  const auto x = train_em(oracle, cfg, {}, em, a);
  const auto y = train_em(oracle, cfg, {}, em, b);
  for (std::size_t i = 0; i < x.curve.points.size(); ++i) {
    EXPECT_EQ(x.curve.points[i].mean_reward, y.curve.points[i].mean_reward);
    EXPECT_EQ(x.curve.points[i].mean_kl, y.curve.points[i].mean_kl);
  }
}

TEST(TrainEm, LatentSizeMismatchRejected) {
  const arm::ArmConfig cfg;
  const auto oracle = genmod::GoalOracleGenerator::reachable_box(cfg, 4);
  const auto pi = make_policy(31);
  Rng vr(32);
  ValueNet v(arm::kStateDim, 16, 2, vr);
  Rng rng(33);
  EXPECT_THROW((void)collect_rollouts(pi, v, oracle, cfg, {}, 8, rng), DimensionError);
}

}  // namespace
