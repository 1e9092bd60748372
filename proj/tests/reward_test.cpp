#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gmp/error.hpp"
#include "gmp/reward.hpp"
#include "test_util.hpp"

namespace gmp {
namespace {

ControlStateSample standing_state() {
  ControlStateSample s;
  s.q = Eigen::VectorXd::Constant(kDofCount, 0.1);
  s.q_default = s.q;
  for (int k = 0; k < kKeypointCount; ++k) s.p_key[k] = Eigen::Vector3d(0.1 * k, -0.2, 0.3);
  return s;
}

ReferenceFrame matching_reference(const ControlStateSample& s) {
  return {s.q, s.p_key};
}

ControlStateSample random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::bernoulli_distribution coin(0.5);
  ControlStateSample s;
  s.v_xy = {n(rng), n(rng)};
  s.v_z = n(rng);
  s.w = {n(rng), n(rng), n(rng)};
  s.g_xy = {0.1 * n(rng), 0.1 * n(rng)};
  s.q = test::random_vector(kDofCount, rng, 0.5);
  s.dq = test::random_vector(kDofCount, rng, 2.0);
  s.ddq = test::random_vector(kDofCount, rng, 50.0);
  s.tau = test::random_vector(kDofCount, rng, 30.0);
  s.a_dot = test::random_vector(kDofCount, rng, 0.3);
  s.a_ddot = test::random_vector(kDofCount, rng, 0.3);
  s.q_default = test::random_vector(kDofCount, rng, 0.2);
  for (auto& p : s.p_key) p = Eigen::Vector3d(n(rng), n(rng), n(rng)) * 0.3;
  for (int f = 0; f < 2; ++f) {
    s.foot_contact[f] = coin(rng);
    s.t_air[f] = coin(rng) ? std::abs(n(rng)) : 0.0;
  }
  s.collision = coin(rng);
  s.termination = coin(rng);
  return s;
}

// Straight re-evaluation of the full reward table with explicit loops.
double oracle_total(const ControlStateSample& s, const ReferenceFrame& ref,
                    const VelocityCommand& c) {
  double dq2 = 0.0;
  for (int i = 0; i < kDofCount; ++i) dq2 += std::pow(s.q[i] - ref.q_ref[i], 2);
  double dp2 = 0.0;
  for (int k = 0; k < kKeypointCount; ++k) {
    for (int a = 0; a < 3; ++a) dp2 += std::pow(s.p_key[k][a] - ref.p_ref[k][a], 2);
  }
  double total = std::exp(-0.7 * std::sqrt(dq2)) + std::exp(-0.7 * std::sqrt(dp2));
  total += 3.0 * std::exp(-4.0 * (std::pow(s.v_xy[0] - c.vx, 2) + std::pow(s.v_xy[1] - c.vy, 2)));
  total += 2.5 * std::exp(-4.0 * std::pow(s.w[2] - c.yaw_rate, 2));
  auto sumsq = [](const Eigen::VectorXd& v) {
    double r = 0.0;
    for (int i = 0; i < v.size(); ++i) r += v[i] * v[i];
    return r;
  };
  total += -0.8 * s.v_z * s.v_z;
  total += -0.05 * (s.w[0] * s.w[0] + s.w[1] * s.w[1]);
  total += -6.0 * (s.g_xy[0] * s.g_xy[0] + s.g_xy[1] * s.g_xy[1]);
  total += -5e-6 * sumsq(s.tau);
  total += -5e-4 * sumsq(s.dq);
  total += -2e-8 * sumsq(s.ddq);
  total += -0.01 * sumsq(s.a_dot);
  total += -5e-3 * sumsq(s.a_ddot);
  total += -0.1 * sumsq(s.q - s.q_default);
  for (int f = 0; f < 2; ++f) {
    if (s.foot_contact[f] && s.t_air[f] > 0.0) total += 20.0 * (s.t_air[f] - 0.5);
  }
  if (s.foot_contact[0] || s.foot_contact[1]) total += 0.8;
  if (s.collision) total += -1.0;
  if (s.termination) total += -200.0;
  return total;
}

TEST(RDof, ExactMatchIsOne) {
  const Eigen::VectorXd q = Eigen::VectorXd::LinSpaced(kDofCount, -1.0, 1.0);
  EXPECT_DOUBLE_EQ(r_dof(q, q), 1.0);
}

TEST(RDof, UnitErrorNorm) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(kDofCount), q_ref = q;
  q[3] = 0.6;
  q[9] = -0.8;
  EXPECT_NEAR(r_dof(q, q_ref), 0.496585, 1e-6);
  EXPECT_NEAR(r_dof(q, q_ref), std::exp(-0.7), 1e-15);
}

TEST(RDof, RandomPairsMatchReevaluation) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd q = test::random_vector(kDofCount, rng);
    const Eigen::VectorXd q_ref = test::random_vector(kDofCount, rng);
    double sq = 0.0;
    for (int i = 0; i < kDofCount; ++i) sq += (q[i] - q_ref[i]) * (q[i] - q_ref[i]);
    EXPECT_NEAR(r_dof(q, q_ref), std::exp(-0.7 * std::sqrt(sq)), 1e-12);
  }
}

TEST(RDof, StrictlyDecreasesWithError) {
  const Eigen::VectorXd q_ref = Eigen::VectorXd::Zero(kDofCount);
  double last = 2.0;
  for (int i = 0; i <= 50; ++i) {
    Eigen::VectorXd q = q_ref;
    q[5] = 0.05 * i;
    const double r = r_dof(q, q_ref);
    EXPECT_LT(r, last);
    EXPECT_GT(r, 0.0);
    last = r;
  }
}

TEST(RDof, DimensionMismatchThrows) {
  EXPECT_THROW(r_dof(Eigen::VectorXd::Zero(20), Eigen::VectorXd::Zero(kDofCount)), DimensionError);
  EXPECT_THROW(r_dof(Eigen::VectorXd::Zero(kDofCount), Eigen::VectorXd::Zero(22)), DimensionError);
}

TEST(RDof, SquaredVariant) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(kDofCount), q_ref = q;
  q[0] = 2.0;
  RewardConfig cfg;
  cfg.squared_norm = true;
  EXPECT_NEAR(r_dof(q, q_ref, cfg), std::exp(-0.7 * 4.0), 1e-15);
  EXPECT_NEAR(r_dof(q, q_ref), std::exp(-0.7 * 2.0), 1e-15);
}

TEST(RKeypos, ExactMatchIsOne) {
  const auto s = standing_state();
  EXPECT_DOUBLE_EQ(r_keypos(s.p_key, s.p_key), 1.0);
}

TEST(RKeypos, SingleKeypointOffByOneMetre) {
  const auto s = standing_state();
  KeypointSet p = s.p_key;
  p[6] += Eigen::Vector3d(0.0, 0.0, 1.0);
  EXPECT_NEAR(r_keypos(p, s.p_key), std::exp(-0.7), 1e-15);
}

TEST(RKeypos, StrictlyDecreasesForEveryKeypoint) {
  const auto s = standing_state();
  for (int k = 0; k < kKeypointCount; ++k) {
    double last = 2.0;
    for (int i = 0; i <= 20; ++i) {
      KeypointSet p = s.p_key;
      p[k] += Eigen::Vector3d(0.03 * i, -0.02 * i, 0.01 * i);
      const double r = r_keypos(p, s.p_key);
      EXPECT_LT(r, last) << "keypoint " << k << " step " << i;
      last = r;
    }
  }
}

TEST(RGuidance, PerfectTrackingIsTwo) {
  const auto s = standing_state();
  EXPECT_DOUBLE_EQ(r_guidance(s, matching_reference(s)), 2.0);
}

TEST(RGuidance, RangeAndDecomposition) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_state(rng);
    ReferenceFrame ref;
    ref.q_ref = test::random_vector(kDofCount, rng, 0.5);
    for (auto& p : ref.p_ref) p = test::random_vector(3, rng, 0.3);
    const double g = r_guidance(s, ref);
    EXPECT_GT(g, 0.0);
    EXPECT_LE(g, 2.0);
    EXPECT_DOUBLE_EQ(g, r_dof(s.q, ref.q_ref) + r_keypos(s.p_key, ref.p_ref));
  }
}

TEST(TaskRewards, ExactTracking) {
  ControlStateSample s = standing_state();
  s.v_xy = {0.7, -0.1};
  s.w.z() = 0.2;
  const VelocityCommand c{0.7, -0.1, 0.2};
  const auto t = task_rewards(s, c);
  EXPECT_DOUBLE_EQ(t.lin, 1.0);
  EXPECT_DOUBLE_EQ(t.ang, 1.0);
  const auto b = total_reward(s, matching_reference(s), c);
  EXPECT_DOUBLE_EQ(b.term("lin_vel").weighted, 3.0);
  EXPECT_DOUBLE_EQ(b.term("ang_vel").weighted, 2.5);
}

TEST(TaskRewards, UnitSquaredError) {
  ControlStateSample s = standing_state();
  s.v_xy = {0.6, 0.8};
  const auto t = task_rewards(s, VelocityCommand{});
  EXPECT_NEAR(t.lin, 0.018316, 1e-6);
  EXPECT_NEAR(t.lin, std::exp(-4.0), 1e-15);
}

TEST(TaskRewards, AngularUsesYawComponentOnly) {
  ControlStateSample s = standing_state();
  s.w = {5.0, -3.0, 0.1};
  EXPECT_DOUBLE_EQ(task_rewards(s, VelocityCommand{0.0, 0.0, 0.1}).ang, 1.0);
}

TEST(Regularization, StandingStateOnlyNoFly) {
  const auto terms = regularization_rewards(standing_state());
  ASSERT_EQ(terms.size(), 13u);
  for (const auto& t : terms) {
    if (t.name == "no_fly") {
      EXPECT_DOUBLE_EQ(t.weighted, 0.8);
    } else {
      EXPECT_EQ(t.weighted, 0.0) << t.name;
    }
  }
}

TEST(Regularization, WeightsInTableOrder) {
  const auto terms = regularization_rewards(standing_state());
  const double expected[] = {-0.8, -0.05, -6.0, -5e-6, -5e-4, -2e-8, -0.01,
                             -5e-3, -0.1, 20.0, 0.8, -1.0, -200.0};
  for (size_t i = 0; i < terms.size(); ++i) EXPECT_EQ(terms[i].weight, expected[i]) << i;
}

TEST(Regularization, Termination) {
  ControlStateSample s = standing_state();
  s.termination = true;
  const auto b = total_reward(s, matching_reference(s), VelocityCommand{});
  EXPECT_DOUBLE_EQ(b.term("termination").weighted, -200.0);
}

TEST(Regularization, TorqueTerm) {
  ControlStateSample s = standing_state();
  s.tau[0] = 600.0;
  s.tau[1] = 800.0;
  const auto b = total_reward(s, matching_reference(s), VelocityCommand{});
  EXPECT_DOUBLE_EQ(b.term("torque").raw, 1e6);
  EXPECT_NEAR(b.term("torque").weighted, -5.0, 1e-12);
}

TEST(Regularization, FeetAirTimeOnTouchdownOnly) {
  ControlStateSample s = standing_state();
  s.t_air = {0.8, 0.3};
  s.foot_contact = {true, false};
  auto b = total_reward(s, matching_reference(s), VelocityCommand{});
  EXPECT_NEAR(b.term("feet_air_time").weighted, 20.0 * 0.3, 1e-12);
  s.foot_contact = {true, true};
  b = total_reward(s, matching_reference(s), VelocityCommand{});
  EXPECT_NEAR(b.term("feet_air_time").weighted, 20.0 * (0.3 - 0.2), 1e-12);
}

TEST(Regularization, NoFlyNeedsAContact) {
  ControlStateSample s = standing_state();
  s.foot_contact = {false, false};
  EXPECT_EQ(total_reward(s, matching_reference(s), VelocityCommand{}).term("no_fly").weighted,
            0.0);
  s.foot_contact = {false, true};
  EXPECT_EQ(total_reward(s, matching_reference(s), VelocityCommand{}).term("no_fly").weighted,
            0.8);
}

TEST(Regularization, SignsFollowWeights) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    for (const auto& t : regularization_rewards(random_state(rng))) {
      if (t.name == "feet_air_time") continue;  // raw value may be negative by definition
      EXPECT_GE(t.raw, 0.0) << t.name;
      if (t.raw > 0.0) EXPECT_EQ(std::signbit(t.weighted), std::signbit(t.weight)) << t.name;
    }
  }
}

TEST(TotalReward, PerfectStandingIs8p3) {
  const auto s = standing_state();
  const auto b = total_reward(s, matching_reference(s), VelocityCommand{});
  EXPECT_NEAR(b.total, 8.3, 1e-12);
  EXPECT_DOUBLE_EQ(b.guidance, 2.0);
  EXPECT_DOUBLE_EQ(b.task, 5.5);
  EXPECT_NEAR(b.regularization, 0.8, 1e-15);
}

TEST(TotalReward, RandomStatesMatchOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = random_state(rng);
    ReferenceFrame ref;
    ref.q_ref = s.q + test::random_vector(kDofCount, rng, 0.1);
    for (int k = 0; k < kKeypointCount; ++k) ref.p_ref[k] = s.p_key[k] + test::random_vector(3, rng, 0.05);
    const VelocityCommand c{0.75 * (1.0 + u(rng)), 0.3 * u(rng), 0.3 * u(rng)};
    const auto b = total_reward(s, ref, c);
    const double oracle = oracle_total(s, ref, c);
    EXPECT_NEAR(b.total, oracle, 1e-9 * std::max(1.0, std::abs(oracle)));
    double sum = 0.0;
    for (const auto& t : b.terms) sum += t.weighted;
    EXPECT_NEAR(b.total, sum, 1e-12 * std::max(1.0, std::abs(sum)));
    EXPECT_NEAR(b.total, b.guidance + b.task + b.regularization, 1e-12);
    // Pure function: a second call is bit-identical.
    EXPECT_EQ(total_reward(s, ref, c).total, b.total);
  }
}

TEST(TotalReward, BadStateThrows) {
  ControlStateSample s = standing_state();
  s.tau.resize(20);
  EXPECT_THROW(total_reward(s, matching_reference(standing_state()), VelocityCommand{}),
               DimensionError);
  s = standing_state();
  s.dq[2] = std::nan("");
  EXPECT_THROW(total_reward(s, matching_reference(s), VelocityCommand{}), Error);
  s = standing_state();
  s.a_ddot.resize(3);
  EXPECT_THROW(total_reward(s, matching_reference(s), VelocityCommand{}), DimensionError);
}

TEST(TotalReward, UnknownTermThrows) {
  const auto s = standing_state();
  EXPECT_THROW(total_reward(s, matching_reference(s), VelocityCommand{}).term("nope"), Error);
}

TEST(TotalReward, TableListsEveryTerm) {
  const auto s = standing_state();
  const auto b = total_reward(s, matching_reference(s), VelocityCommand{});
  const std::string text = format_breakdown(b);
  for (const auto& t : b.terms) EXPECT_NE(text.find(t.name), std::string::npos) << t.name;
  EXPECT_NE(text.find("total"), std::string::npos);
}

TEST(Command, ClampReportsAndIsIdempotent) {
  const auto a = clamp_command({2.0, -0.5, 0.1});
  EXPECT_TRUE(a.clamped);
  EXPECT_EQ(a.command, (VelocityCommand{1.5, -0.3, 0.1}));
  const auto b = clamp_command(a.command);
  EXPECT_FALSE(b.clamped);
  EXPECT_EQ(b.command, a.command);
  EXPECT_TRUE(command_in_range(b.command));
  EXPECT_THROW(clamp_command({std::nan(""), 0.0, 0.0}), Error);
}

TEST(Command, ParseAndFormat) {
  const VelocityCommand c = parse_command("1.0, 0,-0.25");
  EXPECT_EQ(c, (VelocityCommand{1.0, 0.0, -0.25}));
  EXPECT_EQ(parse_command(format_command({0.1, 0.2, 0.3})), (VelocityCommand{0.1, 0.2, 0.3}));
  EXPECT_THROW(parse_command("1.0,0"), ParseError);
  EXPECT_THROW(parse_command("1.0,0,0,4"), ParseError);
  EXPECT_THROW(parse_command("a,b,c"), ParseError);
}

}  // namespace
}  // namespace gmp
