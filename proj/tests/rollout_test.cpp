#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "gmp/error.hpp"
#include "gmp/rollout.hpp"
#include "test_models.hpp"

namespace gmp {
namespace {

class RolloutTest : public ::testing::Test {
 protected:
  void SetUp() override {
    seqs_ = test::small_corpus(31, 1, 1.0);
    cvae_ = test::tiny_cvae(8, seqs_);
    enc_ = test::tiny_encoder(9, cvae_);
  }
  std::vector<PoseSequence> seqs_;
  MotionCvae cvae_;
  CommandEncoder enc_;
};

std::vector<Eigen::VectorXd> random_latents(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < n; ++i) out.push_back(test::random_vector(dim, rng));
  return out;
}

TEST_F(RolloutTest, StepIsDecode) {
  const Eigen::VectorXd z = Eigen::Vector4d(0.3, -1.0, 0.5, 2.0);
  const RobotPose& m = seqs_[0][4];
  EXPECT_EQ(step(cvae_, m, z).flatten(), cvae_.decode(z, m.flatten()));
  EXPECT_EQ(step(cvae_, m, z).flatten(), step(cvae_, m, z).flatten());
}

TEST_F(RolloutTest, SingleFrameEqualsReprojectedStep) {
  const auto zs = random_latents(1, 4, 2);
  const Rollout r = rollout_latents(cvae_, seqs_[0][0], zs);
  ASSERT_EQ(r.size(), 1);
  EXPECT_EQ(r.raw[0].flatten(), step(cvae_, seqs_[0][0], zs[0]).flatten());
  EXPECT_EQ(r.poses[0].flatten(), reproject(r.raw[0], default_robot_model()).flatten());
}

TEST_F(RolloutTest, TwelveFrameHorizon) {
  const Rollout r = rollout_random(cvae_, seqs_[0][0], 12, 3);
  EXPECT_EQ(r.size(), 12);
  EXPECT_EQ(r.latents.size(), 12u);
  EXPECT_EQ(r.references.size(), 12u);
  for (int t = 0; t < 12; ++t) {
    EXPECT_EQ(r.references[t].q_ref, r.poses[t].q);
    EXPECT_LE(r.latents[t].norm(), kLatentClamp + 1e-12);
  }
}

TEST_F(RolloutTest, ReprojectionMakesKeypointsConsistent) {
  const Rollout r = rollout_random(cvae_, seqs_[0][0], 20, 4);
  for (const auto& p : r.poses) {
    const KeypointSet fk = keypoints_local(default_robot_model(), p.q);
    for (int k = 0; k < kKeypointCount; ++k) EXPECT_EQ(p.p_key[k], fk[k]);
  }
}

TEST_F(RolloutTest, AutoRegressionReplayIsBitExact) {
  const int n = 30;
  const auto zs = random_latents(n, 4, 5);
  const Rollout full = rollout_latents(cvae_, seqs_[0][0], zs);
  for (int k : {1, 7, 29}) {
    // drop frames k.. and re-roll from frame k-1 with the same latents
    const std::vector<Eigen::VectorXd> rest(zs.begin() + k, zs.end());
    const Rollout tail = rollout_latents(cvae_, full.poses[k - 1], rest);
    for (int t = k; t < n; ++t) EXPECT_EQ(tail.poses[t - k].flatten(), full.poses[t].flatten());
  }
}

TEST_F(RolloutTest, RandomModeSeedDeterminism) {
  const Rollout a = rollout_random(cvae_, seqs_[0][0], 15, 11);
  const Rollout b = rollout_random(cvae_, seqs_[0][0], 15, 11);
  const Rollout c = rollout_random(cvae_, seqs_[0][0], 15, 12);
  EXPECT_EQ(a.poses.back().flatten(), b.poses.back().flatten());
  EXPECT_NE(a.poses.back().flatten(), c.poses.back().flatten());
}

TEST_F(RolloutTest, CommandedIsDeterministicAndHoldsLastCommand) {
  const std::vector<VelocityCommand> cmds{{0.5, 0, 0}, {1.0, 0.1, 0.0}};
  const Rollout a = rollout_commanded(cvae_, enc_, seqs_[0][0], cmds, 6);
  const Rollout b = rollout_commanded(cvae_, enc_, seqs_[0][0], cmds, 6);
  ASSERT_EQ(a.size(), 6);
  for (int t = 0; t < 6; ++t) EXPECT_EQ(a.poses[t].flatten(), b.poses[t].flatten());
  const RobotPose prev = a.poses[4];
  EXPECT_EQ(a.latents[5], enc_.encode(cmds[1], prev));
  EXPECT_EQ(a.latents[0], enc_.encode(cmds[0], seqs_[0][0]));
}

TEST_F(RolloutTest, CommandedClampsOutOfRangeCommands) {
  const Rollout a = rollout_commanded(cvae_, enc_, seqs_[0][0], {{3.0, 1.0, -2.0}}, 3);
  const Rollout b = rollout_commanded(cvae_, enc_, seqs_[0][0], {{1.5, 0.3, -0.3}}, 3);
  EXPECT_EQ(a.poses.back().flatten(), b.poses.back().flatten());
}

TEST_F(RolloutTest, FiniteForCorpusPosesAndBoundedLatents) {
  std::mt19937_64 rng(13);
  for (size_t t = 0; t < seqs_[0].size(); t += 3) {
    Eigen::VectorXd z = test::random_vector(4, rng, 3.0);
    z = clamp_latent(z);
    EXPECT_TRUE(step(cvae_, seqs_[0][t], z).is_finite());
    EXPECT_TRUE(step(cvae_, seqs_[0][t], z.normalized() * 6.0).is_finite());
  }
}

TEST_F(RolloutTest, NonFinitePoseReportsStep) {
  MotionCvae broken = cvae_;
  broken.decoder().bias(broken.decoder().layer_count() - 1)[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    rollout_random(broken, seqs_[0][0], 5, 1);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
  }
}

TEST_F(RolloutTest, RejectsBadArguments) {
  EXPECT_THROW(rollout_random(cvae_, seqs_[0][0], 0, 1), Error);
  EXPECT_THROW(rollout_commanded(cvae_, enc_, seqs_[0][0], {}, 3), Error);
  EXPECT_THROW(step(cvae_, seqs_[0][0], Eigen::VectorXd::Zero(5)), DimensionError);
}

TEST(ClampLatent, ScalesOnlyLongVectors) {
  const Eigen::VectorXd shortv = Eigen::Vector2d(3.0, 4.0);
  EXPECT_EQ(clamp_latent(shortv), shortv);
  const Eigen::VectorXd longv = Eigen::Vector2d(30.0, 40.0);
  EXPECT_NEAR((clamp_latent(longv) - Eigen::Vector2d(3.6, 4.8)).norm(), 0.0, 1e-12);
}

TEST(StandingPose, StillAndFinite) {
  const RobotPose p = standing_pose();
  EXPECT_TRUE(p.is_finite());
  EXPECT_LT(p.v_base.head<2>().norm(), 0.1);
  EXPECT_GT(p.h_base, 0.3);
}

TEST(PosesToClip, IntegratesConstantVelocity) {
  PoseSequence poses(51);
  for (auto& p : poses) {
    p.v_base = {1.0, 0.0, 0.0};
    p.h_base = 0.7;
  }
  const MotionClip clip = poses_to_clip(poses, 50.0);
  ASSERT_EQ(clip.size(), 51);
  EXPECT_NEAR(clip.frames.back().base.position.x(), 1.0, 1e-12);
  EXPECT_NEAR(clip.frames.back().base.position.z(), 0.7, 1e-15);

  // turning in place rotates the heading
  for (auto& p : poses) {
    p.v_base.setZero();
    p.w_base = {0.0, 0.0, 0.5};
  }
  const MotionClip turn = poses_to_clip(poses, 50.0);
  const Eigen::Vector3d fwd = turn.frames.back().base.orientation * Eigen::Vector3d::UnitX();
  EXPECT_NEAR(std::atan2(fwd.y(), fwd.x()), 0.5, 1e-12);
}

TEST(PosesToClip, RoundTripsCorpusVelocities) {
  // featurize(poses_to_clip(featurize(clip))) keeps the planar base speed
  const auto seqs = test::small_corpus(41, 1, 2.0);
  const MotionClip clip = poses_to_clip(seqs[0]);
  const PoseSequence again = featurize(clip, default_robot_model());
  double err = 0.0;
  for (size_t t = 5; t + 5 < again.size(); ++t) {
    err = std::max(err, (again[t].v_base.head<2>() - seqs[0][t].v_base.head<2>()).norm());
  }
  EXPECT_LT(err, 0.1);
}

}  // namespace
}  // namespace gmp
