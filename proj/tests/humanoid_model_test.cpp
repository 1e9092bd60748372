#include "gmp/humanoid_model.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "gmp/log.hpp"
#include "test_util.hpp"

namespace gmp {
namespace {

using nlohmann::json;

const RobotModel& robot() { return default_robot_model(); }

TEST(LoadModel, BundledDescriptorHasNaviProportions) {
  const RobotModel model = load_model(std::string(GMP_DATA_DIR) + "/humanoid_21dof.json");
  EXPECT_EQ(model.dof_count(), 21);
  EXPECT_DOUBLE_EQ(model.standing_height(), 1.65);
  EXPECT_EQ(model.keypoints().size(), 8u);
  for (int k = 0; k < kKeypointCount; ++k) {
    EXPECT_EQ(model.keypoints()[k].name, kKeypointNames[k]);
  }
  // 6 per leg, 1 waist, 4 per arm in the canonical order.
  EXPECT_EQ(model.joint(0).name, "left_hip_roll");
  EXPECT_EQ(model.joint(5).name, "left_ankle_roll");
  EXPECT_EQ(model.joint(6).name, "right_hip_roll");
  EXPECT_EQ(model.joint(12).name, "waist_yaw");
  EXPECT_EQ(model.joint(13).name, "left_shoulder_pitch");
  EXPECT_EQ(model.joint(16).name, "left_elbow");
  EXPECT_EQ(model.joint(20).name, "right_elbow");
}

TEST(LoadModel, RejectsTwentyJoints) {
  json doc = json::parse(bundled_robot_descriptor());
  doc["joints"].erase(doc["joints"].end() - 1);
  try {
    load_model_from_string(doc.dump());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("dof count mismatch"), std::string::npos);
  }
}

TEST(LoadModel, RejectsNonUnitAxis) {
  json doc = json::parse(bundled_robot_descriptor());
  doc["joints"][3]["axis"] = {0, 0, 2};
  try {
    load_model_from_string(doc.dump());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-unit axis"), std::string::npos);
  }
}

TEST(LoadModel, RejectsUnknownKeypointLink) {
  json doc = json::parse(bundled_robot_descriptor());
  doc["keypoints"][0]["link"] = "tail";
  try {
    load_model_from_string(doc.dump());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unknown keypoint link"), std::string::npos);
  }
}

TEST(LoadModel, RejectsMalformedDocumentAndInvertedLimits) {
  EXPECT_THROW(load_model_from_string("{ not json"), ParseError);
  EXPECT_THROW(load_model_from_string("{\"format\": \"gmp-model\", \"version\": 1}"),
               ParseError);
  json doc = json::parse(bundled_robot_descriptor());
  doc["joints"][0]["limits"] = {0.5, -0.5};
  EXPECT_THROW(load_model_from_string(doc.dump()), Error);
}

TEST(ForwardKinematics, ZeroAnglesGiveRestOffsets) {
  const auto kp = forward_kinematics(robot(), Eigen::VectorXd::Zero(21),
                                     BasePose::Identity());
  // Offsets summed by hand from data/humanoid_21dof.json.
  EXPECT_TRUE(kp[4].isApprox(Eigen::Vector3d(0, 0.09, -0.44), 1e-12));
  EXPECT_TRUE(kp[6].isApprox(Eigen::Vector3d(0, 0.09, -0.82), 1e-12));
  EXPECT_TRUE(kp[7].isApprox(Eigen::Vector3d(0, -0.09, -0.82), 1e-12));
  EXPECT_TRUE(kp[0].isApprox(Eigen::Vector3d(0, 0.19, 0.45 - 0.26), 1e-12));
  EXPECT_TRUE(kp[3].isApprox(Eigen::Vector3d(0, -0.19, 0.45 - 0.50), 1e-12));
  EXPECT_NEAR(robot().rest_base_height(), 0.89, 1e-12);
}

TEST(ForwardKinematics, BaseTranslationShiftsEveryKeypoint) {
  std::mt19937_64 rng(3);
  const Eigen::VectorXd q = test::random_q(robot(), rng);
  BasePose moved;
  moved.position = {1.0, 2.0, 0.0};
  const auto a = forward_kinematics(robot(), q, BasePose::Identity());
  const auto b = forward_kinematics(robot(), q, moved);
  for (int k = 0; k < kKeypointCount; ++k) {
    EXPECT_TRUE((b[k] - a[k]).isApprox(Eigen::Vector3d(1, 2, 0), 1e-12));
  }
}

TEST(ForwardKinematics, KneeQuarterTurnMatchesHandComposedChain) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(21);
  q[3] = M_PI / 2;  // left knee
  const auto kp = forward_kinematics(robot(), q, BasePose::Identity());
  // Hand-written R_y(pi/2) and translation composition.
  Eigen::Matrix3d ry;
  ry << 0, 0, 1,
        0, 1, 0,
       -1, 0, 0;
  const Eigen::Vector3d hip(0, 0.09, -0.06);
  const Eigen::Vector3d knee = hip + Eigen::Vector3d(0, 0, -0.38);
  const Eigen::Vector3d ankle = knee + ry * Eigen::Vector3d(0, 0, -0.38);
  EXPECT_TRUE(kp[4].isApprox(knee, 1e-12));
  EXPECT_TRUE(kp[6].isApprox(ankle, 1e-12));
  EXPECT_NEAR(kp[6].x(), -0.38, 1e-12);
}

TEST(ForwardKinematics, DimensionMismatchThrows) {
  EXPECT_THROW(forward_kinematics(robot(), Eigen::VectorXd::Zero(20), BasePose{}),
               DimensionError);
  EXPECT_THROW(keypoints_local(robot(), Eigen::VectorXd::Zero(22)), DimensionError);
}

TEST(ForwardKinematics, OutOfLimitAnglesAreClamped) {
  auto previous = set_warning_sink(nullptr);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(21);
  q[3] = -1.0;  // knee lower limit is 0
  const auto clamped = forward_kinematics(robot(), q, BasePose{});
  const auto zero = forward_kinematics(robot(), Eigen::VectorXd::Zero(21), BasePose{});
  for (int k = 0; k < kKeypointCount; ++k) EXPECT_EQ(clamped[k], zero[k]);
  set_warning_sink(previous);
}

TEST(KeypointsLocal, EqualsIdentityBaseFk) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd q = test::random_q(robot(), rng);
    const auto a = keypoints_local(robot(), q);
    const auto b = forward_kinematics(robot(), q, BasePose::Identity());
    for (int k = 0; k < kKeypointCount; ++k) EXPECT_EQ(a[k], b[k]);
  }
}

TEST(KeypointsLocal, YawRotatedBaseRotatesBack) {
  std::mt19937_64 rng(9);
  const Eigen::VectorXd q = test::random_q(robot(), rng);
  BasePose base;
  base.position = {0.3, -0.2, 0.9};
  base.orientation = Eigen::AngleAxisd(1.1, Eigen::Vector3d::UnitZ());
  const auto world = forward_kinematics(robot(), q, base);
  const auto local = keypoints_local(robot(), q);
  for (int k = 0; k < kKeypointCount; ++k) {
    EXPECT_LT((base.inverse_apply(world[k]) - local[k]).norm(), 1e-12);
  }
}

TEST(KeypointsLocal, RestPoseIsLeftRightSymmetric) {
  const auto kp = keypoints_local(robot(), Eigen::VectorXd::Zero(21));
  for (int k = 0; k < kKeypointCount; k += 2) {
    const Eigen::Vector3d reflected(kp[k + 1].x(), -kp[k + 1].y(), kp[k + 1].z());
    EXPECT_LT((kp[k] - reflected).norm(), 1e-12) << kKeypointNames[k];
  }
}

TEST(ForwardKinematicsProperty, EquivariantUnderBaseTransform) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd q = test::random_q(robot(), rng);
    const BasePose base = test::random_base(rng);
    const auto world = forward_kinematics(robot(), q, base);
    const auto local = forward_kinematics(robot(), q, BasePose::Identity());
    for (int k = 0; k < kKeypointCount; ++k) {
      ASSERT_LT((world[k] - base.apply(local[k])).norm(), 1e-9);
    }
  }
}

TEST(ForwardKinematicsProperty, LipschitzInJointAngles) {
  std::mt19937_64 rng(13);
  const double bound = robot().total_link_length();
  std::normal_distribution<double> n(0.0, 0.05);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd q = test::random_q(robot(), rng);
    Eigen::VectorXd dq(21);
    for (int i = 0; i < 21; ++i) dq[i] = n(rng);
    const Eigen::VectorXd q2 = robot().clamp(q + dq);
    const auto a = keypoints_local(robot(), q);
    const auto b = keypoints_local(robot(), q2);
    for (int k = 0; k < kKeypointCount; ++k) {
      ASSERT_LE((a[k] - b[k]).norm(), bound * (q2 - q).norm() + 1e-12);
    }
  }
}

TEST(ForwardKinematicsProperty, ClampIsIdempotent) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd q(21);
    for (int i = 0; i < 21; ++i) q[i] = n(rng);
    const Eigen::VectorXd once = robot().clamp(q);
    EXPECT_EQ(robot().clamp(once), once);
    EXPECT_TRUE(robot().within_limits(once));
  }
}

TEST(SiteJacobian, MatchesCentralDifferences) {
  std::mt19937_64 rng(19);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd q = test::random_q(robot(), rng, 0.1);
    const BasePose base = test::random_base(rng);
    const auto frames = compute_frames(robot(), q, base);
    for (const auto& site : robot().keypoints()) {
      const auto jac = site_jacobian(robot(), frames, site);
      for (int j = 0; j < 21; ++j) {
        Eigen::VectorXd qp = q, qm = q;
        qp[j] += h;
        qm[j] -= h;
        const Eigen::Vector3d fd =
            (compute_frames(robot(), qp, base).site_position(site) -
             compute_frames(robot(), qm, base).site_position(site)) / (2 * h);
        ASSERT_LT((fd - jac.col(j)).norm(), 1e-7) << site.name << " joint " << j;
      }
    }
  }
}

TEST(MirrorTable, RollAndYawFlipPitchKeeps) {
  const auto& m = robot();
  EXPECT_EQ(m.mirror_joint(m.joint_index("left_hip_roll")), m.joint_index("right_hip_roll"));
  EXPECT_EQ(m.mirror_sign(m.joint_index("left_hip_roll")), -1.0);
  EXPECT_EQ(m.mirror_sign(m.joint_index("left_hip_pitch")), 1.0);
  EXPECT_EQ(m.mirror_sign(m.joint_index("left_hip_yaw")), -1.0);
  EXPECT_EQ(m.mirror_joint(m.joint_index("waist_yaw")), m.joint_index("waist_yaw"));
  EXPECT_EQ(m.mirror_sign(m.joint_index("waist_yaw")), -1.0);
}

}  // namespace
}  // namespace gmp
