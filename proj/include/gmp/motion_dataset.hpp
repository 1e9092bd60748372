#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gmp/humanoid_model.hpp"
#include "gmp/motion_clip.hpp"

namespace gmp {

// The per-frame state the motion prior models. Velocities and keypoints are
// expressed in the base frame; h_base is the base height above the ground.
struct RobotPose {
  static constexpr int kDim = 76;
  static constexpr int kVBase = 0;
  static constexpr int kWBase = 3;
  static constexpr int kQ = 6;
  static constexpr int kPKey = kQ + kDofCount;
  static constexpr int kVKey = kPKey + 3 * kKeypointCount;
  static constexpr int kHBase = kVKey + 3 * kKeypointCount;

  Eigen::Vector3d v_base = Eigen::Vector3d::Zero();
  Eigen::Vector3d w_base = Eigen::Vector3d::Zero();
  Eigen::VectorXd q = Eigen::VectorXd::Zero(kDofCount);
  KeypointSet p_key{};
  KeypointSet v_key{};
  double h_base = 0.0;

  Eigen::VectorXd flatten() const;
  static RobotPose unflatten(const Eigen::VectorXd& flat);
  bool is_finite() const;
};

static_assert(RobotPose::kHBase + 1 == RobotPose::kDim);

using PoseSequence = std::vector<RobotPose>;

struct ContactThresholds {
  double height = 0.05;    // m
  double velocity = 0.2;   // m/s
};

struct FootState {
  double height = 0.0;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
};

// Height above the ground and world velocity of both ankle sites per frame.
std::vector<std::array<FootState, 2>> foot_states(const MotionClip& clip,
                                                  const RobotModel& model);

std::vector<ContactLabel> detect_foot_contacts(
    const MotionClip& clip, const RobotModel& model,
    const ContactThresholds& thresholds = {});

PoseSequence featurize(const MotionClip& clip, const RobotModel& model);

// x-z plane reflection of a single pose vector.
RobotPose mirror_pose(const RobotPose& pose, const RobotModel& model);

// Central differences, one-sided at the ends.
std::vector<Eigen::Vector3d> differentiate(
    const std::vector<Eigen::Vector3d>& samples, double dt);

// Base angular velocity in the base frame from consecutive orientations.
std::vector<Eigen::Vector3d> angular_velocity_local(
    const std::vector<Eigen::Quaterniond>& orientations, double dt);

}  // namespace gmp
