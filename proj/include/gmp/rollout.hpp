#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gmp/command.hpp"
#include "gmp/command_encoder.hpp"
#include "gmp/motion_clip.hpp"
#include "gmp/motion_cvae.hpp"
#include "gmp/reward.hpp"

namespace gmp {

inline constexpr double kLatentClamp = 6.0;

// One raw decoder step: decode(z, m).
RobotPose step(const MotionCvae& cvae, const RobotPose& m, const Eigen::VectorXd& z);

// Replaces p_key with FK of q.
RobotPose reproject(const RobotPose& m, const RobotModel& model);

// Scales z down to norm `limit` when it is longer.
Eigen::VectorXd clamp_latent(const Eigen::VectorXd& z, double limit = kLatentClamp);

struct Rollout {
  PoseSequence poses;                   // re-projected, fed back into the decoder
  PoseSequence raw;                     // decoder outputs before re-projection
  std::vector<Eigen::VectorXd> latents;
  std::vector<ReferenceFrame> references;  // q_ref / p_ref per frame

  int size() const { return static_cast<int>(poses.size()); }
};

// Auto-regressive rollout with the given latents, one frame per latent.
// Throws gmp::Error naming the step when a pose becomes non-finite.
Rollout rollout_latents(const MotionCvae& cvae, const RobotPose& m0,
                        const std::vector<Eigen::VectorXd>& latents,
                        const RobotModel& model = default_robot_model());

// z ~ N(0, I), clamped to kLatentClamp, drawn from a generator seeded with `seed`.
Rollout rollout_random(const MotionCvae& cvae, const RobotPose& m0, int frames,
                       std::uint64_t seed, const RobotModel& model = default_robot_model());

// z_t = encoder(c_t, previous frame). The last command is held when the list
// is shorter than `frames`; commands are clamped to the admissible box.
Rollout rollout_commanded(const MotionCvae& cvae, const CommandEncoder& encoder,
                          const RobotPose& m0, const std::vector<VelocityCommand>& commands,
                          int frames, const RobotModel& model = default_robot_model());

// Featurized frame of a gait clip at zero speed.
RobotPose standing_pose(const RobotModel& model = default_robot_model());

// Integrates base yaw and planar position from the pose velocities; the base
// height is h_base and roll/pitch are zero.
MotionClip poses_to_clip(const PoseSequence& poses, double fps = kDefaultFps,
                         const RobotModel& model = default_robot_model(),
                         const BasePose& start = BasePose::Identity());

}  // namespace gmp
