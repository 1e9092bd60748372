#include "gmp/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gmp/error.hpp"
#include "gmp/gait_synth.hpp"

namespace gmp {

RobotPose step(const MotionCvae& cvae, const RobotPose& m, const Eigen::VectorXd& z) {
  return RobotPose::unflatten(cvae.decode(z, m.flatten()));
}

RobotPose reproject(const RobotPose& m, const RobotModel& model) {
  RobotPose out = m;
  out.p_key = keypoints_local(model, m.q);
  return out;
}

Eigen::VectorXd clamp_latent(const Eigen::VectorXd& z, double limit) {
  const double n = z.norm();
  return n > limit ? Eigen::VectorXd(z * (limit / n)) : z;
}

namespace {

template <typename LatentFn>
Rollout run(const MotionCvae& cvae, const RobotPose& m0, int frames, const RobotModel& model,
            LatentFn next_latent) {
  if (frames < 1) throw Error("rollout needs at least one frame, got " + std::to_string(frames));
  if (!m0.is_finite()) throw Error("rollout start pose is not finite");
  Rollout r;
  r.poses.reserve(frames);
  RobotPose cur = m0;
  for (int t = 0; t < frames; ++t) {
    Eigen::VectorXd z = next_latent(t, cur);
    RobotPose raw;
    try {
      raw = step(cvae, cur, z);
    } catch (const DimensionError&) {
      throw;
    } catch (const Error& e) {
      throw Error("rollout diverged at step " + std::to_string(t + 1) + ": " + e.what());
    }
    if (!raw.is_finite()) {
      throw Error("rollout diverged at step " + std::to_string(t + 1) + ": non-finite pose");
    }
    cur = reproject(raw, model);
    r.raw.push_back(std::move(raw));
    r.latents.push_back(std::move(z));
    r.references.push_back({cur.q, cur.p_key});
    r.poses.push_back(cur);
  }
  return r;
}

}  // namespace

Rollout rollout_latents(const MotionCvae& cvae, const RobotPose& m0,
                        const std::vector<Eigen::VectorXd>& latents, const RobotModel& model) {
  return run(cvae, m0, static_cast<int>(latents.size()), model,
             [&](int t, const RobotPose&) { return latents[t]; });
}

Rollout rollout_random(const MotionCvae& cvae, const RobotPose& m0, int frames,
                       std::uint64_t seed, const RobotModel& model) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  return run(cvae, m0, frames, model, [&](int, const RobotPose&) {
    Eigen::VectorXd z(cvae.latent_dim());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    return clamp_latent(z);
  });
}

Rollout rollout_commanded(const MotionCvae& cvae, const CommandEncoder& encoder,
                          const RobotPose& m0, const std::vector<VelocityCommand>& commands,
                          int frames, const RobotModel& model) {
  if (commands.empty()) throw Error("commanded rollout needs at least one command");
  if (encoder.latent_dim() != cvae.latent_dim()) {
    throw DimensionError("command encoder and motion prior latent sizes differ");
  }
  std::vector<VelocityCommand> clamped;
  for (const auto& c : commands) clamped.push_back(clamp_command(c).command);
  return run(cvae, m0, frames, model, [&](int t, const RobotPose& cur) {
    const auto& c = clamped[std::min<size_t>(t, clamped.size() - 1)];
    return encoder.encode(c, cur);
  });
}

RobotPose standing_pose(const RobotModel& model) {
  GaitParams g;
  g.speed = 0.0;
  g.duration = 1.0;
  const PoseSequence seq = featurize(synth_gait(g, model), model);
  return seq[seq.size() / 2];
}

MotionClip poses_to_clip(const PoseSequence& poses, double fps, const RobotModel& model,
                         const BasePose& start) {
  if (!(fps > 0.0)) throw Error("poses_to_clip: fps must be positive");
  MotionClip clip;
  clip.fps = fps;
  clip.joint_names = joint_names_of(model);
  const double dt = 1.0 / fps;
  const Eigen::Vector3d fwd = start.orientation * Eigen::Vector3d::UnitX();
  double yaw = std::atan2(fwd.y(), fwd.x());
  Eigen::Vector2d xy = start.position.head<2>();
  for (size_t t = 0; t < poses.size(); ++t) {
    const RobotPose& p = poses[t];
    if (t > 0) {
      // advance with the previous frame's velocities
      const RobotPose& prev = poses[t - 1];
      const Eigen::Rotation2Dd rot(yaw);
      xy += rot * prev.v_base.head<2>() * dt;
      yaw += prev.w_base.z() * dt;
    }
    ClipFrame f;
    f.base.position = Eigen::Vector3d(xy.x(), xy.y(), p.h_base);
    f.base.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
    f.q = model.clamp(p.q);
    clip.frames.push_back(std::move(f));
  }
  clip.validate();
  return clip;
}

}  // namespace gmp
