#include "gmp/motion_dataset.hpp"

#include <cmath>

namespace gmp {

Eigen::VectorXd RobotPose::flatten() const {
  Eigen::VectorXd v(kDim);
  v.segment<3>(kVBase) = v_base;
  v.segment<3>(kWBase) = w_base;
  v.segment(kQ, kDofCount) = q;
  for (int k = 0; k < kKeypointCount; ++k) {
    v.segment<3>(kPKey + 3 * k) = p_key[k];
    v.segment<3>(kVKey + 3 * k) = v_key[k];
  }
  v[kHBase] = h_base;
  return v;
}

RobotPose RobotPose::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != kDim) {
    throw DimensionError("pose vector has dimension " +
                         std::to_string(flat.size()) + ", expected 76");
  }
  RobotPose p;
  p.v_base = flat.segment<3>(kVBase);
  p.w_base = flat.segment<3>(kWBase);
  p.q = flat.segment(kQ, kDofCount);
  for (int k = 0; k < kKeypointCount; ++k) {
    p.p_key[k] = flat.segment<3>(kPKey + 3 * k);
    p.v_key[k] = flat.segment<3>(kVKey + 3 * k);
  }
  p.h_base = flat[kHBase];
  return p;
}

bool RobotPose::is_finite() const { return flatten().allFinite(); }

std::vector<Eigen::Vector3d> differentiate(
    const std::vector<Eigen::Vector3d>& s, double dt) {
  const size_t n = s.size();
  std::vector<Eigen::Vector3d> d(n, Eigen::Vector3d::Zero());
  if (n < 2) return d;
  d[0] = (s[1] - s[0]) / dt;
  d[n - 1] = (s[n - 1] - s[n - 2]) / dt;
  for (size_t t = 1; t + 1 < n; ++t) d[t] = (s[t + 1] - s[t - 1]) / (2.0 * dt);
  return d;
}

std::vector<Eigen::Vector3d> angular_velocity_local(
    const std::vector<Eigen::Quaterniond>& o, double dt) {
  const size_t n = o.size();
  std::vector<Eigen::Vector3d> w(n, Eigen::Vector3d::Zero());
  if (n < 2) return w;
  auto world_rate = [&](size_t a, size_t b, double span) -> Eigen::Vector3d {
    const Eigen::AngleAxisd delta(o[b] * o[a].conjugate());
    double angle = delta.angle();
    Eigen::Vector3d axis = delta.axis();
    if (angle > M_PI) angle -= 2.0 * M_PI;
    return axis * (angle / span);
  };
  for (size_t t = 0; t < n; ++t) {
    const size_t a = t == 0 ? 0 : t - 1;
    const size_t b = t + 1 == n ? n - 1 : t + 1;
    w[t] = o[t].conjugate() * world_rate(a, b, dt * static_cast<double>(b - a));
  }
  return w;
}

std::vector<std::array<FootState, 2>> foot_states(const MotionClip& clip,
                                                  const RobotModel& model) {
  clip.validate();
  const int n = clip.size();
  std::vector<Eigen::Vector3d> left(n), right(n);
  for (int t = 0; t < n; ++t) {
    const auto kp = forward_kinematics(model, clip.frames[t].q, clip.frames[t].base);
    left[t] = kp[static_cast<int>(Keypoint::kLeftAnkle)];
    right[t] = kp[static_cast<int>(Keypoint::kRightAnkle)];
  }
  const auto vl = differentiate(left, clip.dt());
  const auto vr = differentiate(right, clip.dt());
  std::vector<std::array<FootState, 2>> out(n);
  for (int t = 0; t < n; ++t) {
    out[t][0] = {left[t].z() - model.ankle_height(), vl[t]};
    out[t][1] = {right[t].z() - model.ankle_height(), vr[t]};
  }
  return out;
}

std::vector<ContactLabel> detect_foot_contacts(const MotionClip& clip,
                                               const RobotModel& model,
                                               const ContactThresholds& th) {
  if (!(th.height > 0.0) || !(th.velocity > 0.0)) {
    throw Error("contact thresholds must be positive");
  }
  const auto feet = foot_states(clip, model);
  std::vector<ContactLabel> labels(feet.size());
  auto in_contact = [&](const FootState& f) {
    return f.height < th.height && f.velocity.norm() < th.velocity;
  };
  for (size_t t = 0; t < feet.size(); ++t) {
    labels[t] = {in_contact(feet[t][0]), in_contact(feet[t][1])};
  }
  return labels;
}

PoseSequence featurize(const MotionClip& clip, const RobotModel& model) {
  clip.validate();
  const int n = clip.size();
  const double dt = clip.dt();
  std::vector<Eigen::Vector3d> positions(n);
  std::vector<Eigen::Quaterniond> orientations(n);
  for (int t = 0; t < n; ++t) {
    positions[t] = clip.frames[t].base.position;
    orientations[t] = clip.frames[t].base.orientation.normalized();
  }
  const auto v_world = differentiate(positions, dt);
  const auto w_local = angular_velocity_local(orientations, dt);

  PoseSequence poses(n);
  std::array<std::vector<Eigen::Vector3d>, kKeypointCount> key_tracks;
  for (auto& track : key_tracks) track.resize(n);
  for (int t = 0; t < n; ++t) {
    auto& p = poses[t];
    p.v_base = orientations[t].conjugate() * v_world[t];
    p.w_base = w_local[t];
    p.q = clip.frames[t].q;
    p.p_key = keypoints_local(model, p.q);
    p.h_base = positions[t].z();
    for (int k = 0; k < kKeypointCount; ++k) key_tracks[k][t] = p.p_key[k];
  }
  for (int k = 0; k < kKeypointCount; ++k) {
    const auto vk = differentiate(key_tracks[k], dt);
    for (int t = 0; t < n; ++t) poses[t].v_key[k] = vk[t];
  }
  return poses;
}

RobotPose mirror_pose(const RobotPose& pose, const RobotModel& model) {
  RobotPose m;
  m.v_base = {pose.v_base.x(), -pose.v_base.y(), pose.v_base.z()};
  // Angular velocity is a pseudovector: reflection keeps only the y part.
  m.w_base = {-pose.w_base.x(), pose.w_base.y(), -pose.w_base.z()};
  m.q.resize(kDofCount);
  for (int i = 0; i < kDofCount; ++i) {
    m.q[model.mirror_joint(i)] = model.mirror_sign(i) * pose.q[i];
  }
  for (int k = 0; k < kKeypointCount; ++k) {
    const int partner = k ^ 1;  // canonical ordering alternates left/right
    m.p_key[partner] = {pose.p_key[k].x(), -pose.p_key[k].y(), pose.p_key[k].z()};
    m.v_key[partner] = {pose.v_key[k].x(), -pose.v_key[k].y(), pose.v_key[k].z()};
  }
  m.h_base = pose.h_base;
  return m;
}

}  // namespace gmp
