#include "gmp/retargeter.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "gmp/adam.hpp"
#include "gmp/error.hpp"
#include "gmp/log.hpp"

namespace gmp {
namespace {

constexpr int kLeftAnkle = static_cast<int>(Keypoint::kLeftAnkle);
constexpr int kRightAnkle = static_cast<int>(Keypoint::kRightAnkle);

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0, -w.z(), w.y(),
       w.z(), 0, -w.x(),
      -w.y(), w.x(), 0;
  return m;
}

Eigen::Vector3d unit_or_throw(const Eigen::Vector3d& v, int limb) {
  const double n = v.norm();
  if (!(n > 1e-12)) {
    throw Error("zero-length limb vector: " + std::string(kLimbs[limb].name));
  }
  return v / n;
}

BasePose frame_base(const RetargetProblem& p, const Eigen::VectorXd& x, int t) {
  const auto f = x.segment<kFrameVars>(t * kFrameVars);
  BasePose b;
  b.position = f.segment<3>(kDofCount);
  b.orientation = (so3_exp(f.segment<3>(kDofCount + 3)) * p.reference_orientation[t]).normalized();
  return b;
}

}  // namespace

Eigen::Quaterniond so3_exp(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-300) return Eigen::Quaterniond::Identity();
  return Eigen::Quaterniond(Eigen::AngleAxisd(theta, w / theta));
}

Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d k = hat(w);
  double a, b;
  if (theta < 1e-5) {
    a = 0.5 - theta * theta / 24.0;
    b = 1.0 / 6.0 - theta * theta / 120.0;
  } else {
    a = (1.0 - std::cos(theta)) / (theta * theta);
    b = (theta - std::sin(theta)) / (theta * theta * theta);
  }
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

LimbVectorSet limb_vectors(const AnchorSet& anchors, const KeypointSet& keypoints) {
  LimbVectorSet out;
  for (int l = 0; l < kLimbCount; ++l) {
    const auto& def = kLimbs[l];
    const Eigen::Vector3d& from = def.from_anchor ? anchors[def.from] : keypoints[def.from];
    out[l] = keypoints[def.to] - from;
  }
  return out;
}

double vec_loss(const LimbVectorSet& human, const LimbVectorSet& robot) {
  double sum = 0.0;
  for (int l = 0; l < kLimbCount; ++l) {
    sum += (unit_or_throw(human[l], l) - unit_or_throw(robot[l], l)).squaredNorm();
  }
  return sum;
}

double foot_loss(const ContactLabel& contacts, const std::array<FootState, 2>& feet) {
  double sum = 0.0;
  const bool in_contact[2] = {contacts.left, contacts.right};
  for (int j = 0; j < 2; ++j) {
    if (!in_contact[j]) continue;
    sum += feet[j].height * feet[j].height + feet[j].velocity.squaredNorm();
  }
  return sum;
}

double smooth_loss(const Eigen::VectorXd& qdot_t, const Eigen::VectorXd& qdot_t1) {
  if (qdot_t.size() != qdot_t1.size()) {
    throw DimensionError("smooth_loss: velocity sizes " + std::to_string(qdot_t.size()) +
                         " and " + std::to_string(qdot_t1.size()));
  }
  return (qdot_t1 - qdot_t).squaredNorm();
}

RetargetProblem make_problem(const MotionClip& source, const RobotModel& source_model,
                             const RobotModel& target, const RetargetWeights& weights) {
  source.validate();
  if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0) {
    throw Error("retarget weights must be non-negative");
  }
  if (target.dof_count() != kDofCount) throw DimensionError("target model dof mismatch");
  RetargetProblem p;
  p.model = &target;
  p.weights = weights;
  p.fps = source.fps;
  p.contacts = source.contacts ? *source.contacts : detect_foot_contacts(source, source_model);
  const double scale = target.standing_height() / source_model.standing_height();
  for (const auto& f : source.frames) {
    const auto frames = compute_frames(source_model, f.q, f.base);
    p.source_vectors.push_back(
        limb_vectors(anchors_world(source_model, frames), keypoints_world(source_model, frames)));
    p.initial_position.push_back(scale * f.base.position);
    p.reference_orientation.push_back(f.base.orientation.normalized());
  }
  return p;
}

Eigen::VectorXd initial_variables(const RetargetProblem& problem) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(problem.frames() * kFrameVars);
  for (int t = 0; t < problem.frames(); ++t) {
    x.segment<3>(t * kFrameVars + kDofCount) = problem.initial_position[t];
  }
  return x;
}

Eigen::VectorXd variables_from_clip(const RetargetProblem& problem, const MotionClip& clip) {
  if (clip.size() != problem.frames()) {
    throw DimensionError("clip has " + std::to_string(clip.size()) + " frames, problem has " +
                         std::to_string(problem.frames()));
  }
  Eigen::VectorXd x(problem.frames() * kFrameVars);
  for (int t = 0; t < problem.frames(); ++t) {
    const auto& f = clip.frames[t];
    const Eigen::AngleAxisd aa(f.base.orientation.normalized() *
                               problem.reference_orientation[t].conjugate());
    x.segment<kDofCount>(t * kFrameVars) = f.q;
    x.segment<3>(t * kFrameVars + kDofCount) = f.base.position;
    x.segment<3>(t * kFrameVars + kDofCount + 3) = aa.angle() * aa.axis();
  }
  return x;
}

MotionClip variables_to_clip(const RetargetProblem& problem, const Eigen::VectorXd& x) {
  MotionClip clip;
  clip.fps = problem.fps;
  clip.joint_names = joint_names_of(*problem.model);
  for (int t = 0; t < problem.frames(); ++t) {
    ClipFrame f;
    f.base = frame_base(problem, x, t);
    f.q = problem.model->clamp(x.segment<kDofCount>(t * kFrameVars));
    clip.frames.push_back(std::move(f));
  }
  clip.contacts = problem.contacts;
  return clip;
}

RetargetLoss total_loss(const RetargetProblem& problem, const Eigen::VectorXd& x,
                        Eigen::VectorXd* grad) {
  const int n = problem.frames();
  if (x.size() != n * kFrameVars) {
    throw DimensionError("retarget variables have size " + std::to_string(x.size()) +
                         ", expected " + std::to_string(n * kFrameVars));
  }
  const RobotModel& model = *problem.model;
  const auto& w = problem.weights;
  RetargetLoss loss;
  if (grad) grad->setZero(x.size());

  std::vector<JointFrames> frames;
  std::vector<AnchorSet> anchors(n);
  std::vector<KeypointSet> kps(n);
  frames.reserve(n);
  for (int t = 0; t < n; ++t) {
    frames.push_back(compute_frames(model, x.segment<kDofCount>(t * kFrameVars),
                                    frame_base(problem, x, t)));
    anchors[t] = anchors_world(model, frames[t]);
    kps[t] = keypoints_world(model, frames[t]);
  }

  // d(total)/d(site position), accumulated per frame.
  std::vector<AnchorSet> g_anchor(n);
  std::vector<KeypointSet> g_kp(n);
  for (int t = 0; t < n; ++t) {
    for (auto& g : g_anchor[t]) g.setZero();
    for (auto& g : g_kp[t]) g.setZero();
  }

  for (int t = 0; t < n; ++t) {
    const LimbVectorSet robot = limb_vectors(anchors[t], kps[t]);
    for (int l = 0; l < kLimbCount; ++l) {
      const Eigen::Vector3d uh = unit_or_throw(problem.source_vectors[t][l], l);
      const double len = robot[l].norm();
      const Eigen::Vector3d ur = unit_or_throw(robot[l], l);
      const Eigen::Vector3d diff = ur - uh;
      loss.vec += diff.squaredNorm();
      if (!grad) continue;
      const Eigen::Vector3d g_ur = 2.0 * w.alpha * diff;
      const Eigen::Vector3d g_v = (g_ur - ur * ur.dot(g_ur)) / len;
      const auto& def = kLimbs[l];
      g_kp[t][def.to] += g_v;
      if (def.from_anchor) {
        g_anchor[t][def.from] -= g_v;
      } else {
        g_kp[t][def.from] -= g_v;
      }
    }
  }

  const int ankle[2] = {kLeftAnkle, kRightAnkle};
  for (int t = 0; t < n; ++t) {
    const bool contact[2] = {problem.contacts[t].left, problem.contacts[t].right};
    const int a = t + 1 < n ? t : t - 1;  // velocity by forward difference
    for (int j = 0; j < 2; ++j) {
      if (!contact[j]) continue;
      const int k = ankle[j];
      const double h = kps[t][k].z() - model.ankle_height();
      const Eigen::Vector3d v =
          n > 1 ? Eigen::Vector3d(kps[a + 1][k] - kps[a][k]) : Eigen::Vector3d::Zero();
      loss.foot += h * h + v.squaredNorm();
      if (!grad) continue;
      g_kp[t][k].z() += 2.0 * w.beta * h;
      if (n < 2) continue;
      g_kp[a + 1][k] += 2.0 * w.beta * v;
      g_kp[a][k] -= 2.0 * w.beta * v;
    }
  }

  for (int t = 0; t + 2 < n; ++t) {
    const auto q0 = x.segment<kDofCount>(t * kFrameVars);
    const auto q1 = x.segment<kDofCount>((t + 1) * kFrameVars);
    const auto q2 = x.segment<kDofCount>((t + 2) * kFrameVars);
    const Eigen::VectorXd s = (q2 - q1) - (q1 - q0);
    loss.smooth += s.squaredNorm();
    if (!grad) continue;
    grad->segment<kDofCount>(t * kFrameVars) += 2.0 * w.gamma * s;
    grad->segment<kDofCount>((t + 1) * kFrameVars) -= 4.0 * w.gamma * s;
    grad->segment<kDofCount>((t + 2) * kFrameVars) += 2.0 * w.gamma * s;
  }

  loss.total = w.alpha * loss.vec + w.beta * loss.foot + w.gamma * loss.smooth;
  if (!grad) return loss;

  for (int t = 0; t < n; ++t) {
    auto gq = grad->segment<kDofCount>(t * kFrameVars);
    Eigen::Vector3d g_pos = Eigen::Vector3d::Zero();
    Eigen::Vector3d g_rot = Eigen::Vector3d::Zero();  // world-frame torque-like term
    const Eigen::Vector3d& base = frames[t].base.position;
    auto push = [&](const Site& site, const Eigen::Vector3d& p, const Eigen::Vector3d& g) {
      if (g.isZero(0.0)) return;
      gq += site_jacobian(model, frames[t], site).transpose() * g;
      g_pos += g;
      g_rot += (p - base).cross(g);
    };
    for (int k = 0; k < 4; ++k) push(model.anchors()[k], anchors[t][k], g_anchor[t][k]);
    for (int k = 0; k < kKeypointCount; ++k) push(model.keypoints()[k], kps[t][k], g_kp[t][k]);
    grad->segment<3>(t * kFrameVars + kDofCount) += g_pos;
    const Eigen::Vector3d delta = x.segment<3>(t * kFrameVars + kDofCount + 3);
    grad->segment<3>(t * kFrameVars + kDofCount + 3) +=
        so3_left_jacobian(delta).transpose() * g_rot;
  }
  return loss;
}

RetargetResult retarget(const RetargetProblem& problem, const RetargetOptions& opts) {
  if (problem.frames() < 1 || !problem.model) throw Error("retarget: empty problem");
  if (opts.max_iters < 1 || !(opts.lr > 0)) throw Error("retarget: invalid options");
  const RobotModel& model = *problem.model;
  Eigen::VectorXd x = initial_variables(problem);
  Eigen::VectorXd grad;
  Eigen::VectorXd best_x = x;
  RetargetResult result;
  result.best.total = std::numeric_limits<double>::infinity();
  Adam adam(x.size(), AdamConfig{opts.lr});
  const Eigen::VectorXd lo = model.lower_limits(), hi = model.upper_limits();
  int last_improvement = 0;

  for (int it = 0; it < opts.max_iters; ++it) {
    const RetargetLoss loss = total_loss(problem, x, &grad);
    const double terms[3] = {loss.vec, loss.foot, loss.smooth};
    const char* names[3] = {"vec", "foot", "smooth"};
    for (int i = 0; i < 3; ++i) {
      if (!std::isfinite(terms[i])) {
        throw Error("retarget: non-finite " + std::string(names[i]) + " loss at iteration " +
                    std::to_string(it));
      }
    }
    result.trace.push_back(loss);
    if (loss.total < result.best.total) {
      if (loss.total < result.best.total - opts.tol * std::max(result.best.total, 1e-12) ||
          it == 0) {
        last_improvement = it;
      }
      result.best = loss;
      result.best_iter = it;
      best_x = x;
    }
    if (loss.total < 1e-14 || it - last_improvement >= opts.window) {
      result.converged = true;
      break;
    }
    adam.set_lr(opts.lr * std::pow(opts.final_lr_ratio, static_cast<double>(it) / opts.max_iters));
    adam.step(x, grad);
    for (int t = 0; t < problem.frames(); ++t) {
      auto q = x.segment<kDofCount>(t * kFrameVars);
      q = q.cwiseMax(lo).cwiseMin(hi);
    }
  }
  if (!result.converged) {
    warn("retarget: no convergence within " + std::to_string(opts.max_iters) +
         " iterations, returning best iterate (loss " + std::to_string(result.best.total) + ")");
  }
  result.clip = variables_to_clip(problem, best_x);
  return result;
}

}  // namespace gmp
