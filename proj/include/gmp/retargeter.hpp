#pragma once

#include <array>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gmp/humanoid_model.hpp"
#include "gmp/motion_clip.hpp"
#include "gmp/motion_dataset.hpp"

namespace gmp {

struct RetargetWeights {
  double alpha = 1.0;     // limb direction similarity
  double beta = 1000.0;   // foot contact
  double gamma = 100.0;   // joint smoothness
};

inline constexpr int kLimbCount = 8;

// Limb endpoints. `from_anchor` selects between the anchor set (shoulders,
// hips) and the keypoint set for the proximal end.
struct LimbDef {
  std::string_view name;
  bool from_anchor;
  int from;
  int to;  // always a keypoint
};

inline constexpr std::array<LimbDef, kLimbCount> kLimbs = {{
    {"left_upper_arm", true, static_cast<int>(Anchor::kLeftShoulder),
     static_cast<int>(Keypoint::kLeftElbow)},
    {"right_upper_arm", true, static_cast<int>(Anchor::kRightShoulder),
     static_cast<int>(Keypoint::kRightElbow)},
    {"left_forearm", false, static_cast<int>(Keypoint::kLeftElbow),
     static_cast<int>(Keypoint::kLeftWrist)},
    {"right_forearm", false, static_cast<int>(Keypoint::kRightElbow),
     static_cast<int>(Keypoint::kRightWrist)},
    {"left_thigh", true, static_cast<int>(Anchor::kLeftHip),
     static_cast<int>(Keypoint::kLeftKnee)},
    {"right_thigh", true, static_cast<int>(Anchor::kRightHip),
     static_cast<int>(Keypoint::kRightKnee)},
    {"left_shank", false, static_cast<int>(Keypoint::kLeftKnee),
     static_cast<int>(Keypoint::kLeftAnkle)},
    {"right_shank", false, static_cast<int>(Keypoint::kRightKnee),
     static_cast<int>(Keypoint::kRightAnkle)},
}};

using LimbVectorSet = std::array<Eigen::Vector3d, kLimbCount>;

LimbVectorSet limb_vectors(const AnchorSet& anchors, const KeypointSet& keypoints);

// Sum over limbs of |v_h/|v_h| - v_r/|v_r||^2. Throws on a zero-length limb.
double vec_loss(const LimbVectorSet& human, const LimbVectorSet& robot);

// Sum over in-contact feet of h^2 + |v|^2.
double foot_loss(const ContactLabel& contacts, const std::array<FootState, 2>& feet);

double smooth_loss(const Eigen::VectorXd& qdot_t, const Eigen::VectorXd& qdot_t1);

// Everything the optimizer needs from the source motion.
struct RetargetProblem {
  const RobotModel* model = nullptr;
  RetargetWeights weights;
  double fps = kDefaultFps;
  std::vector<LimbVectorSet> source_vectors;
  std::vector<ContactLabel> contacts;
  std::vector<Eigen::Vector3d> initial_position;
  std::vector<Eigen::Quaterniond> reference_orientation;

  int frames() const { return static_cast<int>(source_vectors.size()); }
};

// Source sites are computed by FK on `source_model`; contacts come from the
// source clip when present and are detected otherwise. The base trajectory is
// scaled by the ratio of standing heights.
RetargetProblem make_problem(const MotionClip& source, const RobotModel& source_model,
                             const RobotModel& target,
                             const RetargetWeights& weights = {});

// Decision vector layout: per frame [q (dof), base position (3), base
// rotation increment (3)], the increment being an exponential-map rotation
// applied on the left of the frame's reference orientation.
inline constexpr int kFrameVars = kDofCount + 6;

Eigen::VectorXd initial_variables(const RetargetProblem& problem);
Eigen::VectorXd variables_from_clip(const RetargetProblem& problem, const MotionClip& clip);
// Joint angles are clamped to the model limits.
MotionClip variables_to_clip(const RetargetProblem& problem, const Eigen::VectorXd& x);

struct RetargetLoss {
  double vec = 0.0;
  double foot = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

// Unweighted components summed over frames, plus the weighted total. When
// `grad` is non-null it receives d(total)/dx.
RetargetLoss total_loss(const RetargetProblem& problem, const Eigen::VectorXd& x,
                        Eigen::VectorXd* grad = nullptr);

struct RetargetOptions {
  int max_iters = 2000;
  double lr = 1e-2;
  double final_lr_ratio = 0.05;  // lr decays geometrically to lr * ratio
  double tol = 1e-9;             // relative improvement over `window` iters
  int window = 50;
};

struct RetargetResult {
  MotionClip clip;
  std::vector<RetargetLoss> trace;
  RetargetLoss best;
  int best_iter = 0;
  bool converged = false;
};

RetargetResult retarget(const RetargetProblem& problem, const RetargetOptions& opts = {});

// Left Jacobian of SO(3) at rotation vector w.
Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& w);
Eigen::Quaterniond so3_exp(const Eigen::Vector3d& w);

}  // namespace gmp
