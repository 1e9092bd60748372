#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "gmp/error.hpp"

namespace gmp {

inline constexpr int kDofCount = 21;
inline constexpr int kKeypointCount = 8;

// Canonical keypoint ordering. Every keypoint array in the library uses it.
enum class Keypoint : int {
  kLeftElbow = 0,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
  kLeftKnee,
  kRightKnee,
  kLeftAnkle,
  kRightAnkle,
};

// Limb anchors that are not keypoints but terminate limb vectors.
enum class Anchor : int {
  kLeftShoulder = 0,
  kRightShoulder,
  kLeftHip,
  kRightHip,
};

inline constexpr std::array<std::string_view, kKeypointCount> kKeypointNames = {
    "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_knee",  "right_knee",  "left_ankle", "right_ankle"};

inline constexpr std::array<std::string_view, 4> kAnchorNames = {
    "left_shoulder", "right_shoulder", "left_hip", "right_hip"};

using KeypointSet = std::array<Eigen::Vector3d, kKeypointCount>;
using AnchorSet = std::array<Eigen::Vector3d, 4>;

struct BasePose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  static BasePose Identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& local) const {
    return orientation * local + position;
  }
  Eigen::Vector3d inverse_apply(const Eigen::Vector3d& world) const {
    return orientation.conjugate() * (world - position);
  }
};

struct Joint {
  std::string name;
  int parent = -1;  // index into joints, -1 = base
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  double lower = 0.0;
  double upper = 0.0;
};

struct Site {
  std::string name;
  int link = -1;  // joint whose child link carries the site, -1 = base
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

// Kinematic description of the humanoid. Immutable after load.
class RobotModel {
 public:
  RobotModel(std::string name, double standing_height, double ankle_height,
             std::vector<Joint> joints, std::vector<Site> keypoints,
             std::vector<Site> anchors);

  const std::string& name() const { return name_; }
  int dof_count() const { return static_cast<int>(joints_.size()); }
  double standing_height() const { return standing_height_; }
  // Height of the ankle site above the sole when the foot is flat.
  double ankle_height() const { return ankle_height_; }

  const std::vector<Joint>& joints() const { return joints_; }
  const Joint& joint(int i) const { return joints_.at(i); }
  int joint_index(std::string_view name) const;
  const std::vector<Site>& keypoints() const { return keypoints_; }
  const std::vector<Site>& anchors() const { return anchors_; }

  // True when joint `ancestor` lies on the chain from the base to `link`.
  bool affects(int ancestor, int link) const {
    return link >= 0 && chain_mask_[link][ancestor];
  }

  Eigen::VectorXd lower_limits() const;
  Eigen::VectorXd upper_limits() const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& q) const;
  bool within_limits(const Eigen::VectorXd& q) const;

  // Summed length of all link offsets and site offsets.
  double total_link_length() const;

  // Base height with all joints at zero, i.e. the ankle sites resting
  // `ankle_height` above the ground.
  double rest_base_height() const;

  // Index of the mirrored joint and the sign applied to its angle.
  int mirror_joint(int i) const { return mirror_index_[i]; }
  double mirror_sign(int i) const { return mirror_sign_[i]; }

 private:
  void build_mirror_table();

  std::string name_;
  double standing_height_;
  double ankle_height_;
  std::vector<Joint> joints_;
  std::vector<Site> keypoints_;
  std::vector<Site> anchors_;
  std::vector<std::vector<bool>> chain_mask_;
  std::vector<int> mirror_index_;
  std::vector<double> mirror_sign_;
};

// Parses a model descriptor (JSON text). Throws gmp::Error.
RobotModel load_model_from_string(const std::string& text);
RobotModel load_model(const std::string& path);

// Descriptors shipped with the library.
const RobotModel& default_robot_model();
const RobotModel& default_human_model();
std::string bundled_robot_descriptor();
std::string bundled_human_descriptor();

// World-frame transform of every joint frame.
struct JointFrames {
  std::vector<Eigen::Matrix3d> rotation;
  std::vector<Eigen::Vector3d> position;
  BasePose base;

  Eigen::Vector3d site_position(const Site& site) const;
  // World axis of joint i.
  Eigen::Vector3d axis(const RobotModel& model, int i) const {
    return rotation[i] * model.joint(i).axis;
  }
};

// Joint frames without clamping; used by optimizers that keep q feasible
// themselves.
JointFrames compute_frames(const RobotModel& model, const Eigen::VectorXd& q,
                           const BasePose& base);

// World-frame keypoint positions. q outside limits is clamped.
KeypointSet forward_kinematics(const RobotModel& model,
                               const Eigen::VectorXd& q,
                               const BasePose& base);

// Keypoints relative to the base frame.
KeypointSet keypoints_local(const RobotModel& model, const Eigen::VectorXd& q);

AnchorSet anchors_world(const RobotModel& model, const JointFrames& frames);
KeypointSet keypoints_world(const RobotModel& model, const JointFrames& frames);

// d(site position)/dq as a 3 x dof matrix, evaluated at `frames`.
Eigen::Matrix<double, 3, Eigen::Dynamic> site_jacobian(
    const RobotModel& model, const JointFrames& frames, const Site& site);

// Base-local keypoint Jacobian, 24 x dof, rows ordered keypoint-major.
Eigen::MatrixXd keypoints_local_jacobian(const RobotModel& model,
                                         const Eigen::VectorXd& q);

}  // namespace gmp
