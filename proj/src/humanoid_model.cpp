#include "gmp/humanoid_model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bundled_descriptors.hpp"
#include "gmp/log.hpp"

namespace gmp {
namespace {

using nlohmann::json;

constexpr double kAxisTolerance = 1e-9;
constexpr int kMaxClampWarnings = 5;
std::atomic<int> clamp_warnings{0};

Eigen::Vector3d read_vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError("malformed model descriptor: '" + what +
                     "' must be a 3-vector");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::vector<Site> read_sites(const json& arr, const std::vector<Joint>& joints,
                             const std::string& what) {
  if (!arr.is_array()) {
    throw ParseError("malformed model descriptor: '" + what +
                     "' must be a list");
  }
  std::vector<Site> sites;
  for (const auto& s : arr) {
    Site site;
    site.name = s.at("name").get<std::string>();
    const auto link = s.at("link").get<std::string>();
    if (link == "base") {
      site.link = -1;
    } else {
      auto it = std::find_if(joints.begin(), joints.end(),
                             [&](const Joint& jt) { return jt.name == link; });
      if (it == joints.end()) {
        throw Error("unknown keypoint link '" + link + "' for site '" +
                    site.name + "'");
      }
      site.link = static_cast<int>(it - joints.begin());
    }
    site.offset = s.contains("offset") ? read_vec3(s["offset"], site.name)
                                       : Eigen::Vector3d::Zero();
    sites.push_back(std::move(site));
  }
  return sites;
}

template <size_t N>
std::vector<Site> order_sites(std::vector<Site> sites,
                              const std::array<std::string_view, N>& names,
                              const std::string& what) {
  if (sites.size() != N) {
    throw Error(what + " count mismatch: expected " + std::to_string(N) +
                ", got " + std::to_string(sites.size()));
  }
  std::vector<Site> ordered;
  for (auto name : names) {
    auto it = std::find_if(sites.begin(), sites.end(),
                           [&](const Site& s) { return s.name == name; });
    if (it == sites.end()) {
      throw Error(what + " '" + std::string(name) + "' missing");
    }
    ordered.push_back(*it);
  }
  return ordered;
}

Eigen::Matrix3d axis_rotation(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

}  // namespace

RobotModel::RobotModel(std::string name, double standing_height,
                       double ankle_height, std::vector<Joint> joints,
                       std::vector<Site> keypoints, std::vector<Site> anchors)
    : name_(std::move(name)),
      standing_height_(standing_height),
      ankle_height_(ankle_height),
      joints_(std::move(joints)),
      keypoints_(std::move(keypoints)),
      anchors_(std::move(anchors)) {
  if (static_cast<int>(joints_.size()) != kDofCount) {
    throw Error("dof count mismatch: expected " + std::to_string(kDofCount) +
                ", got " + std::to_string(joints_.size()));
  }
  if (keypoints_.size() != kKeypointCount) {
    throw Error("keypoint count mismatch");
  }
  if (anchors_.size() != kAnchorNames.size()) {
    throw Error("anchor count mismatch");
  }
  if (!(standing_height_ > 0.0)) throw Error("standing_height must be > 0");
  const int n = dof_count();
  chain_mask_.assign(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i) {
    const Joint& j = joints_[i];
    if (std::abs(j.axis.norm() - 1.0) > kAxisTolerance) {
      throw Error("non-unit axis for joint '" + j.name + "'");
    }
    if (!(j.lower < j.upper)) {
      throw Error("invalid limits for joint '" + j.name + "': lower >= upper");
    }
    if (j.parent >= i) {
      throw Error("joint '" + j.name + "' must follow its parent");
    }
    if (j.parent >= 0) chain_mask_[i] = chain_mask_[j.parent];
    chain_mask_[i][i] = true;
  }
  for (const auto& s : keypoints_) {
    if (s.link >= n) throw Error("unknown keypoint link for '" + s.name + "'");
  }
  build_mirror_table();
}

int RobotModel::joint_index(std::string_view name) const {
  for (int i = 0; i < dof_count(); ++i) {
    if (joints_[i].name == name) return i;
  }
  return -1;
}

void RobotModel::build_mirror_table() {
  // Reflection across the x-z plane maps a rotation about `a` by theta to a
  // rotation about M*a by -theta.
  const Eigen::Vector3d reflect(1.0, -1.0, 1.0);
  const int n = dof_count();
  mirror_index_.assign(n, -1);
  mirror_sign_.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    std::string counterpart = joints_[i].name;
    if (counterpart.rfind("left_", 0) == 0) {
      counterpart.replace(0, 5, "right_");
    } else if (counterpart.rfind("right_", 0) == 0) {
      counterpart.replace(0, 6, "left_");
    }
    const int k = joint_index(counterpart);
    if (k < 0) continue;
    const Eigen::Vector3d mirrored = joints_[i].axis.cwiseProduct(reflect);
    const double dot = mirrored.dot(joints_[k].axis);
    if (std::abs(std::abs(dot) - 1.0) > 1e-9) continue;
    mirror_index_[i] = k;
    mirror_sign_[i] = -dot;
  }
}

Eigen::VectorXd RobotModel::lower_limits() const {
  Eigen::VectorXd v(dof_count());
  for (int i = 0; i < dof_count(); ++i) v[i] = joints_[i].lower;
  return v;
}

Eigen::VectorXd RobotModel::upper_limits() const {
  Eigen::VectorXd v(dof_count());
  for (int i = 0; i < dof_count(); ++i) v[i] = joints_[i].upper;
  return v;
}

Eigen::VectorXd RobotModel::clamp(const Eigen::VectorXd& q) const {
  if (q.size() != dof_count()) {
    throw DimensionError("joint vector has dimension " +
                         std::to_string(q.size()) + ", expected " +
                         std::to_string(dof_count()));
  }
  return q.cwiseMax(lower_limits()).cwiseMin(upper_limits());
}

bool RobotModel::within_limits(const Eigen::VectorXd& q) const {
  for (int i = 0; i < dof_count(); ++i) {
    if (q[i] < joints_[i].lower || q[i] > joints_[i].upper) return false;
  }
  return true;
}

double RobotModel::total_link_length() const {
  double total = 0.0;
  for (const auto& j : joints_) total += j.origin.norm();
  for (const auto& s : keypoints_) total += s.offset.norm();
  return total;
}

double RobotModel::rest_base_height() const {
  const auto frames =
      compute_frames(*this, Eigen::VectorXd::Zero(dof_count()), BasePose{});
  const double ankle_z =
      frames.site_position(keypoints_[static_cast<int>(Keypoint::kLeftAnkle)])
          .z();
  return ankle_height_ - ankle_z;
}

RobotModel load_model_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model descriptor: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "gmp-model") {
      throw ParseError("malformed model descriptor: format tag missing");
    }
    if (doc.value("version", 0) != 1) {
      throw ParseError("unsupported model descriptor version");
    }
    std::vector<Joint> joints;
    for (const auto& jj : doc.at("joints")) {
      Joint j;
      j.name = jj.at("name").get<std::string>();
      const auto parent = jj.at("parent").get<std::string>();
      if (parent == "base") {
        j.parent = -1;
      } else {
        auto it = std::find_if(joints.begin(), joints.end(),
                               [&](const Joint& p) { return p.name == parent; });
        if (it == joints.end()) {
          throw Error("joint '" + j.name + "' references unknown parent '" +
                      parent + "'");
        }
        j.parent = static_cast<int>(it - joints.begin());
      }
      j.origin = read_vec3(jj.at("origin"), j.name + ".origin");
      j.axis = read_vec3(jj.at("axis"), j.name + ".axis");
      const auto& lim = jj.at("limits");
      if (!lim.is_array() || lim.size() != 2) {
        throw ParseError("malformed model descriptor: limits of '" + j.name +
                         "'");
      }
      j.lower = lim[0].get<double>();
      j.upper = lim[1].get<double>();
      joints.push_back(std::move(j));
    }
    if (static_cast<int>(joints.size()) != kDofCount) {
      throw Error("dof count mismatch: expected " + std::to_string(kDofCount) +
                  ", got " + std::to_string(joints.size()));
    }
    for (const auto& j : joints) {
      if (std::abs(j.axis.norm() - 1.0) > kAxisTolerance) {
        throw Error("non-unit axis for joint '" + j.name + "'");
      }
    }
    auto keypoints = order_sites(
        read_sites(doc.at("keypoints"), joints, "keypoints"),
        kKeypointNames, "keypoint");
    auto anchors =
        order_sites(read_sites(doc.at("anchors"), joints, "anchors"),
                    kAnchorNames, "anchor");
    return RobotModel(doc.value("name", "unnamed"),
                      doc.at("standing_height").get<double>(),
                      doc.value("ankle_height", 0.0), std::move(joints),
                      std::move(keypoints), std::move(anchors));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model descriptor: ") + e.what());
  }
}

RobotModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model descriptor '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_model_from_string(ss.str());
}

std::string bundled_robot_descriptor() { return kBundledRobotDescriptor; }
std::string bundled_human_descriptor() { return kBundledHumanDescriptor; }

const RobotModel& default_robot_model() {
  static const RobotModel model =
      load_model_from_string(bundled_robot_descriptor());
  return model;
}

const RobotModel& default_human_model() {
  static const RobotModel model =
      load_model_from_string(bundled_human_descriptor());
  return model;
}

Eigen::Vector3d JointFrames::site_position(const Site& site) const {
  if (site.link < 0) return base.apply(site.offset);
  return rotation[site.link] * site.offset + position[site.link];
}

JointFrames compute_frames(const RobotModel& model, const Eigen::VectorXd& q,
                           const BasePose& base) {
  if (q.size() != model.dof_count()) {
    throw DimensionError("joint vector has dimension " +
                         std::to_string(q.size()) + ", expected " +
                         std::to_string(model.dof_count()));
  }
  const int n = model.dof_count();
  JointFrames f;
  f.base = base;
  f.rotation.resize(n);
  f.position.resize(n);
  const Eigen::Matrix3d base_rot = base.orientation.toRotationMatrix();
  for (int i = 0; i < n; ++i) {
    const Joint& j = model.joint(i);
    const Eigen::Matrix3d& parent_rot =
        j.parent < 0 ? base_rot : f.rotation[j.parent];
    const Eigen::Vector3d& parent_pos =
        j.parent < 0 ? base.position : f.position[j.parent];
    f.position[i] = parent_pos + parent_rot * j.origin;
    f.rotation[i] = parent_rot * axis_rotation(j.axis, q[i]);
  }
  return f;
}

KeypointSet keypoints_world(const RobotModel& model, const JointFrames& frames) {
  KeypointSet out;
  for (int k = 0; k < kKeypointCount; ++k) {
    out[k] = frames.site_position(model.keypoints()[k]);
  }
  return out;
}

AnchorSet anchors_world(const RobotModel& model, const JointFrames& frames) {
  AnchorSet out;
  for (size_t k = 0; k < out.size(); ++k) {
    out[k] = frames.site_position(model.anchors()[k]);
  }
  return out;
}

KeypointSet forward_kinematics(const RobotModel& model,
                               const Eigen::VectorXd& q,
                               const BasePose& base) {
  if (q.size() != model.dof_count()) {
    throw DimensionError("joint vector has dimension " +
                         std::to_string(q.size()) + ", expected " +
                         std::to_string(model.dof_count()));
  }
  if (!model.within_limits(q)) {
    if (clamp_warnings.fetch_add(1) < kMaxClampWarnings) {
      warn("forward_kinematics: joint angles outside limits were clamped");
    }
    return keypoints_world(model, compute_frames(model, model.clamp(q), base));
  }
  return keypoints_world(model, compute_frames(model, q, base));
}

KeypointSet keypoints_local(const RobotModel& model, const Eigen::VectorXd& q) {
  return forward_kinematics(model, q, BasePose::Identity());
}

Eigen::Matrix<double, 3, Eigen::Dynamic> site_jacobian(
    const RobotModel& model, const JointFrames& frames, const Site& site) {
  const int n = model.dof_count();
  Eigen::Matrix<double, 3, Eigen::Dynamic> jac =
      Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, n);
  const Eigen::Vector3d p = frames.site_position(site);
  for (int j = 0; j < n; ++j) {
    if (!model.affects(j, site.link)) continue;
    jac.col(j) = frames.axis(model, j).cross(p - frames.position[j]);
  }
  return jac;
}

Eigen::MatrixXd keypoints_local_jacobian(const RobotModel& model,
                                         const Eigen::VectorXd& q) {
  const Eigen::VectorXd qc = model.clamp(q);
  const auto frames = compute_frames(model, qc, BasePose::Identity());
  Eigen::MatrixXd jac(3 * kKeypointCount, model.dof_count());
  for (int k = 0; k < kKeypointCount; ++k) {
    jac.middleRows(3 * k, 3) = site_jacobian(model, frames, model.keypoints()[k]);
  }
  // Clamped coordinates do not move the keypoints.
  for (int j = 0; j < model.dof_count(); ++j) {
    if (q[j] < model.joint(j).lower || q[j] > model.joint(j).upper) {
      jac.col(j).setZero();
    }
  }
  return jac;
}

}  // namespace gmp
