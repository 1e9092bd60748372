#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmp/humanoid_model.hpp"

namespace gmp {

inline constexpr double kDefaultFps = 50.0;

struct ContactLabel {
  bool left = false;
  bool right = false;

  bool operator==(const ContactLabel&) const = default;
};

struct ClipFrame {
  BasePose base;
  Eigen::VectorXd q;
};

// Time-indexed base transform and joint angles sampled at a fixed rate.
struct MotionClip {
  double fps = kDefaultFps;
  std::vector<std::string> joint_names;
  std::vector<ClipFrame> frames;
  std::optional<std::vector<ContactLabel>> contacts;

  int size() const { return static_cast<int>(frames.size()); }
  double dt() const { return 1.0 / fps; }

  // Throws gmp::Error when the clip violates its invariants.
  void validate() const;
};

// Joint names in the model's canonical order.
std::vector<std::string> joint_names_of(const RobotModel& model);

// Bit-exact text serialization; see docs/formats.md.
std::string clip_to_string(const MotionClip& clip);
MotionClip clip_from_string(const std::string& text);
void save_clip(const std::string& path, const MotionClip& clip);
MotionClip load_clip(const std::string& path);

// Reflects the clip across the x-z plane: left/right channels swap, roll and
// yaw style joints change sign, base y and base roll/yaw are negated.
MotionClip mirror_x(const MotionClip& clip, const RobotModel& model);

bool clips_identical(const MotionClip& a, const MotionClip& b);

}  // namespace gmp
