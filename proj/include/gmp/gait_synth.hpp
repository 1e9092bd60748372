#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gmp/humanoid_model.hpp"
#include "gmp/motion_clip.hpp"

namespace gmp {

inline constexpr double kMaxForwardSpeed = 1.5;  // m/s
inline constexpr double kMaxLateralSpeed = 0.3;  // m/s
inline constexpr double kMaxYawRate = 0.3;       // rad/s

// Parameters of a procedural walking clip. Speeds are expressed in the
// heading frame of the base.
struct GaitParams {
  double speed = 1.0;            // forward speed at t = 0 [m/s]
  // Optional (time [s], speed [m/s]) keys, linearly interpolated. When empty
  // the speed is `speed` throughout.
  std::vector<std::pair<double, double>> speed_keys;
  double lateral_speed = 0.0;    // [m/s]
  double yaw_rate = 0.0;         // [rad/s]
  // Optional keys for the lateral speed and yaw rate, same convention.
  std::vector<std::pair<double, double>> lateral_keys;
  std::vector<std::pair<double, double>> yaw_keys;
  double cadence = 0.0;          // steps per second; <= 0 selects 1.7 + 0.8 v
  double duration = 10.0;        // [s]
  double stance_ratio = 0.6;     // fraction of a stride a foot is planted
  double fps = kDefaultFps;
  double variation = 0.0;        // relative style jitter drawn from the seed
  std::uint64_t seed = 0;
};

// Kinematically consistent walk: stance feet stay planted, swing feet follow
// an arc, and the clip carries the generator's own contact schedule.
MotionClip synth_gait(const GaitParams& params,
                      const RobotModel& model = default_robot_model());

// Random walking corpus. Each velocity channel relaxes toward a target that
// is redrawn every segment (standing included) and wanders with a small
// per-frame random term, so the next frame is never fully determined by the
// current one. Every clip is optionally followed by its mirror.
struct CorpusOptions {
  int clips = 5;
  double clip_seconds = 4.0;
  double fps = kDefaultFps;
  double segment_min = 0.8;       // s
  double segment_max = 2.0;       // s
  double response_time = 0.5;     // s
  double forward_accel = 1.0;     // m/s^2, limit on the relaxation term
  double lateral_accel = 1.0;     // m/s^2
  double yaw_accel = 1.0;         // rad/s^2
  double forward_noise = 0.15;    // m/s per sqrt(s)
  double lateral_noise = 0.05;    // m/s per sqrt(s)
  double yaw_noise = 0.1;         // rad/s per sqrt(s)
  double standing_probability = 0.15;
  double variation = 0.1;
  bool mirror = true;
  std::uint64_t seed = 0;
};

std::vector<MotionClip> synth_corpus(const CorpusOptions& options,
                                     const RobotModel& model = default_robot_model());

}  // namespace gmp
