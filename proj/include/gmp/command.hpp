#pragma once

#include <string>

namespace gmp {

inline constexpr double kCommandVxMin = 0.0;
inline constexpr double kCommandVxMax = 1.5;
inline constexpr double kCommandVyMax = 0.3;
inline constexpr double kCommandYawMax = 0.3;

// Desired planar base velocity (m/s) and yaw rate (rad/s) in the base frame.
struct VelocityCommand {
  double vx = 0.0;
  double vy = 0.0;
  double yaw_rate = 0.0;

  bool operator==(const VelocityCommand&) const = default;
};

// Result of clamping a command into the supported ranges.
struct ClampedCommand {
  VelocityCommand command;
  bool clamped = false;
};

// Clamps each component into range. NaN components throw.
ClampedCommand clamp_command(const VelocityCommand& c);

// True when every component is finite and within range.
bool command_in_range(const VelocityCommand& c);

// Parses "vx,vy,yaw_rate". Throws ParseError on malformed text; does not clamp.
VelocityCommand parse_command(const std::string& text);
std::string format_command(const VelocityCommand& c);

}  // namespace gmp
