#include "gmp/command.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gmp/error.hpp"

namespace gmp {

ClampedCommand clamp_command(const VelocityCommand& c) {
  if (std::isnan(c.vx) || std::isnan(c.vy) || std::isnan(c.yaw_rate)) {
    throw Error("velocity command has a NaN component");
  }
  ClampedCommand out;
  out.command.vx = std::clamp(c.vx, kCommandVxMin, kCommandVxMax);
  out.command.vy = std::clamp(c.vy, -kCommandVyMax, kCommandVyMax);
  out.command.yaw_rate = std::clamp(c.yaw_rate, -kCommandYawMax, kCommandYawMax);
  out.clamped = !(out.command == c);
  return out;
}

bool command_in_range(const VelocityCommand& c) {
  return c.vx >= kCommandVxMin && c.vx <= kCommandVxMax && std::abs(c.vy) <= kCommandVyMax &&
         std::abs(c.yaw_rate) <= kCommandYawMax;
}

VelocityCommand parse_command(const std::string& text) {
  std::istringstream in(text);
  double v[3];
  for (int i = 0; i < 3; ++i) {
    if (!(in >> v[i])) throw ParseError("command must be \"vx,vy,yaw_rate\", got '" + text + "'");
    if (i < 2) {
      char comma = 0;
      if (!(in >> comma) || comma != ',') {
        throw ParseError("command must be \"vx,vy,yaw_rate\", got '" + text + "'");
      }
    }
  }
  in >> std::ws;
  if (!in.eof()) throw ParseError("trailing text in command '" + text + "'");
  if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
    throw ParseError("command components must be finite");
  }
  return {v[0], v[1], v[2]};
}

std::string format_command(const VelocityCommand& c) {
  std::ostringstream out;
  out.precision(17);
  out << c.vx << ',' << c.vy << ',' << c.yaw_rate;
  return out.str();
}

}  // namespace gmp
