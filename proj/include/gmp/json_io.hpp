#pragma once

#include <string>
#include <vector>

#include "gmp/metrics.hpp"
#include "gmp/reward.hpp"

namespace gmp {

// JSON documents read by `gmp eval-reward` and `gmp eval`; see
// docs/formats.md. Missing optional fields keep their defaults (zero,
// feet in contact). Throws gmp::Error naming the offending field.
ControlStateSample parse_control_state(const std::string& text);
ReferenceFrame parse_reference_frame(const std::string& text);
// [[[vx, vy, cx, cy], ...], ...], one inner list per episode.
std::vector<Episode> parse_episodes(const std::string& text);

std::string breakdown_to_json(const RewardBreakdown& b);
std::string report_to_json(const MetricReport& r);

std::string read_text_file(const std::string& path);

}  // namespace gmp
