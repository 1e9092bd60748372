#include "gmp/gait_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace gmp {
namespace {

constexpr int kSubsteps = 10;   // integration substeps per frame
constexpr double kMargin = 3.0; // s of trajectory simulated outside the clip

struct LegLayout {
  std::array<int, 6> joints;  // hip roll/pitch/yaw, knee, ankle pitch/roll
  Eigen::Vector3d hip_origin;
  double thigh;
  double shank;
};

LegLayout leg_layout(const RobotModel& model, const std::string& side) {
  static const std::array<const char*, 6> names = {
      "hip_roll", "hip_pitch", "hip_yaw", "knee", "ankle_pitch", "ankle_roll"};
  LegLayout leg;
  for (size_t i = 0; i < names.size(); ++i) {
    leg.joints[i] = model.joint_index(side + "_" + names[i]);
    if (leg.joints[i] < 0) {
      throw Error("synth_gait: model lacks joint '" + side + "_" + names[i] + "'");
    }
  }
  leg.hip_origin = model.joint(leg.joints[0]).origin;
  leg.thigh = model.joint(leg.joints[3]).origin.norm();
  leg.shank = model.joint(leg.joints[4]).origin.norm();
  return leg;
}

// Closed-form leg inverse kinematics for a flat foot. `d` is the ankle
// target relative to the hip in the base frame.
void solve_leg(const LegLayout& leg, const Eigen::Vector3d& d,
               double pelvis_roll, Eigen::VectorXd& q) {
  const double roll = std::atan2(d.y(), -d.z());
  const double ux = d.x();
  const double uz = -std::hypot(d.y(), d.z());
  const double reach = leg.thigh + leg.shank;
  const double r = std::min(std::hypot(ux, uz), reach * (1.0 - 1e-12));
  const double l1 = leg.thigh, l2 = leg.shank;
  const double cos_knee =
      std::clamp((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0);
  const double knee = std::acos(cos_knee);
  // Angle measured from straight down toward +x; R_y(b) lowers it by b.
  const double leg_angle = std::atan2(-l2 * std::sin(knee), l1 + l2 * std::cos(knee));
  const double target_angle = std::atan2(ux, -uz);
  const double pitch = leg_angle - target_angle;
  q[leg.joints[0]] = roll;
  q[leg.joints[1]] = pitch;
  q[leg.joints[2]] = 0.0;
  q[leg.joints[3]] = knee;
  q[leg.joints[4]] = -pitch - knee;
  q[leg.joints[5]] = -roll - pelvis_roll;
}

double uniform(std::mt19937_64& rng, double half_width) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * half_width;
}

double smoothstep(double s) { return s * s * (3.0 - 2.0 * s); }

double interpolate(const std::vector<std::pair<double, double>>& keys, double fallback,
                   double t) {
  if (keys.empty()) return fallback;
  if (t <= keys.front().first) return keys.front().second;
  if (t >= keys.back().first) return keys.back().second;
  // First key at or after t; keys are sorted by time.
  auto it = std::lower_bound(keys.begin(), keys.end(), t,
                             [](const auto& key, double x) { return key.first < x; });
  const auto& [t0, v0] = *(it - 1);
  const auto& [t1, v1] = *it;
  return t1 > t0 ? v0 + (v1 - v0) * (t - t0) / (t1 - t0) : v1;
}

}  // namespace

MotionClip synth_gait(const GaitParams& params, const RobotModel& model) {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw Error("synth_gait: parameter out of range: " + what);
  };
  check(params.speed >= 0.0 && params.speed <= kMaxForwardSpeed, "speed");
  for (const auto& [t, v] : params.speed_keys) {
    check(v >= 0.0 && v <= kMaxForwardSpeed, "speed key");
    check(std::isfinite(t), "speed key time");
  }
  check(std::abs(params.lateral_speed) <= kMaxLateralSpeed, "lateral_speed");
  check(std::abs(params.yaw_rate) <= kMaxYawRate, "yaw_rate");
  for (const auto& [t, v] : params.lateral_keys) {
    check(std::abs(v) <= kMaxLateralSpeed && std::isfinite(t), "lateral key");
  }
  for (const auto& [t, v] : params.yaw_keys) {
    check(std::abs(v) <= kMaxYawRate && std::isfinite(t), "yaw key");
  }
  auto by_time = [](const auto& a, const auto& b) { return a.first < b.first; };
  check(std::is_sorted(params.speed_keys.begin(), params.speed_keys.end(), by_time) &&
            std::is_sorted(params.lateral_keys.begin(), params.lateral_keys.end(), by_time) &&
            std::is_sorted(params.yaw_keys.begin(), params.yaw_keys.end(), by_time),
        "key times must be non-decreasing");
  check(params.duration > 0.0, "duration");
  check(params.fps > 0.0, "fps");
  check(params.stance_ratio > 0.0 && params.stance_ratio < 1.0, "stance_ratio");
  check(params.variation >= 0.0 && params.variation < 0.5, "variation");

  std::mt19937_64 rng(params.seed);
  const double jitter = params.variation;
  const double step_width = 0.10 * (1.0 + uniform(rng, jitter));
  const double clearance = 0.08 * (1.0 + uniform(rng, jitter));
  const double arm_swing = 0.35 * (1.0 + uniform(rng, jitter));
  const double bob = 0.012 * (1.0 + uniform(rng, jitter));
  const double sway = 0.015 * (1.0 + uniform(rng, jitter));
  const double roll_amp = 0.03 * (1.0 + uniform(rng, jitter));
  const double elbow_bias = -0.3 * (1.0 + uniform(rng, jitter));

  auto speed_at = [&](double t) { return interpolate(params.speed_keys, params.speed, t); };
  auto lateral_at = [&](double t) {
    return interpolate(params.lateral_keys, params.lateral_speed, t);
  };
  auto yaw_rate_at = [&](double t) { return interpolate(params.yaw_keys, params.yaw_rate, t); };
  auto activity = [&](double t) {
    const double drive = speed_at(t) + std::abs(lateral_at(t)) + 0.3 * std::abs(yaw_rate_at(t));
    return std::min(1.0, drive / 0.3);
  };
  auto cadence = [&](double v) {
    return params.cadence > 0.0 ? params.cadence : 1.7 + 0.8 * v;
  };

  // Integrate heading, planar position and gait phase on a fine grid that
  // extends past both ends of the clip.
  const double dt_fine = 1.0 / (params.fps * kSubsteps);
  const long n_frames = std::lround(params.duration * params.fps);
  check(n_frames >= 2, "duration * fps");
  const long pad = std::lround(kMargin / dt_fine);
  const long n_fine = n_frames * kSubsteps + 2 * pad;
  std::vector<double> grid_t(n_fine), grid_x(n_fine), grid_y(n_fine),
      grid_yaw(n_fine), grid_phase(n_fine);
  {
    // Start at index `pad` == clip time 0 and integrate both directions.
    grid_t[pad] = 0.0;
    grid_x[pad] = grid_y[pad] = grid_yaw[pad] = grid_phase[pad] = 0.0;
    auto deriv = [&](double t, double yaw) {
      const double v = speed_at(t), lat = lateral_at(t);
      const double c = std::cos(yaw), s = std::sin(yaw);
      return std::array<double, 4>{c * v - s * lat, s * v + c * lat, yaw_rate_at(t),
                                   0.5 * cadence(v)};
    };
    auto step = [&](long from, long to, double h) {
      // Midpoint rule; speed is piecewise linear so this is accurate to
      // second order in h.
      const double t = grid_t[from];
      const auto k1 = deriv(t, grid_yaw[from]);
      const auto k2 = deriv(t + 0.5 * h, grid_yaw[from] + 0.5 * h * k1[2]);
      grid_t[to] = t + h;
      grid_x[to] = grid_x[from] + h * k2[0];
      grid_y[to] = grid_y[from] + h * k2[1];
      grid_yaw[to] = grid_yaw[from] + h * k2[2];
      grid_phase[to] = grid_phase[from] + h * k2[3];
    };
    for (long i = pad + 1; i < n_fine; ++i) step(i - 1, i, dt_fine);
    for (long i = pad - 1; i >= 0; --i) step(i + 1, i, -dt_fine);
  }

  // Linear interpolation on the fine grid at a given gait phase.
  auto at_phase = [&](double phase) {
    auto it = std::lower_bound(grid_phase.begin(), grid_phase.end(), phase);
    long i = std::clamp<long>(it - grid_phase.begin(), 1, n_fine - 1);
    const double p0 = grid_phase[i - 1], p1 = grid_phase[i];
    const double w = p1 > p0 ? std::clamp((phase - p0) / (p1 - p0), 0.0, 1.0) : 0.0;
    struct Sample { double t, x, y, yaw; };
    return Sample{grid_t[i - 1] + w * (grid_t[i] - grid_t[i - 1]),
                  grid_x[i - 1] + w * (grid_x[i] - grid_x[i - 1]),
                  grid_y[i - 1] + w * (grid_y[i] - grid_y[i - 1]),
                  grid_yaw[i - 1] + w * (grid_yaw[i] - grid_yaw[i - 1])};
  };

  const double beta = params.stance_ratio;
  auto phase_rate = [&](double t) { return 0.5 * cadence(speed_at(t)); };
  // Where the foot should land so that the pelvis passes over it `lead`
  // seconds from time t, assuming the velocity at t is held.
  auto predicted = [&](double t, double x, double y, double yaw, double lead, double side) {
    const double v = speed_at(t), lat = lateral_at(t);
    const double c = std::cos(yaw), sn = std::sin(yaw);
    const double heading = yaw + yaw_rate_at(t) * lead;
    const double lateral = side * step_width;
    return Eigen::Vector2d(x + lead * (c * v - sn * lat) - std::sin(heading) * lateral,
                           y + lead * (sn * v + c * lat) + std::cos(heading) * lateral);
  };
  // Footprint of stance number k; side = +1 left, -1 right. Fixed at
  // touchdown from the state at that moment only.
  auto footprint = [&](long k, double phase_offset, double side) {
    const auto s = at_phase(static_cast<double>(k) - phase_offset);
    return predicted(s.t, s.x, s.y, s.yaw, 0.5 * beta / phase_rate(s.t), side);
  };

  const LegLayout left = leg_layout(model, "left");
  const LegLayout right = leg_layout(model, "right");
  const int waist = model.joint_index("waist_yaw");
  const int l_sp = model.joint_index("left_shoulder_pitch");
  const int l_sr = model.joint_index("left_shoulder_roll");
  const int l_el = model.joint_index("left_elbow");
  const int r_sp = model.joint_index("right_shoulder_pitch");
  const int r_sr = model.joint_index("right_shoulder_roll");
  const int r_el = model.joint_index("right_elbow");
  if (std::min({waist, l_sp, l_sr, l_el, r_sp, r_sr, r_el}) < 0) {
    throw Error("synth_gait: model lacks the standard arm/waist joints");
  }
  const double rest_height = model.rest_base_height();

  MotionClip clip;
  clip.fps = params.fps;
  clip.joint_names = joint_names_of(model);
  clip.frames.resize(n_frames);
  clip.contacts.emplace(n_frames);

  for (long f = 0; f < n_frames; ++f) {
    const long g = pad + f * kSubsteps;
    const double t = grid_t[g];
    const double v = speed_at(t);
    const double act = activity(t);
    const double phase = grid_phase[g];
    const double yaw = grid_yaw[g];
    const double two_pi_phase = 2.0 * M_PI * phase;

    const double pelvis_roll = roll_amp * act * std::sin(two_pi_phase);
    const double lateral_sway = sway * act * std::sin(two_pi_phase);
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    BasePose base;
    base.position = {grid_x[g] - sy * lateral_sway, grid_y[g] + cy * lateral_sway,
                     rest_height - (0.05 + 0.02 * v) +
                         bob * act * std::cos(4.0 * M_PI * phase)};
    base.orientation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                       Eigen::AngleAxisd(pelvis_roll, Eigen::Vector3d::UnitX());

    Eigen::VectorXd q = Eigen::VectorXd::Zero(model.dof_count());
    ContactLabel contact;
    auto place_foot = [&](const LegLayout& leg, double phase_offset, double side,
                          bool& in_contact) {
      const double p = phase + phase_offset;
      const long k = static_cast<long>(std::floor(p));
      const double frac = p - static_cast<double>(k);
      Eigen::Vector3d ankle;
      if (frac < beta) {
        const Eigen::Vector2d fp = footprint(k, phase_offset, side);
        ankle = {fp.x(), fp.y(), model.ankle_height()};
        in_contact = true;
      } else {
        const double s = (frac - beta) / (1.0 - beta);
        const Eigen::Vector2d from = footprint(k, phase_offset, side);
        // Swing target follows the current velocity and lands on footprint k+1.
        const double rate = phase_rate(t);
        const double lead = (static_cast<double>(k + 1) - p + 0.5 * beta) / rate;
        const Eigen::Vector2d to = predicted(t, grid_x[g], grid_y[g], yaw, lead, side);
        const Eigen::Vector2d xy = from + smoothstep(s) * (to - from);
        ankle = {xy.x(), xy.y(),
                 model.ankle_height() + clearance * act * std::sin(M_PI * s)};
        in_contact = act <= 0.0;
      }
      const Eigen::Vector3d d =
          base.inverse_apply(ankle) - leg.hip_origin;
      solve_leg(leg, d, pelvis_roll, q);
    };
    place_foot(left, 0.0, 1.0, contact.left);
    place_foot(right, 0.5, -1.0, contact.right);

    const double arm_phase = std::cos(two_pi_phase);
    q[l_sp] = arm_swing * act * arm_phase;
    q[r_sp] = -arm_swing * act * arm_phase;
    q[l_sr] = 0.06;
    q[r_sr] = -0.06;
    q[l_el] = elbow_bias - 0.15 * act * 0.5 * (1.0 - arm_phase);
    q[r_el] = elbow_bias - 0.15 * act * 0.5 * (1.0 + arm_phase);
    q[waist] = 0.06 * act * std::sin(two_pi_phase);

    clip.frames[f] = {base, q};
    (*clip.contacts)[f] = contact;
  }
  clip.validate();
  return clip;
}

std::vector<MotionClip> synth_corpus(const CorpusOptions& options, const RobotModel& model) {
  if (options.clips < 1 || !(options.clip_seconds > 0.0) || !(options.fps > 0.0) ||
      !(options.segment_min > 0.0) || options.segment_max < options.segment_min ||
      !(options.response_time > 0.0) || !(options.forward_accel > 0.0) ||
      !(options.lateral_accel > 0.0) || !(options.yaw_accel > 0.0) ||
      options.forward_noise < 0.0 || options.lateral_noise < 0.0 || options.yaw_noise < 0.0) {
    throw Error("synth_corpus: invalid options");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  auto unit = [&] { return 0.5 * (1.0 + uniform(rng, 1.0)); };
  const double dt = 1.0 / options.fps;
  const long n_frames = std::lround(options.clip_seconds * options.fps);
  std::vector<MotionClip> out;
  for (int c = 0; c < options.clips; ++c) {
    GaitParams p;
    p.duration = options.clip_seconds;
    p.fps = options.fps;
    p.variation = options.variation;
    p.seed = rng();
    bool standing = false;
    double target_v = 0.0, target_lat = 0.0, target_yaw = 0.0;
    auto draw = [&] {
      standing = unit() < options.standing_probability;
      if (standing) {
        target_v = target_lat = target_yaw = 0.0;
        return;
      }
      target_v = kMaxForwardSpeed * unit();
      target_lat = uniform(rng, kMaxLateralSpeed);
      target_yaw = uniform(rng, kMaxYawRate);
    };
    draw();
    double v = target_v, lat = target_lat, yaw = target_yaw;
    double next_switch = options.segment_min + (options.segment_max - options.segment_min) * unit();
    const double sqrt_dt = std::sqrt(dt);
    auto advance = [&](double value, double target, double accel, double noise, double limit,
                       double lo) {
      const double pull = std::clamp((target - value) / options.response_time, -accel, accel);
      const double kick = standing ? 0.0 : noise * sqrt_dt * normal(rng);
      return std::clamp(value + pull * dt + kick, lo, limit);
    };
    // One key per frame (plus one past the end so the last frame is covered).
    for (long f = 0; f <= n_frames; ++f) {
      const double t = static_cast<double>(f) * dt;
      p.speed_keys.push_back({t, v});
      p.lateral_keys.push_back({t, lat});
      p.yaw_keys.push_back({t, yaw});
      if (t >= next_switch) {
        draw();
        next_switch += options.segment_min + (options.segment_max - options.segment_min) * unit();
      }
      v = advance(v, target_v, options.forward_accel, options.forward_noise, kMaxForwardSpeed, 0.0);
      lat = advance(lat, target_lat, options.lateral_accel, options.lateral_noise,
                    kMaxLateralSpeed, -kMaxLateralSpeed);
      yaw = advance(yaw, target_yaw, options.yaw_accel, options.yaw_noise, kMaxYawRate,
                    -kMaxYawRate);
    }
    MotionClip clip = synth_gait(p, model);
    if (options.mirror) {
      MotionClip mirrored = mirror_x(clip, model);
      out.push_back(std::move(clip));
      out.push_back(std::move(mirrored));
    } else {
      out.push_back(std::move(clip));
    }
  }
  return out;
}

}  // namespace gmp
