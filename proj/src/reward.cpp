#include "gmp/reward.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "gmp/error.hpp"

namespace gmp {
namespace {

void check_vector(const Eigen::VectorXd& v, Eigen::Index n, const char* name) {
  if (v.size() != n) {
    throw DimensionError(std::string("control state field ") + name + " has " +
                         std::to_string(v.size()) + " entries, expected " + std::to_string(n));
  }
  if (!v.allFinite()) throw Error(std::string("control state field ") + name + " is not finite");
}

double tracking(double err_norm, const RewardConfig& config) {
  const double e = config.squared_norm ? err_norm * err_norm : err_norm;
  return std::exp(-config.tracking_scale * e);
}

RewardTerm make_term(std::string name, double raw, double weight) {
  return {std::move(name), raw, weight, weight * raw};
}

}  // namespace

void ControlStateSample::validate() const {
  check_vector(q, kDofCount, "q");
  check_vector(dq, kDofCount, "dq");
  check_vector(ddq, kDofCount, "ddq");
  check_vector(tau, kDofCount, "tau");
  check_vector(q_default, kDofCount, "q_default");
  check_vector(a_dot, a_dot.size(), "a_dot");
  check_vector(a_ddot, a_dot.size(), "a_ddot");
  if (!v_xy.allFinite() || !std::isfinite(v_z) || !w.allFinite() || !g_xy.allFinite()) {
    throw Error("control state base velocities or gravity are not finite");
  }
  for (const auto& p : p_key) {
    if (!p.allFinite()) throw Error("control state keypoints are not finite");
  }
  for (double t : t_air) {
    if (!std::isfinite(t) || t < 0.0) throw Error("control state air time must be finite and >= 0");
  }
}

const RewardTerm& RewardBreakdown::term(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t;
  }
  throw Error("no reward term named '" + name + "'");
}

double r_dof(const Eigen::VectorXd& q, const Eigen::VectorXd& q_ref, const RewardConfig& config) {
  if (q.size() != kDofCount || q_ref.size() != kDofCount) {
    throw DimensionError("r_dof expects two " + std::to_string(kDofCount) + "-vectors, got " +
                         std::to_string(q.size()) + " and " + std::to_string(q_ref.size()));
  }
  return tracking((q - q_ref).norm(), config);
}

double r_keypos(const KeypointSet& p, const KeypointSet& p_ref, const RewardConfig& config) {
  double sq = 0.0;
  for (int k = 0; k < kKeypointCount; ++k) sq += (p[k] - p_ref[k]).squaredNorm();
  return tracking(std::sqrt(sq), config);
}

double r_guidance(const ControlStateSample& state, const ReferenceFrame& reference,
                  const RewardConfig& config) {
  return config.dof_weight * r_dof(state.q, reference.q_ref, config) +
         config.keypos_weight * r_keypos(state.p_key, reference.p_ref, config);
}

TaskRewards task_rewards(const ControlStateSample& state, const VelocityCommand& c) {
  const Eigen::Vector2d c_xy(c.vx, c.vy);
  const double dw = state.w.z() - c.yaw_rate;
  return {std::exp(-4.0 * (state.v_xy - c_xy).squaredNorm()), std::exp(-4.0 * dw * dw)};
}

std::vector<RewardTerm> regularization_rewards(const ControlStateSample& state) {
  state.validate();
  double air = 0.0;
  for (int f = 0; f < 2; ++f) {
    if (state.foot_contact[f] && state.t_air[f] > 0.0) air += state.t_air[f] - 0.5;
  }
  const bool any_contact = state.foot_contact[0] || state.foot_contact[1];
  return {
      make_term("lin_vel_z", state.v_z * state.v_z, -0.8),
      make_term("ang_vel_xy", state.w.head<2>().squaredNorm(), -0.05),
      make_term("projected_gravity", state.g_xy.squaredNorm(), -6.0),
      make_term("torque", state.tau.squaredNorm(), -5e-6),
      make_term("dof_vel", state.dq.squaredNorm(), -5e-4),
      make_term("dof_acc", state.ddq.squaredNorm(), -2e-8),
      make_term("action_rate", state.a_dot.squaredNorm(), -0.01),
      make_term("smoothness", state.a_ddot.squaredNorm(), -5e-3),
      make_term("joint_regularization", (state.q - state.q_default).squaredNorm(), -0.1),
      make_term("feet_air_time", air, 20.0),
      make_term("no_fly", any_contact ? 1.0 : 0.0, 0.8),
      make_term("collision", state.collision ? 1.0 : 0.0, -1.0),
      make_term("termination", state.termination ? 1.0 : 0.0, -200.0),
  };
}

RewardBreakdown total_reward(const ControlStateSample& state, const ReferenceFrame& reference,
                             const VelocityCommand& c, const RewardConfig& config) {
  state.validate();
  RewardBreakdown b;
  b.terms.push_back(make_term("dof", r_dof(state.q, reference.q_ref, config), config.dof_weight));
  b.terms.push_back(
      make_term("keypos", r_keypos(state.p_key, reference.p_ref, config), config.keypos_weight));
  const TaskRewards task = task_rewards(state, c);
  b.terms.push_back(make_term("lin_vel", task.lin, kLinVelWeight));
  b.terms.push_back(make_term("ang_vel", task.ang, kAngVelWeight));
  for (auto& t : regularization_rewards(state)) b.terms.push_back(std::move(t));

  for (size_t i = 0; i < b.terms.size(); ++i) {
    const double w = b.terms[i].weighted;
    if (i < 2) {
      b.guidance += w;
    } else if (i < 4) {
      b.task += w;
    } else {
      b.regularization += w;
    }
  }
  b.total = b.guidance + b.task + b.regularization;
  return b;
}

std::string format_breakdown(const RewardBreakdown& b) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %16s %12s %16s\n", "term", "raw", "weight", "weighted");
  out << line;
  for (const auto& t : b.terms) {
    std::snprintf(line, sizeof line, "%-22s %16.9g %12.6g %16.9g\n", t.name.c_str(), t.raw,
                  t.weight, t.weighted);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-22s %16.9g\n%-22s %16.9g\n%-22s %16.9g\n%-22s %16.9g\n",
                "guidance", b.guidance, "task", b.task, "regularization", b.regularization, "total",
                b.total);
  out << line;
  return out.str();
}

}  // namespace gmp
