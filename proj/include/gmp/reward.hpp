#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmp/command.hpp"
#include "gmp/humanoid_model.hpp"

namespace gmp {

// One control step of the robot as seen by the reward. Keypoints are in the
// base frame. t_air holds, per foot, the duration of the flight phase that
// ended with a touchdown at this step and 0 otherwise.
struct ControlStateSample {
  Eigen::Vector2d v_xy = Eigen::Vector2d::Zero();
  double v_z = 0.0;
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  Eigen::Vector2d g_xy = Eigen::Vector2d::Zero();
  Eigen::VectorXd q = Eigen::VectorXd::Zero(kDofCount);
  Eigen::VectorXd dq = Eigen::VectorXd::Zero(kDofCount);
  Eigen::VectorXd ddq = Eigen::VectorXd::Zero(kDofCount);
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(kDofCount);
  Eigen::VectorXd a_dot = Eigen::VectorXd::Zero(kDofCount);
  Eigen::VectorXd a_ddot = Eigen::VectorXd::Zero(kDofCount);
  Eigen::VectorXd q_default = Eigen::VectorXd::Zero(kDofCount);
  KeypointSet p_key{};
  std::array<double, 2> t_air{0.0, 0.0};
  std::array<bool, 2> foot_contact{true, true};
  bool collision = false;
  bool termination = false;

  // Throws DimensionError / Error when a field has the wrong size or is not finite.
  void validate() const;
};

// Reference frame produced by the generator for the same step.
struct ReferenceFrame {
  Eigen::VectorXd q_ref = Eigen::VectorXd::Zero(kDofCount);
  KeypointSet p_ref{};
};

struct RewardConfig {
  double tracking_scale = 0.7;     // exponent coefficient of both guidance terms
  bool squared_norm = false;       // ablation: exp(-k |e|^2) instead of exp(-k |e|)
  double dof_weight = 1.0;
  double keypos_weight = 1.0;
};

struct RewardTerm {
  std::string name;
  double raw = 0.0;
  double weight = 0.0;
  double weighted = 0.0;
};

struct RewardBreakdown {
  std::vector<RewardTerm> terms;
  double guidance = 0.0;
  double task = 0.0;
  double regularization = 0.0;
  double total = 0.0;

  // Throws Error when no term has that name.
  const RewardTerm& term(const std::string& name) const;
};

double r_dof(const Eigen::VectorXd& q, const Eigen::VectorXd& q_ref,
             const RewardConfig& config = {});
double r_keypos(const KeypointSet& p, const KeypointSet& p_ref, const RewardConfig& config = {});
double r_guidance(const ControlStateSample& state, const ReferenceFrame& reference,
                  const RewardConfig& config = {});

struct TaskRewards {
  double lin = 0.0;  // raw, unweighted
  double ang = 0.0;
};
TaskRewards task_rewards(const ControlStateSample& state, const VelocityCommand& c);

inline constexpr double kLinVelWeight = 3.0;
inline constexpr double kAngVelWeight = 2.5;

// Regularization terms in a fixed order, each with its raw value and weight.
std::vector<RewardTerm> regularization_rewards(const ControlStateSample& state);

RewardBreakdown total_reward(const ControlStateSample& state, const ReferenceFrame& reference,
                             const VelocityCommand& c, const RewardConfig& config = {});

// Fixed-width plain-text table of the breakdown.
std::string format_breakdown(const RewardBreakdown& b);

}  // namespace gmp
