#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmp/humanoid_model.hpp"
#include "gmp/motion_clip.hpp"

namespace gmp {

enum class FeatureKind { kJointAngle, kKeypoint };

// Rows are samples.
struct FeatureSet {
  FeatureKind kind = FeatureKind::kJointAngle;
  Eigen::MatrixXd samples;
};

inline constexpr double kFidEpsilon = 1e-6;

// Frechet distance between two Gaussians given by their parameters.
double frechet_distance(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a,
                        const Eigen::VectorXd& mu_b, const Eigen::MatrixXd& cov_b);

// Fits a Gaussian to each set (unbiased covariance plus epsilon * I) and
// returns their Frechet distance.
double fid(const FeatureSet& a, const FeatureSet& b, double epsilon = kFidEpsilon);

// Rows of each matrix are the sequence elements.
double dtw(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct VelocitySample {
  Eigen::Vector2d v_xy = Eigen::Vector2d::Zero();
  Eigen::Vector2d c_xy = Eigen::Vector2d::Zero();
};
using Episode = std::vector<VelocitySample>;

double melv(const std::vector<Episode>& episodes);

struct MetricReport {
  double jfid = 0.0;
  double kfid = 0.0;
  double jdtw = 0.0;
  double kdtw = 0.0;
  double melv = 0.0;
  bool has_melv = false;
};

// Per-frame joint angles (N x 21) or base-frame keypoints (N x 24).
FeatureSet clip_features(const MotionClip& clip, const RobotModel& model, FeatureKind kind);

// robot_clips[i] is compared against reference_clips[i] for DTW. MELV is
// skipped when `episodes` is empty.
MetricReport evaluate(const std::vector<MotionClip>& robot_clips,
                      const std::vector<MotionClip>& reference_clips,
                      const std::vector<Episode>& episodes,
                      const RobotModel& model = default_robot_model());

std::string format_report(const MetricReport& r);

}  // namespace gmp
