#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "gmp/humanoid_model.hpp"

namespace gmp::test {

// Uniform joint angles inside the limits, shrunk by `margin` on each side.
inline Eigen::VectorXd random_q(const RobotModel& model, std::mt19937_64& rng,
                                double margin = 0.0) {
  Eigen::VectorXd q(model.dof_count());
  for (int i = 0; i < model.dof_count(); ++i) {
    const auto& j = model.joint(i);
    std::uniform_real_distribution<double> u(j.lower + margin, j.upper - margin);
    q[i] = u(rng);
  }
  return q;
}

inline BasePose random_base(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  BasePose b;
  b.position = {n(rng), n(rng), n(rng)};
  b.orientation = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized();
  return b;
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

// Relative error with an absolute floor, as used by the gradient checks.
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace gmp::test
