#pragma once

#include <Eigen/Dense>

namespace gmp {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a flat parameter vector.
class Adam {
 public:
  explicit Adam(Eigen::Index size, AdamConfig config = {});

  // Throws gmp::Error and leaves everything untouched when `grad` has a
  // non-finite entry.
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad);

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  long long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long long steps_ = 0;
};

}  // namespace gmp
