#include "gmp/adam.hpp"

#include <cmath>
#include <string>

#include "gmp/error.hpp"

namespace gmp {

Adam::Adam(Eigen::Index size, AdamConfig config)
    : config_(config), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw DimensionError("adam: parameter size " + std::to_string(params.size()) +
                         ", gradient size " + std::to_string(grad.size()) +
                         ", expected " + std::to_string(m_.size()));
  }
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw Error("adam: non-finite gradient at index " + std::to_string(i) +
                  ", step rejected");
    }
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * grad;
  v_ = b2 * v_ + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  params.array() -= config_.lr * (m_.array() / c1) /
                    ((v_.array() / c2).sqrt() + config_.eps);
}

}  // namespace gmp
