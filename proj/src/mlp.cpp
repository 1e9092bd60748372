#include "gmp/mlp.hpp"

#include <cmath>

#include "gmp/error.hpp"

namespace gmp {
namespace {

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& x) {
  switch (a) {
    case Activation::kNone:
      return x;
    case Activation::kRelu:
      return x.cwiseMax(0.0);
    case Activation::kElu:
      return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  }
  return x;
}

// Multiplies `g` by the activation derivative at pre-activation `x`.
void apply_derivative(Activation a, const Eigen::MatrixXd& x, Eigen::MatrixXd& g) {
  switch (a) {
    case Activation::kNone:
      return;
    case Activation::kRelu:
      g.array() *= (x.array() > 0.0).cast<double>();
      return;
    case Activation::kElu:
      g.array() *= x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); }).array();
      return;
  }
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kNone:
      return "none";
    case Activation::kElu:
      return "elu";
    case Activation::kRelu:
      return "relu";
  }
  return "none";
}

Activation activation_from_name(const std::string& name) {
  if (name == "none") return Activation::kNone;
  if (name == "elu") return Activation::kElu;
  if (name == "relu") return Activation::kRelu;
  throw Error("unknown activation '" + name + "'");
}

Mlp::Mlp(std::vector<int> sizes, Activation hidden, Activation output)
    : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw Error("mlp needs at least an input and an output size");
  for (int s : sizes_) {
    if (s <= 0) throw DimensionError("mlp layer sizes must be positive");
  }
  Eigen::Index total = 0;
  for (int l = 0; l < layer_count(); ++l) {
    acts_.push_back(l + 1 == layer_count() ? output : hidden);
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(total);
}

void Mlp::init(std::mt19937_64& rng) {
  for (int l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = weight(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    auto b = bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = u(rng);
  }
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(int l) {
  return {params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]};
}
Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int l) const {
  return {params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(int l) {
  return {params_.data() + bias_offset(l), sizes_[l + 1]};
}
Eigen::Map<const Eigen::VectorXd> Mlp::bias(int l) const {
  return {params_.data() + bias_offset(l), sizes_[l + 1]};
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  return forward_batch(x, nullptr).col(0);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x, MlpCache* cache) const {
  if (sizes_.empty()) throw Error("mlp is not configured");
  if (x.rows() != input_dim()) {
    throw DimensionError("mlp input has dimension " + std::to_string(x.rows()) +
                         ", expected " + std::to_string(input_dim()));
  }
  if (cache) {
    cache->inputs.resize(layer_count());
    cache->pre.resize(layer_count());
  }
  Eigen::MatrixXd h = x;
  for (int l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (cache) {
      cache->inputs[l] = std::move(h);
      cache->pre[l] = z;
    }
    h = activate(acts_[l], z);
  }
  if (!h.allFinite()) throw Error("mlp produced a non-finite output");
  return h;
}

Eigen::MatrixXd Mlp::backward(const MlpCache& cache, const Eigen::MatrixXd& upstream,
                              Eigen::VectorXd* param_grad) const {
  if (static_cast<int>(cache.pre.size()) != layer_count()) {
    throw DimensionError("mlp backward: cache does not match the network");
  }
  const Eigen::Index batch = cache.pre.back().cols();
  if (upstream.rows() != output_dim() || upstream.cols() != batch) {
    throw DimensionError("mlp backward: upstream gradient is " +
                         std::to_string(upstream.rows()) + "x" + std::to_string(upstream.cols()) +
                         ", expected " + std::to_string(output_dim()) + "x" +
                         std::to_string(batch));
  }
  if (param_grad && param_grad->size() != params_.size()) {
    throw DimensionError("mlp backward: gradient buffer has the wrong size");
  }
  Eigen::MatrixXd g = upstream;
  for (int l = layer_count() - 1; l >= 0; --l) {
    apply_derivative(acts_[l], cache.pre[l], g);
    if (param_grad) {
      Eigen::Map<Eigen::MatrixXd> gw(param_grad->data() + weight_offset(l), sizes_[l + 1],
                                     sizes_[l]);
      Eigen::Map<Eigen::VectorXd> gb(param_grad->data() + bias_offset(l), sizes_[l + 1]);
      gw.noalias() += g * cache.inputs[l].transpose();
      gb += g.rowwise().sum();
    }
    g = weight(l).transpose() * g;
  }
  return g;
}

Eigen::VectorXd reparameterize(const GaussianParams& params, const Eigen::VectorXd& noise) {
  if (params.mu.size() != params.logvar.size() || params.mu.size() != noise.size()) {
    throw DimensionError("reparameterize: mu, logvar and noise sizes differ");
  }
  return params.mu.array() + (0.5 * params.logvar.array()).exp() * noise.array();
}

}  // namespace gmp
