#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gmp {

enum class Activation { kNone, kElu, kRelu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Intermediates of a batched forward pass, one column per sample.
struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;  // input of each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
};

// Fully connected network. All weights and biases live in one flat vector:
// for each layer the weight matrix (out x in, column-major) followed by the
// bias, so optimizers can update the parameters in place.
class Mlp {
 public:
  Mlp() = default;
  // sizes = {in, hidden..., out}; hidden layers use `hidden`, the last one
  // uses `output`.
  Mlp(std::vector<int> sizes, Activation hidden, Activation output = Activation::kNone);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  void init(std::mt19937_64& rng);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  const std::vector<Activation>& activations() const { return acts_; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::Index param_count() const { return params_.size(); }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  // Columns are samples. Throws on dimension mismatch or non-finite output.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, MlpCache* cache = nullptr) const;

  // Reverse pass for the batch recorded in `cache`. Parameter gradients are
  // added into `param_grad` (sized like params()) when non-null; returns the
  // gradient with respect to the input.
  Eigen::MatrixXd backward(const MlpCache& cache, const Eigen::MatrixXd& upstream,
                           Eigen::VectorXd* param_grad) const;

 private:
  Eigen::Index weight_offset(int layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(int layer) const {
    return offsets_[layer] + static_cast<Eigen::Index>(sizes_[layer + 1]) * sizes_[layer];
  }

  std::vector<int> sizes_;
  std::vector<Activation> acts_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd params_;
};

// Diagonal Gaussian over the latent space.
struct GaussianParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
};

// z = mu + exp(logvar / 2) * noise, elementwise.
Eigen::VectorXd reparameterize(const GaussianParams& params, const Eigen::VectorXd& noise);

}  // namespace gmp
