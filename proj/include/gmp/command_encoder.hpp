#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gmp/checkpoint.hpp"
#include "gmp/command.hpp"
#include "gmp/humanoid_model.hpp"
#include "gmp/mlp.hpp"
#include "gmp/motion_cvae.hpp"

namespace gmp {

// Commands enter the network divided by these so all three channels span
// roughly [-1, 1].
inline const Eigen::Vector3d kCommandScale(kCommandVxMax, kCommandVyMax, kCommandYawMax);

// Network input: [c / kCommandScale; z-scored pose].
Eigen::VectorXd command_features(const VelocityCommand& c, const RobotPose& m,
                                 const PoseStats& stats);

class CommandEncoder {
 public:
  CommandEncoder() = default;
  CommandEncoder(std::vector<int> hidden, int latent_dim, PoseStats stats);

  // Uniform init, last layer shrunk by 10 so the first latents stay near 0.
  void init(std::mt19937_64& rng);

  int latent_dim() const { return net_.output_dim(); }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  const PoseStats& stats() const { return stats_; }

  Eigen::VectorXd encode(const VelocityCommand& c, const RobotPose& m) const;
  // Columns of `features` are command_features() vectors.
  Eigen::MatrixXd encode_batch(const Eigen::MatrixXd& features, MlpCache* cache = nullptr) const;

  void save(Checkpoint& ckpt) const;
  static CommandEncoder load(const Checkpoint& ckpt);

 private:
  Mlp net_;
  PoseStats stats_;
};

struct CommandTrainConfig {
  std::vector<int> hidden{256, 256, 256};
  int horizon = 25;
  int epochs = 20;           // one epoch = one pass over the start poses
  int batch_size = 32;
  double lr = 1e-4;
  double latent_reg = 0.01;  // weight of ||z||^2

  void validate() const;
};

struct CommandEpochStats {
  int epoch = 0;
  double loss = 0.0;
  double velocity_error = 0.0;  // mean squared tracking error per frame
  double latent_norm = 0.0;     // mean ||z||
};

struct CommandTrainResult {
  CommandEncoder encoder;
  std::vector<CommandEpochStats> curve;
  std::string decoder_digest;
  std::uint64_t seed = 0;
};

using CommandProgress = std::function<void(const CommandEpochStats&)>;

// Uniform over the admissible command box.
VelocityCommand sample_command(std::mt19937_64& rng);

// Squared tracking error of one pose against a command: planar base velocity
// plus yaw rate.
double velocity_error(const RobotPose& m, const VelocityCommand& c);

// Loss of one batch of H-step rollouts from `starts` (columns) under
// `commands` (3 x B), averaged over steps and batch. Gradient with respect to
// the encoder parameters is added into `grad` when non-null. The decoder is
// only read.
struct CommandLoss {
  double total = 0.0;
  double velocity_error = 0.0;
  double latent_norm = 0.0;
};
CommandLoss command_rollout_loss(const CommandEncoder& encoder, const MotionCvae& cvae,
                                 const Eigen::MatrixXd& starts, const Eigen::MatrixXd& commands,
                                 int horizon, double latent_reg, const RobotModel& model,
                                 Eigen::VectorXd* grad);

// Trains the encoder against the frozen decoder of `cvae`. Start poses are
// every frame of `sequences`. Throws if the decoder parameters change or the
// loss becomes non-finite.
CommandTrainResult train_command_encoder(const MotionCvae& cvae,
                                         const std::vector<PoseSequence>& sequences,
                                         const CommandTrainConfig& config, std::uint64_t seed,
                                         const RobotModel& model = default_robot_model(),
                                         const CommandProgress& progress = {});

Checkpoint command_checkpoint(const CommandTrainResult& result, const CommandTrainConfig& config);

// SHA-256 over the decoder parameters of a motion prior.
std::string decoder_digest(const MotionCvae& cvae);

}  // namespace gmp
