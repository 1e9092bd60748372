#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gmp/checkpoint.hpp"
#include "gmp/mlp.hpp"
#include "gmp/motion_dataset.hpp"

namespace gmp {

inline constexpr int kLatentDim = 32;

// Per-dimension statistics of the training corpus. Poses are z-scored with
// mean/std before entering the networks; the decoder predicts the frame to
// frame change in units of delta_std around delta_mean.
struct PoseStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  Eigen::VectorXd delta_mean;
  Eigen::VectorXd delta_std;

  // Statistics over all frames and all consecutive pairs. Std floors at 1e-6.
  static PoseStats fit(const std::vector<PoseSequence>& sequences);
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& poses) const;  // columns are poses
};

struct CvaeConfig {
  std::vector<int> hidden{256, 256};
  int latent_dim = kLatentDim;
  double rec_weight = 1.0;
  double kl_weight = 1.0;
  double lr_start = 1e-5;
  double lr_end = 1e-7;
  int epochs = 240;
  int batch_size = 32;
  double ss_max = 0.5;          // scheduled-sampling probability after the ramp
  double ss_ramp_fraction = 0.5;
  double validation_fraction = 0.2;

  void validate() const;
};

// Exponential interpolation lr_start -> lr_end over the epochs.
double cvae_learning_rate(const CvaeConfig& config, int epoch);
// Linear ramp 0 -> ss_max over the first ss_ramp_fraction of training.
double scheduled_sampling_probability(const CvaeConfig& config, int epoch);

// Mean over dimensions (rows) and batch (columns) of the squared error.
double rec_loss(const Eigen::MatrixXd& m_hat, const Eigen::MatrixXd& m_true);
// KL(N(mu, exp(logvar)) || N(0, I)) summed over latent dimensions, averaged
// over the batch columns.
double kl_loss(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar);
double kl_loss(const GaussianParams& params);

struct CvaeLoss {
  double rec = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

class MotionCvae {
 public:
  MotionCvae() = default;
  MotionCvae(const CvaeConfig& config, PoseStats stats);

  void init(std::mt19937_64& rng);

  int latent_dim() const { return latent_dim_; }
  const PoseStats& stats() const { return stats_; }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }
  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }

  GaussianParams encode(const Eigen::VectorXd& m_next, const Eigen::VectorXd& m_cur) const;
  Eigen::VectorXd decode(const Eigen::VectorXd& z, const Eigen::VectorXd& m_cur) const;

  // Batched versions, one pose per column. decode_batch optionally records
  // the decoder cache for a later backward pass.
  void encode_batch(const Eigen::MatrixXd& m_next, const Eigen::MatrixXd& m_cur,
                    Eigen::MatrixXd& mu, Eigen::MatrixXd& logvar,
                    MlpCache* cache = nullptr) const;
  Eigen::MatrixXd decode_batch(const Eigen::MatrixXd& z, const Eigen::MatrixXd& m_cur,
                               MlpCache* cache = nullptr) const;

  // rec_weight * rec + kl_weight * kl for one batch with the given
  // reparameterization noise. rec is measured on z-scored poses. Gradients
  // are added into the buffers when non-null.
  CvaeLoss loss(const Eigen::MatrixXd& m_next, const Eigen::MatrixXd& m_cur,
                const Eigen::MatrixXd& noise, double rec_weight, double kl_weight,
                Eigen::VectorXd* encoder_grad, Eigen::VectorXd* decoder_grad) const;

  void save(Checkpoint& ckpt) const;
  static MotionCvae load(const Checkpoint& ckpt);

 private:
  void check_pose_rows(const Eigen::MatrixXd& m, const char* what) const;

  int latent_dim_ = kLatentDim;
  PoseStats stats_;
  Mlp encoder_;
  Mlp decoder_;
};

struct CvaeEpochStats {
  int epoch = 0;
  double lr = 0.0;
  double ss_probability = 0.0;
  double train_rec = 0.0;
  double train_kl = 0.0;
  double val_rec = 0.0;
};

struct CvaeTrainResult {
  MotionCvae model;  // parameters of the best validation epoch
  std::vector<CvaeEpochStats> curve;
  int best_epoch = 0;
  std::uint64_t seed = 0;
};

using CvaeProgress = std::function<void(const CvaeEpochStats&)>;

// Time split used for model selection: the trailing `fraction` of every
// sequence (at least 2 frames) is held out. Sequences too short to split stay
// in the training part.
void split_sequences(const std::vector<PoseSequence>& sequences, double fraction,
                     std::vector<PoseSequence>& train, std::vector<PoseSequence>& held_out);

// Model selection uses split_sequences(config.validation_fraction).
CvaeTrainResult train_cvae(const std::vector<PoseSequence>& sequences, const CvaeConfig& config,
                           std::uint64_t seed, const CvaeProgress& progress = {});

// Checkpoint with the model plus training metadata.
Checkpoint cvae_checkpoint(const CvaeTrainResult& result, const CvaeConfig& config);

// One-step prediction error with z = mu on every consecutive pair, divided by
// the per-dimension variance of the target frames.
Eigen::VectorXd one_step_error_ratio(const MotionCvae& model,
                                     const std::vector<PoseSequence>& sequences);

// Column matrix of flattened poses.
Eigen::MatrixXd pose_matrix(const PoseSequence& poses);

}  // namespace gmp
