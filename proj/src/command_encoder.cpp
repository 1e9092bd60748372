#include "gmp/command_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gmp/adam.hpp"
#include "gmp/error.hpp"

namespace gmp {
namespace {

constexpr int kD = RobotPose::kDim;
constexpr int kYawRow = RobotPose::kWBase + 2;

std::string to_text(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

// Overwrites the keypoint rows of each column with FK of its joint angles and
// records the Jacobians for the backward pass.
void reproject(Eigen::MatrixXd& m, const RobotModel& model, std::vector<Eigen::MatrixXd>* jac) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const Eigen::VectorXd q = m.col(j).segment(RobotPose::kQ, kDofCount);
    const KeypointSet p = keypoints_local(model, q);
    for (int k = 0; k < kKeypointCount; ++k) m.col(j).segment<3>(RobotPose::kPKey + 3 * k) = p[k];
    if (jac) jac->push_back(keypoints_local_jacobian(model, q));
  }
}

}  // namespace

Eigen::VectorXd command_features(const VelocityCommand& c, const RobotPose& m,
                                 const PoseStats& stats) {
  Eigen::VectorXd f(3 + kD);
  f.head<3>() = Eigen::Vector3d(c.vx, c.vy, c.yaw_rate).cwiseQuotient(kCommandScale);
  f.tail(kD) = stats.standardize(m.flatten());
  return f;
}

CommandEncoder::CommandEncoder(std::vector<int> hidden, int latent_dim, PoseStats stats)
    : stats_(std::move(stats)) {
  if (hidden.empty()) throw Error("command encoder needs at least one hidden layer");
  if (latent_dim <= 0) throw Error("command encoder latent size must be positive");
  if (stats_.mean.size() != kD || stats_.std.size() != kD) {
    throw DimensionError("command encoder pose statistics must have 76 entries");
  }
  std::vector<int> sizes{3 + kD};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(latent_dim);
  net_ = Mlp(sizes, Activation::kElu);
}

void CommandEncoder::init(std::mt19937_64& rng) {
  net_.init(rng);
  const int last = net_.layer_count() - 1;
  net_.weight(last) *= 0.1;
  net_.bias(last).setZero();
}

Eigen::VectorXd CommandEncoder::encode(const VelocityCommand& c, const RobotPose& m) const {
  return net_.forward(command_features(c, m, stats_));
}

Eigen::MatrixXd CommandEncoder::encode_batch(const Eigen::MatrixXd& features,
                                             MlpCache* cache) const {
  if (features.rows() != 3 + kD) {
    throw DimensionError("command encoder input has " + std::to_string(features.rows()) +
                         " rows, expected 79");
  }
  return net_.forward_batch(features, cache);
}

void CommandEncoder::save(Checkpoint& ckpt) const {
  put_mlp(ckpt, "psi", net_);
  ckpt.put("psi_stats.mean", stats_.mean);
  ckpt.put("psi_stats.std", stats_.std);
}

CommandEncoder CommandEncoder::load(const Checkpoint& ckpt) {
  CommandEncoder e;
  e.net_ = get_mlp(ckpt, "psi");
  e.stats_.mean = ckpt.vector("psi_stats.mean");
  e.stats_.std = ckpt.vector("psi_stats.std");
  if (e.net_.input_dim() != 3 + kD || e.stats_.mean.size() != kD || e.stats_.std.size() != kD) {
    throw Error("checkpoint does not hold a command encoder");
  }
  return e;
}

void CommandTrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error("invalid command training config: " + what); };
  if (hidden.empty()) fail("no hidden layers");
  for (int h : hidden) {
    if (h <= 0) fail("hidden sizes must be positive");
  }
  if (horizon < 1) fail("horizon must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(latent_reg >= 0.0)) fail("latent_reg must be >= 0");
}

VelocityCommand sample_command(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VelocityCommand c;
  c.vx = kCommandVxMin + (kCommandVxMax - kCommandVxMin) * u(rng);
  c.vy = kCommandVyMax * (2.0 * u(rng) - 1.0);
  c.yaw_rate = kCommandYawMax * (2.0 * u(rng) - 1.0);
  return c;
}

double velocity_error(const RobotPose& m, const VelocityCommand& c) {
  const double ex = m.v_base.x() - c.vx, ey = m.v_base.y() - c.vy, ew = m.w_base.z() - c.yaw_rate;
  return ex * ex + ey * ey + ew * ew;
}

CommandLoss command_rollout_loss(const CommandEncoder& encoder, const MotionCvae& cvae,
                                 const Eigen::MatrixXd& starts, const Eigen::MatrixXd& commands,
                                 int horizon, double latent_reg, const RobotModel& model,
                                 Eigen::VectorXd* grad) {
  const Eigen::Index b = starts.cols();
  if (starts.rows() != kD || commands.rows() != 3 || commands.cols() != b || b == 0) {
    throw DimensionError("command rollout: starts must be 76 x B and commands 3 x B");
  }
  if (encoder.latent_dim() != cvae.latent_dim()) {
    throw DimensionError("command encoder and motion prior latent sizes differ");
  }
  const PoseStats& st = encoder.stats();
  const Eigen::MatrixXd scaled = commands.array().colwise() / kCommandScale.array();
  const double norm = 1.0 / (static_cast<double>(horizon) * static_cast<double>(b));

  std::vector<Eigen::MatrixXd> poses{starts}, latents;
  std::vector<MlpCache> psi_cache(horizon), dec_cache(horizon);
  std::vector<std::vector<Eigen::MatrixXd>> jac(horizon);
  CommandLoss out;
  for (int t = 0; t < horizon; ++t) {
    Eigen::MatrixXd in(3 + kD, b);
    in.topRows(3) = scaled;
    in.bottomRows(kD) = st.standardize(poses[t]);
    latents.push_back(encoder.encode_batch(in, grad ? &psi_cache[t] : nullptr));
    Eigen::MatrixXd next = cvae.decode_batch(latents[t], poses[t], grad ? &dec_cache[t] : nullptr);
    reproject(next, model, grad ? &jac[t] : nullptr);
    for (Eigen::Index j = 0; j < b; ++j) {
      const double ex = next(0, j) - commands(0, j), ey = next(1, j) - commands(1, j),
                   ew = next(kYawRow, j) - commands(2, j);
      out.velocity_error += ex * ex + ey * ey + ew * ew;
    }
    out.latent_norm += latents[t].colwise().norm().sum();
    out.total += latent_reg * latents[t].squaredNorm();
    poses.push_back(std::move(next));
  }
  out.velocity_error *= norm;
  out.latent_norm *= norm;
  out.total = out.total * norm + out.velocity_error;
  if (!grad) return out;

  const Eigen::ArrayXd inv_std = st.std.array().inverse();
  const Eigen::ArrayXd cvae_inv_std = cvae.stats().std.array().inverse();
  const Eigen::ArrayXd dstd = cvae.stats().delta_std.array();
  const int zd = cvae.latent_dim();
  Eigen::MatrixXd g_next = Eigen::MatrixXd::Zero(kD, b);  // d loss / d poses[t + 1]
  for (int t = horizon - 1; t >= 0; --t) {
    const Eigen::MatrixXd& m = poses[t + 1];
    g_next.row(0) += 2.0 * norm * (m.row(0) - commands.row(0));
    g_next.row(1) += 2.0 * norm * (m.row(1) - commands.row(1));
    g_next.row(kYawRow) += 2.0 * norm * (m.row(kYawRow) - commands.row(2));

    // FK re-projection: keypoint rows come from q, not from the decoder.
    Eigen::MatrixXd g_raw = g_next;
    g_raw.middleRows(RobotPose::kPKey, 3 * kKeypointCount).setZero();
    for (Eigen::Index j = 0; j < b; ++j) {
      g_raw.col(j).segment(RobotPose::kQ, kDofCount) +=
          jac[t][j].transpose() * g_next.col(j).segment(RobotPose::kPKey, 3 * kKeypointCount);
    }

    // next = cur + delta_mean + delta_std * decoder([z; standardize(cur)])
    const Eigen::MatrixXd g_out = g_raw.array().colwise() * dstd;
    const Eigen::MatrixXd g_dec_in = cvae.decoder().backward(dec_cache[t], g_out, nullptr);
    const Eigen::MatrixXd g_z = g_dec_in.topRows(zd) + (2.0 * latent_reg * norm) * latents[t];
    Eigen::MatrixXd g_cur = g_raw;
    g_cur += (g_dec_in.bottomRows(kD).array().colwise() * cvae_inv_std).matrix();

    const Eigen::MatrixXd g_psi_in = encoder.net().backward(psi_cache[t], g_z, grad);
    g_cur += (g_psi_in.bottomRows(kD).array().colwise() * inv_std).matrix();
    g_next = std::move(g_cur);
  }
  return out;
}

std::string decoder_digest(const MotionCvae& cvae) {
  Checkpoint c;
  put_mlp(c, "decoder", cvae.decoder());
  return parameter_digest(c, "decoder");
}

CommandTrainResult train_command_encoder(const MotionCvae& cvae,
                                         const std::vector<PoseSequence>& sequences,
                                         const CommandTrainConfig& config, std::uint64_t seed,
                                         const RobotModel& model,
                                         const CommandProgress& progress) {
  config.validate();
  std::vector<Eigen::VectorXd> pool;
  for (const auto& s : sequences) {
    for (const auto& p : s) pool.push_back(p.flatten());
  }
  if (pool.empty()) throw Error("train_command_encoder: no start poses");

  CommandTrainResult result;
  result.seed = seed;
  result.decoder_digest = decoder_digest(cvae);
  std::mt19937_64 rng(seed);
  CommandEncoder enc(config.hidden, cvae.latent_dim(), cvae.stats());
  enc.init(rng);
  Adam opt(enc.net().param_count(), AdamConfig{config.lr});
  Eigen::VectorXd grad(enc.net().param_count());
  std::vector<size_t> order(pool.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    CommandEpochStats st;
    st.epoch = epoch + 1;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const Eigen::Index n =
          static_cast<Eigen::Index>(std::min<size_t>(config.batch_size, order.size() - start));
      Eigen::MatrixXd starts(kD, n), commands(3, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        starts.col(j) = pool[order[start + j]];
        const VelocityCommand c = sample_command(rng);
        commands.col(j) << c.vx, c.vy, c.yaw_rate;
      }
      grad.setZero();
      const CommandLoss l = command_rollout_loss(enc, cvae, starts, commands, config.horizon,
                                                 config.latent_reg, model, &grad);
      if (!std::isfinite(l.total) || !grad.allFinite()) {
        throw Error("train_command_encoder: diverged at epoch " + std::to_string(epoch + 1));
      }
      opt.step(enc.net().params(), grad);
      st.loss += l.total;
      st.velocity_error += l.velocity_error;
      st.latent_norm += l.latent_norm;
      ++batches;
    }
    st.loss /= batches;
    st.velocity_error /= batches;
    st.latent_norm /= batches;
    result.curve.push_back(st);
    if (progress) progress(st);
  }
  if (decoder_digest(cvae) != result.decoder_digest) {
    throw Error("train_command_encoder: decoder parameters changed during training");
  }
  result.encoder = std::move(enc);
  return result;
}

Checkpoint command_checkpoint(const CommandTrainResult& result, const CommandTrainConfig& config) {
  Checkpoint ckpt;
  result.encoder.save(ckpt);
  ckpt.metadata["kind"] = "cmd";
  ckpt.metadata["seed"] = std::to_string(result.seed);
  ckpt.metadata["epoch"] = std::to_string(result.curve.size());
  ckpt.metadata["horizon"] = std::to_string(config.horizon);
  ckpt.metadata["lr"] = to_text(config.lr);
  ckpt.metadata["latent_reg"] = to_text(config.latent_reg);
  ckpt.metadata["decoder_digest"] = result.decoder_digest;
  if (!result.curve.empty()) {
    ckpt.metadata["loss"] = to_text(result.curve.back().loss);
    Eigen::MatrixXd curve(static_cast<Eigen::Index>(result.curve.size()), 4);
    for (size_t i = 0; i < result.curve.size(); ++i) {
      const auto& c = result.curve[i];
      curve.row(static_cast<Eigen::Index>(i)) << c.epoch, c.loss, c.velocity_error, c.latent_norm;
    }
    ckpt.put("curve", curve);
  }
  return ckpt;
}

}  // namespace gmp
