#include "gmp/motion_cvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gmp/adam.hpp"
#include "gmp/error.hpp"

namespace gmp {
namespace {

constexpr int kD = RobotPose::kDim;

Eigen::VectorXd floor_std(Eigen::VectorXd s) { return s.cwiseMax(1e-6); }

std::string to_text(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

struct PairRef {
  int seq;
  int t;  // pair (t, t+1)
};

}  // namespace

Eigen::MatrixXd pose_matrix(const PoseSequence& poses) {
  Eigen::MatrixXd m(kD, static_cast<Eigen::Index>(poses.size()));
  for (size_t i = 0; i < poses.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = poses[i].flatten();
  return m;
}

PoseStats PoseStats::fit(const std::vector<PoseSequence>& sequences) {
  Eigen::Index frames = 0, pairs = 0;
  for (const auto& s : sequences) {
    frames += static_cast<Eigen::Index>(s.size());
    if (s.size() > 1) pairs += static_cast<Eigen::Index>(s.size()) - 1;
  }
  if (frames < 2 || pairs < 2) throw Error("pose statistics need at least two consecutive pairs");
  Eigen::MatrixXd all(kD, frames), deltas(kD, pairs);
  Eigen::Index f = 0, p = 0;
  for (const auto& s : sequences) {
    const Eigen::MatrixXd m = pose_matrix(s);
    all.middleCols(f, m.cols()) = m;
    f += m.cols();
    if (m.cols() > 1) {
      deltas.middleCols(p, m.cols() - 1) = m.rightCols(m.cols() - 1) - m.leftCols(m.cols() - 1);
      p += m.cols() - 1;
    }
  }
  auto moments = [](const Eigen::MatrixXd& x, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
    mean = x.rowwise().mean();
    const Eigen::MatrixXd c = x.colwise() - mean;
    sd = floor_std((c.array().square().rowwise().sum() / static_cast<double>(x.cols() - 1)).sqrt());
  };
  PoseStats st;
  moments(all, st.mean, st.std);
  moments(deltas, st.delta_mean, st.delta_std);
  return st;
}

Eigen::MatrixXd PoseStats::standardize(const Eigen::MatrixXd& poses) const {
  return (poses.colwise() - mean).array().colwise() / std.array();
}

void CvaeConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error("invalid cvae config: " + what); };
  if (hidden.empty()) fail("no hidden layers");
  for (int h : hidden) {
    if (h <= 0) fail("hidden sizes must be positive");
  }
  if (latent_dim <= 0) fail("latent_dim must be positive");
  if (!(rec_weight > 0.0) || !(kl_weight >= 0.0)) fail("loss weights");
  if (!(lr_start > 0.0) || !(lr_end > 0.0) || lr_end > lr_start) fail("lr schedule");
  if (epochs < 1) fail("epochs");
  if (batch_size < 1) fail("batch_size");
  if (ss_max < 0.0 || ss_max > 1.0) fail("ss_max must be in [0, 1]");
  if (!(ss_ramp_fraction > 0.0) || ss_ramp_fraction > 1.0) fail("ss_ramp_fraction");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) fail("validation_fraction");
}

double cvae_learning_rate(const CvaeConfig& config, int epoch) {
  if (config.epochs <= 1) return config.lr_start;
  const double f = static_cast<double>(std::clamp(epoch, 0, config.epochs - 1)) / (config.epochs - 1);
  return config.lr_start * std::pow(config.lr_end / config.lr_start, f);
}

double scheduled_sampling_probability(const CvaeConfig& config, int epoch) {
  const double ramp = config.ss_ramp_fraction * config.epochs;
  const double f = std::clamp(static_cast<double>(epoch) / ramp, 0.0, 1.0);
  return config.ss_max * f;
}

double rec_loss(const Eigen::MatrixXd& m_hat, const Eigen::MatrixXd& m_true) {
  if (m_hat.rows() != m_true.rows() || m_hat.cols() != m_true.cols()) {
    throw DimensionError("rec_loss: shapes " + std::to_string(m_hat.rows()) + "x" +
                         std::to_string(m_hat.cols()) + " and " + std::to_string(m_true.rows()) +
                         "x" + std::to_string(m_true.cols()) + " differ");
  }
  if (m_hat.size() == 0) throw DimensionError("rec_loss: empty batch");
  return (m_hat - m_true).squaredNorm() / static_cast<double>(m_hat.size());
}

double kl_loss(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw DimensionError("kl_loss: mu and logvar shapes differ");
  }
  if (mu.cols() == 0) throw DimensionError("kl_loss: empty batch");
  const double s =
      (1.0 + logvar.array() - mu.array().square() - logvar.array().exp()).sum();
  return -0.5 * s / static_cast<double>(mu.cols());
}

double kl_loss(const GaussianParams& params) { return kl_loss(params.mu, params.logvar); }

MotionCvae::MotionCvae(const CvaeConfig& config, PoseStats stats)
    : latent_dim_(config.latent_dim), stats_(std::move(stats)) {
  config.validate();
  for (const auto* v : {&stats_.mean, &stats_.std, &stats_.delta_mean, &stats_.delta_std}) {
    if (v->size() != kD) throw DimensionError("pose statistics must have 76 entries");
  }
  std::vector<int> enc{2 * kD};
  std::vector<int> dec{latent_dim_ + kD};
  for (int h : config.hidden) {
    enc.push_back(h);
    dec.push_back(h);
  }
  enc.push_back(2 * latent_dim_);
  dec.push_back(kD);
  encoder_ = Mlp(enc, Activation::kElu);
  decoder_ = Mlp(dec, Activation::kElu);
}

void MotionCvae::init(std::mt19937_64& rng) {
  encoder_.init(rng);
  decoder_.init(rng);
  // Start from "next frame = current frame + mean change".
  const int last = decoder_.layer_count() - 1;
  decoder_.weight(last).setZero();
  decoder_.bias(last).setZero();
}

void MotionCvae::check_pose_rows(const Eigen::MatrixXd& m, const char* what) const {
  if (m.rows() != kD) {
    throw DimensionError(std::string(what) + " has " + std::to_string(m.rows()) +
                         " rows, expected 76");
  }
}

void MotionCvae::encode_batch(const Eigen::MatrixXd& m_next, const Eigen::MatrixXd& m_cur,
                              Eigen::MatrixXd& mu, Eigen::MatrixXd& logvar,
                              MlpCache* cache) const {
  check_pose_rows(m_next, "encode: next pose");
  check_pose_rows(m_cur, "encode: current pose");
  if (m_next.cols() != m_cur.cols()) throw DimensionError("encode: batch sizes differ");
  Eigen::MatrixXd in(2 * kD, m_cur.cols());
  in.topRows(kD) = stats_.standardize(m_next);
  in.bottomRows(kD) = stats_.standardize(m_cur);
  const Eigen::MatrixXd h = encoder_.forward_batch(in, cache);
  mu = h.topRows(latent_dim_);
  logvar = h.bottomRows(latent_dim_);
}

Eigen::MatrixXd MotionCvae::decode_batch(const Eigen::MatrixXd& z, const Eigen::MatrixXd& m_cur,
                                         MlpCache* cache) const {
  check_pose_rows(m_cur, "decode: current pose");
  if (z.rows() != latent_dim_) {
    throw DimensionError("decode: latent has " + std::to_string(z.rows()) + " entries, expected " +
                         std::to_string(latent_dim_));
  }
  if (z.cols() != m_cur.cols()) throw DimensionError("decode: batch sizes differ");
  Eigen::MatrixXd in(latent_dim_ + kD, m_cur.cols());
  in.topRows(latent_dim_) = z;
  in.bottomRows(kD) = stats_.standardize(m_cur);
  const Eigen::MatrixXd o = decoder_.forward_batch(in, cache);
  Eigen::MatrixXd out = (o.array().colwise() * stats_.delta_std.array()).matrix() + m_cur;
  out.colwise() += stats_.delta_mean;
  return out;
}

GaussianParams MotionCvae::encode(const Eigen::VectorXd& m_next, const Eigen::VectorXd& m_cur) const {
  GaussianParams p;
  Eigen::MatrixXd mu, lv;
  encode_batch(m_next, m_cur, mu, lv);
  p.mu = mu.col(0);
  p.logvar = lv.col(0);
  return p;
}

Eigen::VectorXd MotionCvae::decode(const Eigen::VectorXd& z, const Eigen::VectorXd& m_cur) const {
  return decode_batch(z, m_cur).col(0);
}

CvaeLoss MotionCvae::loss(const Eigen::MatrixXd& m_next, const Eigen::MatrixXd& m_cur,
                          const Eigen::MatrixXd& noise, double rec_weight, double kl_weight,
                          Eigen::VectorXd* encoder_grad, Eigen::VectorXd* decoder_grad) const {
  const Eigen::Index b = m_cur.cols();
  if (noise.rows() != latent_dim_ || noise.cols() != b) {
    throw DimensionError("cvae loss: noise must be latent_dim x batch");
  }
  MlpCache ecache, dcache;
  Eigen::MatrixXd mu, lv;
  encode_batch(m_next, m_cur, mu, lv, &ecache);
  const Eigen::MatrixXd sigma = (0.5 * lv.array()).exp().matrix();
  const Eigen::MatrixXd z = mu + sigma.cwiseProduct(noise);
  const Eigen::MatrixXd m_hat = decode_batch(z, m_cur, &dcache);

  const Eigen::MatrixXd err = (m_hat - m_next).array().colwise() / stats_.std.array();
  CvaeLoss out;
  out.rec = rec_loss(err, Eigen::MatrixXd::Zero(err.rows(), err.cols()));
  out.kl = kl_loss(mu, lv);
  out.total = rec_weight * out.rec + kl_weight * out.kl;
  if (!encoder_grad && !decoder_grad) return out;

  // d total / d decoder output
  const Eigen::ArrayXd scale = stats_.delta_std.array() / stats_.std.array();
  const Eigen::MatrixXd g_out =
      (err.array().colwise() * scale).matrix() * (2.0 * rec_weight / static_cast<double>(err.size()));
  const Eigen::MatrixXd g_in = decoder_.backward(dcache, g_out, decoder_grad);
  const Eigen::MatrixXd g_z = g_in.topRows(latent_dim_);

  const double inv_b = 1.0 / static_cast<double>(b);
  Eigen::MatrixXd g_h(2 * latent_dim_, b);
  g_h.topRows(latent_dim_) = g_z + kl_weight * inv_b * mu;
  g_h.bottomRows(latent_dim_) =
      (g_z.array() * 0.5 * sigma.array() * noise.array() -
       kl_weight * inv_b * 0.5 * (1.0 - lv.array().exp()))
          .matrix();
  encoder_.backward(ecache, g_h, encoder_grad);
  return out;
}

void MotionCvae::save(Checkpoint& ckpt) const {
  put_mlp(ckpt, "encoder", encoder_);
  put_mlp(ckpt, "decoder", decoder_);
  ckpt.put("stats.mean", stats_.mean);
  ckpt.put("stats.std", stats_.std);
  ckpt.put("stats.delta_mean", stats_.delta_mean);
  ckpt.put("stats.delta_std", stats_.delta_std);
  ckpt.metadata["cvae.latent_dim"] = std::to_string(latent_dim_);
}

MotionCvae MotionCvae::load(const Checkpoint& ckpt) {
  MotionCvae m;
  try {
    m.latent_dim_ = std::stoi(ckpt.meta("cvae.latent_dim"));
  } catch (const std::logic_error&) {
    throw Error("checkpoint has an invalid cvae.latent_dim");
  }
  m.encoder_ = get_mlp(ckpt, "encoder");
  m.decoder_ = get_mlp(ckpt, "decoder");
  m.stats_.mean = ckpt.vector("stats.mean");
  m.stats_.std = ckpt.vector("stats.std");
  m.stats_.delta_mean = ckpt.vector("stats.delta_mean");
  m.stats_.delta_std = ckpt.vector("stats.delta_std");
  if (m.encoder_.input_dim() != 2 * kD || m.encoder_.output_dim() != 2 * m.latent_dim_ ||
      m.decoder_.input_dim() != m.latent_dim_ + kD || m.decoder_.output_dim() != kD) {
    throw Error("checkpoint networks do not form a motion cvae");
  }
  for (const auto* v : {&m.stats_.mean, &m.stats_.std, &m.stats_.delta_mean, &m.stats_.delta_std}) {
    if (v->size() != kD) throw Error("checkpoint pose statistics must have 76 entries");
  }
  return m;
}

void split_sequences(const std::vector<PoseSequence>& sequences, double fraction,
                     std::vector<PoseSequence>& train, std::vector<PoseSequence>& held_out) {
  if (fraction < 0.0 || fraction >= 1.0) throw Error("split_sequences: fraction must be in [0, 1)");
  train.clear();
  held_out.clear();
  for (const auto& seq : sequences) {
    const long n = static_cast<long>(seq.size());
    const long n_val = std::lround(fraction * static_cast<double>(n));
    if (n_val < 2 || n - n_val < 2) {
      train.push_back(seq);
      continue;
    }
    train.emplace_back(seq.begin(), seq.end() - n_val);
    held_out.emplace_back(seq.end() - n_val, seq.end());
  }
}

CvaeTrainResult train_cvae(const std::vector<PoseSequence>& sequences, const CvaeConfig& config,
                           std::uint64_t seed, const CvaeProgress& progress) {
  config.validate();
  const int n_seq = static_cast<int>(sequences.size());
  if (n_seq == 0) throw Error("train_cvae: empty dataset");
  std::vector<PoseSequence> train_seqs, val_seqs;
  split_sequences(sequences, config.validation_fraction, train_seqs, val_seqs);

  std::vector<Eigen::MatrixXd> train_m, val_m;
  for (const auto& s : train_seqs) train_m.push_back(pose_matrix(s));
  for (const auto& s : val_seqs) val_m.push_back(pose_matrix(s));
  std::vector<PairRef> pairs;
  for (int s = 0; s < static_cast<int>(train_m.size()); ++s) {
    for (int t = 0; t + 1 < train_m[s].cols(); ++t) pairs.push_back({s, t});
  }
  if (pairs.size() < 2) throw Error("train_cvae: empty dataset");
  for (const auto& m : train_m) {
    if (!m.allFinite()) throw Error("train_cvae: dataset contains non-finite poses");
  }

  std::mt19937_64 rng(seed);
  MotionCvae model(config, PoseStats::fit(train_seqs));
  model.init(rng);
  Adam enc_opt(model.encoder().param_count()), dec_opt(model.decoder().param_count());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
    }
    return m;
  };

  // Validation pairs with z = mu, or the training pairs when nothing is held out.
  const auto& eval_m = val_m.empty() ? train_m : val_m;
  auto validation_rec = [&](const MotionCvae& m) {
    double sum = 0.0;
    Eigen::Index count = 0;
    for (const auto& seq : eval_m) {
      if (seq.cols() < 2) continue;
      const Eigen::MatrixXd cur = seq.leftCols(seq.cols() - 1), next = seq.rightCols(seq.cols() - 1);
      Eigen::MatrixXd mu, lv;
      m.encode_batch(next, cur, mu, lv);
      const Eigen::MatrixXd err =
          (m.decode_batch(mu, cur) - next).array().colwise() / m.stats().std.array();
      sum += err.squaredNorm();
      count += err.size();
    }
    return sum / static_cast<double>(count);
  };

  CvaeTrainResult result;
  result.seed = seed;
  result.model = model;
  double best = std::numeric_limits<double>::infinity();
  const int b = config.batch_size;
  Eigen::VectorXd enc_grad(model.encoder().param_count()), dec_grad(model.decoder().param_count());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    CvaeEpochStats st;
    st.epoch = epoch + 1;
    st.lr = cvae_learning_rate(config, epoch);
    st.ss_probability = scheduled_sampling_probability(config, epoch);
    enc_opt.set_lr(st.lr);
    dec_opt.set_lr(st.lr);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    double rec_sum = 0.0, kl_sum = 0.0;
    for (size_t start = 0; start < pairs.size(); start += b) {
      const Eigen::Index n = static_cast<Eigen::Index>(std::min<size_t>(b, pairs.size() - start));
      Eigen::MatrixXd cur(kD, n), next(kD, n);
      std::vector<Eigen::Index> swap;
      for (Eigen::Index j = 0; j < n; ++j) {
        const PairRef& p = pairs[start + j];
        cur.col(j) = train_m[p.seq].col(p.t);
        next.col(j) = train_m[p.seq].col(p.t + 1);
        const bool replace = unit(rng) < st.ss_probability;
        if (replace && p.t > 0) swap.push_back(j);
      }
      if (!swap.empty()) {
        // Feed the model's own prediction of frame t (from frame t-1) instead
        // of the recorded one.
        const Eigen::Index k = static_cast<Eigen::Index>(swap.size());
        Eigen::MatrixXd prev(kD, k), here(kD, k);
        for (Eigen::Index i = 0; i < k; ++i) {
          const PairRef& p = pairs[start + swap[i]];
          prev.col(i) = train_m[p.seq].col(p.t - 1);
          here.col(i) = train_m[p.seq].col(p.t);
        }
        Eigen::MatrixXd mu, lv;
        model.encode_batch(here, prev, mu, lv);
        const Eigen::MatrixXd z = mu + (0.5 * lv.array()).exp().matrix().cwiseProduct(gaussian(model.latent_dim(), k));
        const Eigen::MatrixXd pred = model.decode_batch(z, prev);
        for (Eigen::Index i = 0; i < k; ++i) cur.col(swap[i]) = pred.col(i);
      }
      enc_grad.setZero();
      dec_grad.setZero();
      const CvaeLoss l = model.loss(next, cur, gaussian(model.latent_dim(), n), config.rec_weight,
                                    config.kl_weight, &enc_grad, &dec_grad);
      if (!std::isfinite(l.total)) {
        throw Error("train_cvae: non-finite loss at epoch " + std::to_string(epoch + 1) +
                    " (rec " + to_text(l.rec) + ", kl " + to_text(l.kl) + ")");
      }
      enc_opt.step(model.encoder().params(), enc_grad);
      dec_opt.step(model.decoder().params(), dec_grad);
      rec_sum += l.rec * n;
      kl_sum += l.kl * n;
    }
    st.train_rec = rec_sum / static_cast<double>(pairs.size());
    st.train_kl = kl_sum / static_cast<double>(pairs.size());
    st.val_rec = validation_rec(model);
    if (!std::isfinite(st.val_rec)) {
      throw Error("train_cvae: non-finite validation loss at epoch " + std::to_string(epoch + 1));
    }
    if (st.val_rec < best) {
      best = st.val_rec;
      result.model = model;
      result.best_epoch = epoch + 1;
    }
    result.curve.push_back(st);
    if (progress) progress(st);
  }
  return result;
}

Checkpoint cvae_checkpoint(const CvaeTrainResult& result, const CvaeConfig& config) {
  Checkpoint ckpt;
  result.model.save(ckpt);
  ckpt.metadata["kind"] = "gmp";
  ckpt.metadata["seed"] = std::to_string(result.seed);
  ckpt.metadata["epoch"] = std::to_string(result.best_epoch);
  ckpt.metadata["epochs"] = std::to_string(config.epochs);
  ckpt.metadata["batch_size"] = std::to_string(config.batch_size);
  ckpt.metadata["lr_start"] = to_text(config.lr_start);
  ckpt.metadata["lr_end"] = to_text(config.lr_end);
  if (!result.curve.empty()) {
    const auto& best = result.curve[result.best_epoch - 1];
    ckpt.metadata["val_rec"] = to_text(best.val_rec);
    ckpt.metadata["train_rec"] = to_text(best.train_rec);
    ckpt.metadata["train_kl"] = to_text(best.train_kl);
    Eigen::MatrixXd curve(static_cast<Eigen::Index>(result.curve.size()), 6);
    for (size_t i = 0; i < result.curve.size(); ++i) {
      const auto& c = result.curve[i];
      curve.row(static_cast<Eigen::Index>(i)) << c.epoch, c.lr, c.ss_probability, c.train_rec,
          c.train_kl, c.val_rec;
    }
    ckpt.put("curve", curve);
  }
  return ckpt;
}

Eigen::VectorXd one_step_error_ratio(const MotionCvae& model,
                                     const std::vector<PoseSequence>& sequences) {
  Eigen::VectorXd se = Eigen::VectorXd::Zero(kD), sum = se, sum2 = se;
  Eigen::Index count = 0;
  for (const auto& s : sequences) {
    if (s.size() < 2) continue;
    const Eigen::MatrixXd m = pose_matrix(s);
    const Eigen::MatrixXd cur = m.leftCols(m.cols() - 1), next = m.rightCols(m.cols() - 1);
    Eigen::MatrixXd mu, lv;
    model.encode_batch(next, cur, mu, lv);
    se += (model.decode_batch(mu, cur) - next).array().square().matrix().rowwise().sum();
    sum += next.rowwise().sum();
    sum2 += next.array().square().matrix().rowwise().sum();
    count += next.cols();
  }
  if (count < 2) throw Error("one_step_error_ratio: need at least two pairs");
  const double n = static_cast<double>(count);
  const Eigen::ArrayXd var = ((sum2.array() - sum.array().square() / n) / (n - 1.0)).max(1e-12);
  return (se.array() / n / var).matrix();
}

}  // namespace gmp
