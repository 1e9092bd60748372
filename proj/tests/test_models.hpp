#pragma once

#include <random>
#include <vector>

#include "gmp/command_encoder.hpp"
#include "gmp/gait_synth.hpp"
#include "gmp/motion_cvae.hpp"
#include "test_util.hpp"

namespace gmp::test {

// Featurized corpus clips, small enough for unit tests.
inline std::vector<PoseSequence> small_corpus(std::uint64_t seed, int clips = 2,
                                              double seconds = 2.0) {
  CorpusOptions opts;
  opts.clips = clips;
  opts.clip_seconds = seconds;
  opts.seed = seed;
  std::vector<PoseSequence> out;
  for (const auto& clip : synth_corpus(opts)) out.push_back(featurize(clip, default_robot_model()));
  return out;
}

// Untrained prior with a perturbed decoder head so outputs depend on z.
inline MotionCvae tiny_cvae(std::uint64_t seed, const std::vector<PoseSequence>& seqs,
                            double head_scale = 0.05) {
  CvaeConfig c;
  c.hidden = {16, 16};
  c.latent_dim = 4;
  MotionCvae m(c, PoseStats::fit(seqs));
  std::mt19937_64 rng(seed);
  m.init(rng);
  const int last = m.decoder().layer_count() - 1;
  std::normal_distribution<double> n(0.0, head_scale);
  for (Eigen::Index i = 0; i < m.decoder().weight(last).size(); ++i) {
    m.decoder().weight(last)(i) = n(rng);
  }
  return m;
}

inline CommandEncoder tiny_encoder(std::uint64_t seed, const MotionCvae& cvae) {
  CommandEncoder e({12, 12}, cvae.latent_dim(), cvae.stats());
  std::mt19937_64 rng(seed);
  e.init(rng);
  return e;
}

}  // namespace gmp::test
