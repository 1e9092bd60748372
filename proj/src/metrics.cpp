#include "gmp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gmp/error.hpp"

namespace gmp {
namespace {

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mu) {
  const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw Error("fid: eigendecomposition failed");
  const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

FeatureSet pool(const std::vector<MotionClip>& clips, const RobotModel& model, FeatureKind kind) {
  std::vector<FeatureSet> parts;
  Eigen::Index rows = 0;
  for (const auto& c : clips) {
    parts.push_back(clip_features(c, model, kind));
    rows += parts.back().samples.rows();
  }
  FeatureSet out{kind, Eigen::MatrixXd(rows, parts.empty() ? 0 : parts[0].samples.cols())};
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.samples.middleRows(r, p.samples.rows()) = p.samples;
    r += p.samples.rows();
  }
  return out;
}

}  // namespace

double frechet_distance(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a,
                        const Eigen::VectorXd& mu_b, const Eigen::MatrixXd& cov_b) {
  const Eigen::Index d = mu_a.size();
  if (mu_b.size() != d || cov_a.rows() != d || cov_a.cols() != d || cov_b.rows() != d ||
      cov_b.cols() != d) {
    throw DimensionError("frechet_distance: mean/covariance dimensions disagree");
  }
  // Tr((A B)^{1/2}) == Tr((A^{1/2} B A^{1/2})^{1/2}); the latter is symmetric.
  const Eigen::MatrixXd a_half = symmetric_sqrt(cov_a);
  const Eigen::MatrixXd inner = a_half * cov_b * a_half;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()),
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("fid: eigendecomposition failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  // non-negative in exact arithmetic; drop round-off below zero
  return std::max(0.0, (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt);
}

double fid(const FeatureSet& a, const FeatureSet& b, double epsilon) {
  if (a.kind != b.kind) throw DimensionError("fid: feature kinds differ");
  const Eigen::Index d = a.samples.cols();
  if (b.samples.cols() != d) {
    throw DimensionError("fid: feature dimensions differ (" + std::to_string(d) + " vs " +
                         std::to_string(b.samples.cols()) + ")");
  }
  for (const auto* s : {&a, &b}) {
    if (s->samples.rows() < d + 1) {
      throw DimensionError("fid: need at least " + std::to_string(d + 1) + " samples, got " +
                           std::to_string(s->samples.rows()));
    }
    if (!s->samples.allFinite()) throw Error("fid: samples are not finite");
  }
  const Eigen::VectorXd mu_a = a.samples.colwise().mean().transpose();
  const Eigen::VectorXd mu_b = b.samples.colwise().mean().transpose();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd cov_a = covariance(a.samples, mu_a) + epsilon * id;
  const Eigen::MatrixXd cov_b = covariance(b.samples, mu_b) + epsilon * id;
  for (const auto* c : {&cov_a, &cov_b}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*c, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0)) {
      throw Error("fid: covariance is rank deficient after regularization");
    }
  }
  return frechet_distance(mu_a, cov_a, mu_b, cov_b);
}

double dtw(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() == 0 || b.rows() == 0) throw Error("dtw: empty sequence");
  if (a.cols() != b.cols()) throw DimensionError("dtw: element dimensions differ");
  const Eigen::Index n = a.rows(), m = b.rows();
  const double inf = std::numeric_limits<double>::infinity();
  // Two rolling rows of the cumulative cost table.
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (Eigen::Index j = 1; j <= m; ++j) {
      const double cost = (a.row(i - 1) - b.row(j - 1)).norm();
      cur[j] = cost + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double melv(const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw Error("melv: no episodes");
  double sum = 0.0;
  for (const auto& ep : episodes) {
    if (ep.empty()) throw Error("melv: empty episode");
    double s = 0.0;
    for (const auto& step : ep) s += 3.0 * std::exp(-4.0 * (step.v_xy - step.c_xy).squaredNorm());
    sum += s / static_cast<double>(ep.size());
  }
  return sum / static_cast<double>(episodes.size());
}

FeatureSet clip_features(const MotionClip& clip, const RobotModel& model, FeatureKind kind) {
  const Eigen::Index n = static_cast<Eigen::Index>(clip.frames.size());
  FeatureSet out{kind, {}};
  if (kind == FeatureKind::kJointAngle) {
    out.samples.resize(n, kDofCount);
    for (Eigen::Index f = 0; f < n; ++f) out.samples.row(f) = clip.frames[f].q.transpose();
  } else {
    out.samples.resize(n, 3 * kKeypointCount);
    for (Eigen::Index f = 0; f < n; ++f) {
      const KeypointSet p = keypoints_local(model, clip.frames[f].q);
      for (int k = 0; k < kKeypointCount; ++k) out.samples.block<1, 3>(f, 3 * k) = p[k].transpose();
    }
  }
  return out;
}

MetricReport evaluate(const std::vector<MotionClip>& robot_clips,
                      const std::vector<MotionClip>& reference_clips,
                      const std::vector<Episode>& episodes, const RobotModel& model) {
  if (robot_clips.empty() || robot_clips.size() != reference_clips.size()) {
    throw Error("evaluate: need the same non-zero number of robot and reference clips (" +
                std::to_string(robot_clips.size()) + " vs " +
                std::to_string(reference_clips.size()) + ")");
  }
  MetricReport r;
  r.jfid = fid(pool(robot_clips, model, FeatureKind::kJointAngle),
               pool(reference_clips, model, FeatureKind::kJointAngle));
  r.kfid = fid(pool(robot_clips, model, FeatureKind::kKeypoint),
               pool(reference_clips, model, FeatureKind::kKeypoint));
  for (size_t i = 0; i < robot_clips.size(); ++i) {
    for (FeatureKind kind : {FeatureKind::kJointAngle, FeatureKind::kKeypoint}) {
      const double d = dtw(clip_features(robot_clips[i], model, kind).samples,
                           clip_features(reference_clips[i], model, kind).samples);
      (kind == FeatureKind::kJointAngle ? r.jdtw : r.kdtw) += d;
    }
  }
  r.jdtw /= static_cast<double>(robot_clips.size());
  r.kdtw /= static_cast<double>(robot_clips.size());
  if (!episodes.empty()) {
    r.melv = melv(episodes);
    r.has_melv = true;
  }
  return r;
}

std::string format_report(const MetricReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# DTW pairs robot clip i with reference clip i (matched command profiles); "
                "values are means over pairs\n"
                "%12s %12s %12s %12s %12s\n%12.6g %12.6g %12.6g %12.6g %12s\n",
                "JFID", "KFID", "JDTW", "KDTW", "MELV", r.jfid, r.kfid, r.jdtw, r.kdtw,
                r.has_melv ? std::to_string(r.melv).c_str() : "n/a");
  return buf;
}

}  // namespace gmp
