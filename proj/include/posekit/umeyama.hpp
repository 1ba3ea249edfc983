#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "posekit/geometry.hpp"

namespace posekit {

/// dst ~ scale * rotation * src + translation.
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

/// Closed-form least-squares similarity (Umeyama). With fix_scale the scale is
/// pinned to 1 and the result is the rigid least-squares fit.
/// Throws kInsufficientPoints for fewer than 3 pairs and
/// kDegenerateConfiguration for coincident or collinear source points.
Similarity estimate_similarity(std::span<const Vec3> src, std::span<const Vec3> dst,
                               bool fix_scale = false);

double residual_rms(const Similarity& t, std::span<const Vec3> src, std::span<const Vec3> dst);

struct SimilarityFit {
  Pose pose;  ///< scale holds per-axis size; |pose.scale| == similarity.scale
  Similarity similarity;
  double residual_rms = 0.0;
};

/// Pose from NOCS correspondences. Per-axis size is the similarity scale times
/// the diagonal-normalized extent of the source's tight box.
SimilarityFit solve_similarity(const NocsMap& src, const PointCloud& dst);

struct RansacOptions {
  int iterations = 256;
  int sample_size = 4;
  double inlier_threshold = 0.01;  ///< meters
  uint64_t seed = 0;
};

struct RobustSimilarityFit {
  SimilarityFit fit;
  std::vector<size_t> inliers;
};

/// RANSAC over minimal samples, refit on the best consensus set.
/// Throws kNoConsensus when no hypothesis reaches sample_size inliers.
RobustSimilarityFit solve_similarity_robust(const NocsMap& src, const PointCloud& dst,
                                            const RansacOptions& options = {});

}  // namespace posekit
