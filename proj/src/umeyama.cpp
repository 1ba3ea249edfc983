#include "posekit/umeyama.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "posekit/error.hpp"

namespace posekit {

Similarity estimate_similarity(std::span<const Vec3> src, std::span<const Vec3> dst,
                               bool fix_scale) {
  require(src.size() == dst.size(), ErrorCode::kInvalidInput,
          "source and destination sizes differ");
  require(src.size() >= 3, ErrorCode::kInsufficientPoints, "need at least 3 correspondences");

  const double n = static_cast<double>(src.size());
  Vec3 mean_src = Vec3::Zero(), mean_dst = Vec3::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    mean_src += src[i];
    mean_dst += dst[i];
  }
  mean_src /= n;
  mean_dst /= n;

  Mat3 cov = Mat3::Zero();
  double var_src = 0.0;
  for (size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - mean_src;
    cov += (dst[i] - mean_dst) * a.transpose();
    var_src += a.squaredNorm();
  }
  cov /= n;
  var_src /= n;

  // Collinear or coincident sources leave the rotation about their line free.
  Eigen::JacobiSVD<Mat3> src_svd;
  {
    Mat3 src_cov = Mat3::Zero();
    for (const Vec3& p : src) src_cov += (p - mean_src) * (p - mean_src).transpose();
    src_svd.compute(src_cov / n);
  }
  const Vec3 src_sv = src_svd.singularValues();
  require(var_src > 1e-300 && src_sv[1] > 1e-12 * src_sv[0], ErrorCode::kDegenerateConfiguration,
          "source points are coincident or collinear");

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 d = Vec3::Ones();
  if ((u * v.transpose()).determinant() < 0) d[2] = -1.0;

  Similarity out;
  out.rotation = u * d.asDiagonal() * v.transpose();
  out.scale = fix_scale ? 1.0 : svd.singularValues().dot(d) / var_src;
  out.translation = mean_dst - out.scale * (out.rotation * mean_src);
  return out;
}

double residual_rms(const Similarity& t, std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < src.size(); ++i) sum += (t.apply(src[i]) - dst[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(src.size()));
}

namespace {

SimilarityFit make_fit(const Similarity& sim, std::span<const Vec3> src, std::span<const Vec3> dst) {
  Vec3 lo = src[0], hi = src[0];
  for (const Vec3& p : src) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 extent = hi - lo;

  SimilarityFit fit;
  fit.similarity = sim;
  fit.pose.rotation = Rotation::from_matrix(sim.rotation);
  fit.pose.translation = sim.translation;
  // Planar sources have a zero extent axis; keep the size strictly positive.
  Vec3 size = sim.scale * extent / extent.norm();
  fit.pose.scale = size.cwiseMax(1e-12 * sim.scale);
  fit.residual_rms = residual_rms(sim, src, dst);
  return fit;
}

}  // namespace

SimilarityFit solve_similarity(const NocsMap& src, const PointCloud& dst) {
  const Similarity sim = estimate_similarity(src.coords, dst.points);
  return make_fit(sim, src.coords, dst.points);
}

RobustSimilarityFit solve_similarity_robust(const NocsMap& src, const PointCloud& dst,
                                            const RansacOptions& options) {
  const size_t n = src.coords.size();
  require(n == dst.points.size(), ErrorCode::kInvalidInput, "source and destination sizes differ");
  require(options.sample_size >= 3, ErrorCode::kInvalidInput, "sample_size must be >= 3");
  require(n >= static_cast<size_t>(options.sample_size), ErrorCode::kInsufficientPoints,
          "fewer correspondences than the RANSAC sample size");
  require(options.iterations >= 1 && options.inlier_threshold > 0, ErrorCode::kInvalidInput,
          "invalid RANSAC options");

  std::mt19937_64 rng(options.seed);
  std::vector<size_t> all(n);
  std::iota(all.begin(), all.end(), size_t{0});
  const double thr2 = options.inlier_threshold * options.inlier_threshold;

  auto collect_inliers = [&](const Similarity& sim) {
    std::vector<size_t> inliers;
    for (size_t i = 0; i < n; ++i) {
      if ((sim.apply(src.coords[i]) - dst.points[i]).squaredNorm() < thr2) inliers.push_back(i);
    }
    return inliers;
  };

  std::vector<size_t> best;
  std::vector<size_t> sample;
  Points s_src(options.sample_size), s_dst(options.sample_size);
  for (int it = 0; it < options.iterations; ++it) {
    sample.clear();
    std::sample(all.begin(), all.end(), std::back_inserter(sample), options.sample_size, rng);
    for (int j = 0; j < options.sample_size; ++j) {
      s_src[j] = src.coords[sample[j]];
      s_dst[j] = dst.points[sample[j]];
    }
    Similarity sim;
    try {
      sim = estimate_similarity(s_src, s_dst);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDegenerateConfiguration) continue;
      throw;
    }
    std::vector<size_t> inliers = collect_inliers(sim);
    if (inliers.size() > best.size()) best = std::move(inliers);
    if (best.size() == n) break;
  }
  require(best.size() >= static_cast<size_t>(options.sample_size), ErrorCode::kNoConsensus,
          "no hypothesis reached the minimum inlier count");

  Points in_src, in_dst;
  in_src.reserve(best.size());
  in_dst.reserve(best.size());
  for (size_t i : best) {
    in_src.push_back(src.coords[i]);
    in_dst.push_back(dst.points[i]);
  }
  RobustSimilarityFit out;
  out.fit = make_fit(estimate_similarity(in_src, in_dst), in_src, in_dst);
  out.inliers = std::move(best);
  return out;
}

}  // namespace posekit
