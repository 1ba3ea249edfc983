#include "posekit/fit.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "posekit/error.hpp"
#include "test_support.hpp"

namespace posekit {
namespace {

using testing::deg;

struct Scene {
  Intrinsics k = testing::small_camera(64, 80);
  Mesh mesh = testing::asymmetric_rock();
  Pose gt;
  BinaryMask target;
};

Scene make_scene(uint64_t seed) {
  Scene s;
  std::mt19937_64 rng(seed);
  s.gt.rotation = testing::random_rotation(rng);
  s.gt.translation = Vec3(0.05, -0.03, 1.6);
  s.gt.scale = Vec3::Constant(0.9 / std::sqrt(3.0));
  s.target = hard_mask(render_silhouette(s.mesh, s.gt, s.k, RenderConfig::for_intrinsics(s.k, 1e-3)).mask);
  return s;
}

double rot_deg(const Pose& a, const Pose& b) {
  return deg(rotation_angle_between(a.rotation.matrix(), b.rotation.matrix()));
}

TEST(FitPose, StartingAtTruthAtFinalSharpness) {
  // Pixels within a few hundredths of a pixel of an edge keep the soft loss
  // off zero at the truth, so the fit settles nearby instead of staying put.
  const Scene s = make_scene(1);
  FitConfig cfg;
  cfg.sigma = cfg.min_sigma;
  cfg.anneal_every = 0;
  const FitResult r = fit_pose(s.target, s.mesh, s.k, s.gt, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_FALSE(r.diverged);
  EXPECT_LE(r.loss_trajectory.front(), 5e-3);
  EXPECT_LE(r.loss_trajectory.back(), r.loss_trajectory.front());
  EXPECT_LT(rot_deg(r.final_pose, s.gt), 1.0);
}

TEST(FitPose, StartingAtTruthWithSchedule) {
  // Blurred renders do not have the truth as their exact optimum, so the
  // full schedule wanders a little before sharpening back.
  const Scene s = make_scene(1);
  const FitResult r = fit_pose(s.target, s.mesh, s.k, s.gt);
  EXPECT_FALSE(r.diverged);
  EXPECT_LT(rot_deg(r.final_pose, s.gt), 2.0);
  EXPECT_LT((r.final_pose.translation - s.gt.translation).norm(), 5e-3);
}

TEST(FitPose, ZeroIterationsReturnsInit) {
  const Scene s = make_scene(2);
  FitConfig cfg;
  cfg.max_iters = 0;
  Pose init = s.gt;
  init.translation.x() += 0.02;
  const FitResult r = fit_pose(s.target, s.mesh, s.k, init, cfg);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.loss_trajectory.size(), 1u);
  EXPECT_EQ(r.final_pose.translation, init.translation);
  EXPECT_EQ(r.final_pose.rotation.coeffs(), init.rotation.coeffs());
}

TEST(FitPose, DisjointInitIsNoOverlap) {
  const Scene s = make_scene(3);
  Pose init = s.gt;
  init.translation = decouple_translation(2, 2, 4.0, s.k);
  init.scale *= 0.05;
  try {
    fit_pose(s.target, s.mesh, s.k, init);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoOverlap);
  }
}

TEST(FitPose, MismatchedTargetRejected) {
  const Scene s = make_scene(4);
  EXPECT_THROW(fit_pose(BinaryMask(10, 10), s.mesh, s.k, s.gt), Error);
}

TEST(FitPose, RecoversPerturbedPoseAndIsDeterministic) {
  const Scene s = make_scene(5);
  std::mt19937_64 rng(55);
  Pose init = s.gt;
  init.rotation = testing::random_perturbation(rng, 10.0) * s.gt.rotation;
  init.translation *= 1.08;
  const FitResult a = fit_pose(s.target, s.mesh, s.k, init);
  EXPECT_LT(rot_deg(a.final_pose, s.gt), 2.0);
  EXPECT_LT(a.iterations, 500 + 1);

  const FitResult b = fit_pose(s.target, s.mesh, s.k, init);
  EXPECT_EQ(a.loss_trajectory, b.loss_trajectory);
  EXPECT_EQ(a.final_pose.rotation.coeffs(), b.final_pose.rotation.coeffs());

  // Every accepted step at a fixed sharpness goes downhill unless recorded.
  for (size_t i = 1; i < a.loss_trajectory.size(); ++i) {
    if (a.sigma_trajectory[i] != a.sigma_trajectory[i - 1]) continue;
    const bool flagged = std::count(a.uphill_steps.begin(), a.uphill_steps.end(), static_cast<int>(i)) > 0;
    if (!flagged) EXPECT_LE(a.loss_trajectory[i], a.loss_trajectory[i - 1]) << "iteration " << i;
  }
  EXPECT_TRUE(std::is_sorted(a.sigma_trajectory.rbegin(), a.sigma_trajectory.rend()));
}

TEST(FitPose, ScaleStaysFixedByDefault) {
  const Scene s = make_scene(6);
  Pose init = s.gt;
  init.translation.x() += 0.03;
  FitConfig cfg;
  cfg.max_iters = 40;
  const FitResult r = fit_pose(s.target, s.mesh, s.k, init, cfg);
  EXPECT_EQ(r.final_pose.scale, init.scale);
}

TEST(FitPose, RejectsBadConfig) {
  const Scene s = make_scene(7);
  FitConfig cfg;
  cfg.sigma = 0;
  EXPECT_THROW(fit_pose(s.target, s.mesh, s.k, s.gt, cfg), Error);
  cfg = {};
  cfg.max_iters = -1;
  EXPECT_THROW(fit_pose(s.target, s.mesh, s.k, s.gt, cfg), Error);
}

TEST(FitPoseAndShape, UndeformedTargetKeepsShapeNearPrior) {
  const Scene s = make_scene(8);
  std::mt19937_64 rng(88);
  Pose init = s.gt;
  init.rotation = testing::random_perturbation(rng, 5.0) * s.gt.rotation;
  const ShapeFitResult r = fit_pose_and_shape(s.target, s.mesh, s.k, init);
  ASSERT_EQ(r.delta.deltas.size(), s.mesh.vertices.size());
  EXPECT_LE(deformation_reg(r.delta.deltas), 0.02);
  EXPECT_LE(r.pose.loss_trajectory.back(), r.pose.loss_trajectory.front());
}

TEST(FitPoseAndShape, InflatedTargetGrowsOutward) {
  const Scene s = make_scene(10);
  Mesh instance = s.mesh;
  for (Vec3& v : instance.vertices) v *= 1.1;
  const BinaryMask target =
      hard_mask(render_silhouette(instance, s.gt, s.k, RenderConfig::for_intrinsics(s.k, 1e-3)).mask);
  ShapeFitConfig cfg;
  cfg.max_iters = 200;
  const ShapeFitResult r = fit_pose_and_shape(target, s.mesh, s.k, s.gt, cfg);
  double outward = 0.0;
  for (size_t i = 0; i < s.mesh.vertices.size(); ++i) outward += r.delta.deltas[i].dot(s.mesh.vertices[i]);
  EXPECT_GT(outward, 0.0);
}

TEST(FitPoseAndShape, HeavyRegularizationMatchesPoseOnlyFit) {
  const Scene s = make_scene(9);
  std::mt19937_64 rng(99);
  Pose init = s.gt;
  init.rotation = testing::random_perturbation(rng, 6.0) * s.gt.rotation;
  ShapeFitConfig cfg;
  cfg.lambda_reg = 1e3;
  cfg.max_iters = 150;
  const ShapeFitResult shape = fit_pose_and_shape(s.target, s.mesh, s.k, init, cfg);
  const FitResult pose = fit_pose(s.target, s.mesh, s.k, init, cfg);
  EXPECT_LT(deformation_reg(shape.delta.deltas), 1e-4);
  EXPECT_LT(rot_deg(shape.pose.final_pose, pose.final_pose), 0.5);
}

}  // namespace
}  // namespace posekit
