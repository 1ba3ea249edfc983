#include "posekit/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "posekit/config.hpp"
#include "posekit/error.hpp"
#include "test_support.hpp"

namespace posekit {
namespace {

using testing::rad;

Points random_points(std::mt19937_64& rng, size_t n, double r = 0.5) {
  std::uniform_real_distribution<double> u(-r, r);
  Points out(n);
  for (Vec3& p : out) p = Vec3(u(rng), u(rng), u(rng));
  return out;
}

TEST(RotationPmLoss, ZeroAtGroundTruth) {
  std::mt19937_64 rng(1);
  const Mat3 r = testing::random_rotation(rng).matrix();
  EXPECT_EQ(rotation_pm_loss(r, r, random_points(rng, 50), SymmetrySpec::none()), 0.0);
}

TEST(RotationPmLoss, QuarterTurnOnSinglePoint) {
  const Mat3 rz = Rotation::from_axis_angle(Vec3::UnitZ(), rad(90)).matrix();
  EXPECT_NEAR(rotation_pm_loss(rz, Mat3::Identity(), Points{{1, 0, 0}}, SymmetrySpec::none()), std::sqrt(2.0), 1e-12);
}

TEST(RotationPmLoss, AxisSymmetryBound) {
  std::mt19937_64 rng(2);
  const Points pts = random_points(rng, 200);
  double max_r = 0.0;
  for (const Vec3& p : pts) max_r = std::max(max_r, p.norm());
  const SymmetrySpec sym = SymmetrySpec::about(Vec3::UnitZ(), 64);
  const Mat3 gt = testing::random_rotation(rng).matrix();
  std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi);
  for (int i = 0; i < 16; ++i) {
    // Symmetry acts in the canonical frame: the prediction differs from gt by
    // a spin about the object's own axis.
    const Mat3 pred = gt * Rotation::from_axis_angle(Vec3::UnitZ(), angle(rng)).matrix();
    EXPECT_LE(rotation_pm_loss(pred, gt, pts, sym), std::numbers::pi / 64 * max_r);
  }
}

TEST(RotationPmLoss, EmptyPointsRejected) {
  try {
    rotation_pm_loss(Mat3::Identity(), Mat3::Identity(), Points{}, SymmetrySpec::none());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidInput);
  }
}

TEST(SymmetryRotations, Counts) {
  EXPECT_EQ(symmetry_rotations(SymmetrySpec::none()).size(), 1u);
  const auto rots = symmetry_rotations(SymmetrySpec::about(Vec3::UnitY(), 8));
  ASSERT_EQ(rots.size(), 8u);
  EXPECT_NEAR(rotation_angle_between(rots[1], Mat3::Identity()), std::numbers::pi / 4, 1e-12);
  EXPECT_THROW(validate(SymmetrySpec::about(Vec3::UnitY(), 1)), Error);
  EXPECT_THROW(validate(SymmetrySpec::about(Vec3(0, 2, 0), 8)), Error);
}

TEST(TranslationScaleLoss, ZeroAtGroundTruth) {
  const DecoupledPose p{{100, 80, 1.2}, Vec3(0.1, 0.2, 0.3)};
  const TranslationScaleTerms t = translation_scale_loss(p, p);
  EXPECT_EQ(t.center, 0.0);
  EXPECT_EQ(t.depth, 0.0);
  EXPECT_EQ(t.scale, 0.0);
}

TEST(TranslationScaleLoss, CenterOffsetIsL1) {
  const DecoupledPose gt{{100, 80, 1.2}, Vec3::Ones()};
  DecoupledPose pred = gt;
  pred.center.o_x += 3;
  pred.center.o_y -= 4;
  EXPECT_NEAR(translation_scale_loss(pred, gt).center, 7.0, 1e-12);
}

TEST(TranslationScaleLoss, SizeIsL1) {
  const DecoupledPose pred{{0, 0, 1}, Vec3(0.1, 0.2, 0.3)};
  const DecoupledPose gt{{0, 0, 1}, Vec3(0.1, 0.1, 0.1)};
  EXPECT_NEAR(translation_scale_loss(pred, gt).scale, 0.3, 1e-12);
}

TEST(TranslationScaleLoss, GroundTruthFromTranslation) {
  const Intrinsics k{500, 500, 320, 240, 640, 480};
  Pose gt;
  gt.translation = Vec3(0.4, 0, 2);
  gt.scale = Vec3(0.1, 0.1, 0.1);
  const DecoupledPose pred{{420, 240, 2}, Vec3(0.1, 0.1, 0.1)};
  const TranslationScaleTerms t = translation_scale_loss(pred, gt, k);
  EXPECT_NEAR(t.center, 0.0, 1e-9);
  EXPECT_NEAR(t.depth, 0.0, 1e-12);
}

TEST(TranslationScaleLoss, RejectsNonPositiveDepth) {
  const DecoupledPose ok{{0, 0, 1}, Vec3::Ones()};
  const DecoupledPose bad{{0, 0, 0}, Vec3::Ones()};
  EXPECT_THROW(translation_scale_loss(bad, ok), Error);
  EXPECT_THROW(translation_scale_loss(ok, bad), Error);
}

TEST(SmoothL1, Branches) {
  EXPECT_DOUBLE_EQ(smooth_l1(0.5, 1.0), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(2.0, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(-2.0, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(0.0, 0.1), 0.0);
  // Continuous at the transition.
  EXPECT_NEAR(smooth_l1(0.1 - 1e-12, 0.1), smooth_l1(0.1 + 1e-12, 0.1), 1e-11);
}

TEST(NocsLoss, SumsChannels) {
  const NocsMap a{{{0.5, 0, 0}, {0, 2, 0}}};
  const NocsMap b{{{0, 0, 0}, {0, 0, 0}}};
  EXPECT_DOUBLE_EQ(nocs_loss(a, b, 1.0), 0.125 + 1.5);
  EXPECT_EQ(nocs_loss(a, a, 0.1), 0.0);
  EXPECT_THROW(nocs_loss(a, NocsMap{{{0, 0, 0}}}, 0.1), Error);
}

TEST(Chamfer, Examples) {
  EXPECT_DOUBLE_EQ(chamfer(Points{{0, 0, 0}}, Points{{1, 0, 0}}), 2.0);
  std::mt19937_64 rng(3);
  const Points x = random_points(rng, 30);
  EXPECT_EQ(chamfer(x, x), 0.0);
  EXPECT_THROW(chamfer(x, Points{}), Error);
}

TEST(Chamfer, SymmetricAndMatchesReference) {
  std::mt19937_64 rng(4);
  const Points x = random_points(rng, 300);
  const Points y = random_points(rng, 170);
  const double c = chamfer(x, y);
  EXPECT_NEAR(c, chamfer(y, x), 1e-12 * c);
  EXPECT_NEAR(c, reference::chamfer(x, y), 1e-12 * c);
}

TEST(Chamfer, MeanVariant) {
  const Points x{{0, 0, 0}, {0, 0, 0}};
  const Points y{{1, 0, 0}};
  // sum x->y = 2, sum y->x = 1
  EXPECT_DOUBLE_EQ(chamfer(x, y), 3.0);
  EXPECT_DOUBLE_EQ(chamfer_mean(x, y), 2.0);
}

TEST(SilhouetteLoss, Examples) {
  BinaryMask target(4, 1);
  target.data = {1, 1, 0, 0};
  SoftMask same(4, 1);
  same.data = {1, 1, 0, 0};
  EXPECT_EQ(silhouette_loss(same, target).value, 0.0);

  SoftMask disjoint(4, 1);
  disjoint.data = {0, 0, 1, 1};
  EXPECT_EQ(silhouette_loss(disjoint, target).value, 1.0);

  SoftMask shifted(4, 1);
  shifted.data = {0, 1, 1, 0};
  EXPECT_NEAR(silhouette_loss(shifted, target).value, 2.0 / 3.0, 1e-15);
}

TEST(SilhouetteLoss, BothEmptyIsDegenerate) {
  const SilhouetteLoss l = silhouette_loss(SoftMask(3, 3), BinaryMask(3, 3));
  EXPECT_TRUE(l.degenerate);
  EXPECT_EQ(l.value, 0.0);
  for (double v : silhouette_loss_adjoint(SoftMask(3, 3), BinaryMask(3, 3)).data) EXPECT_EQ(v, 0.0);
}

TEST(SilhouetteLoss, SizeMismatchRejected) {
  EXPECT_THROW(silhouette_loss(SoftMask(3, 3), BinaryMask(3, 4)), Error);
}

TEST(SilhouetteLoss, AdjointMatchesDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  SoftMask r(8, 6);
  BinaryMask t(8, 6);
  for (size_t i = 0; i < r.data.size(); ++i) {
    r.data[i] = u(rng);
    t.data[i] = u(rng) > 0.5;
  }
  const Image<double> adj = silhouette_loss_adjoint(r, t);
  const double h = 1e-7;
  for (size_t i = 0; i < r.data.size(); ++i) {
    // Keep away from the min/max kink at r == t.
    SoftMask plus = r, minus = r;
    plus.data[i] += h;
    minus.data[i] -= h;
    const double fd = (silhouette_loss(plus, t).value - silhouette_loss(minus, t).value) / (2 * h);
    EXPECT_NEAR(adj.data[i], fd, 1e-6);
  }
}

TEST(DeformationReg, Examples) {
  EXPECT_EQ(deformation_reg(Points(5, Vec3::Zero())), 0.0);
  EXPECT_DOUBLE_EQ(deformation_reg(Points(7, Vec3(0.3, 0, 0))), 0.3);
  EXPECT_DOUBLE_EQ(deformation_reg(Points{{0, 1, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}}), 0.25);
}

TEST(DeformationReg, GradientMatchesDifferences) {
  std::mt19937_64 rng(6);
  const Points d = random_points(rng, 6, 0.1);
  const Points g = deformation_reg_gradient(d);
  const double h = 1e-7;
  for (size_t i = 0; i < d.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      Points plus = d, minus = d;
      plus[i][c] += h;
      minus[i][c] -= h;
      EXPECT_NEAR(g[i][c], (deformation_reg(plus) - deformation_reg(minus)) / (2 * h), 1e-6);
    }
  }
  EXPECT_EQ(deformation_reg_gradient(Points{Vec3::Zero()})[0], Vec3::Zero());
}

TEST(TotalLoss, AllZero) {
  const LossWeights w;
  EXPECT_EQ(total_loss({}, w, SampleDomain::kSynthetic).value, 0.0);
  EXPECT_EQ(total_loss({}, w, SampleDomain::kReal).value, 0.0);
}

TEST(TotalLoss, DefaultWeights) {
  const LossWeights w;
  EXPECT_EQ(w.lambda_pose, 0.2);
  EXPECT_EQ(w.lambda_nocs, 2.0);
  EXPECT_EQ(w.lambda_recon, 5.0);
  EXPECT_EQ(w.lambda_mask, 0.2);
  EXPECT_EQ(w.lambda_reg, 0.01);
}

TEST(TotalLoss, DomainGating) {
  LossComponents c;
  c.pose = 7;
  c.nocs = 3;
  c.recon = 5;
  c.mask = 0.5;
  const LossWeights w;
  EXPECT_NEAR(total_loss(c, w, SampleDomain::kReal).value, 0.1, 1e-15);
  EXPECT_NEAR(total_loss(c, w, SampleDomain::kSynthetic).value, 32.5, 1e-12);
  const TotalLoss real = total_loss(c, w, SampleDomain::kReal);
  EXPECT_EQ(real.weighted.pose, 0.0);
  EXPECT_EQ(real.weighted.nocs, 0.0);
  EXPECT_EQ(real.weighted.recon, 0.0);
}

TEST(TotalLoss, RealIgnoresSupervisedTerms) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 100);
  LossComponents c;
  c.mask = 0.37;
  c.reg = 0.05;
  const double base = total_loss(c, LossWeights{}, SampleDomain::kReal).value;
  for (int i = 0; i < 20; ++i) {
    c.pose = u(rng);
    c.nocs = u(rng);
    c.recon = u(rng);
    EXPECT_EQ(total_loss(c, LossWeights{}, SampleDomain::kReal).value, base);
  }
}

TEST(PoseLoss, UnweightedSum) {
  EXPECT_DOUBLE_EQ(pose_loss(1.0, {2.0, 3.0, 4.0}), 10.0);
}

}  // namespace
}  // namespace posekit
