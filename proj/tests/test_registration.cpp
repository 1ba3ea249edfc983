#include "posekit/registration.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "posekit/error.hpp"
#include "test_support.hpp"

namespace posekit {
namespace {

using testing::deg;
using testing::rad;

// Area-uniform samples on the rock surface, about 0.3 m across.
Points surface_samples(size_t n, uint64_t seed) {
  const Mesh m = testing::asymmetric_rock(seed);
  std::vector<double> area;
  for (const Face& f : m.faces) {
    area.push_back(0.5 * (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]).norm());
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<size_t> pick(area.begin(), area.end());
  std::uniform_real_distribution<double> u(0, 1);
  Points out;
  for (size_t i = 0; i < n; ++i) {
    const Face& f = m.faces[pick(rng)];
    double a = u(rng), b = u(rng);
    if (a + b > 1) a = 1 - a, b = 1 - b;
    const Vec3 p = m.vertices[f[0]] + a * (m.vertices[f[1]] - m.vertices[f[0]]) + b * (m.vertices[f[2]] - m.vertices[f[0]]);
    out.push_back(0.3 * p + Vec3(0, 0, 0.8));
  }
  return out;
}

PointCloud moved(const Points& pts, const RigidTransform& t) {
  PointCloud c;
  for (const Vec3& p : pts) c.points.push_back(t.apply(p));
  return c;
}

RigidTransform small_motion() {
  return {Rotation::from_axis_angle(Vec3::UnitZ(), rad(5)), Vec3(0.01, 0, 0.02)};
}

double angle_deg(const RigidTransform& a, const RigidTransform& b) {
  return deg(rotation_angle_between(a.rotation.matrix(), b.rotation.matrix()));
}

TEST(RigidTransform, CompositionAndInverse) {
  const RigidTransform a{Rotation::from_axis_angle(Vec3::UnitX(), 0.3), Vec3(1, 2, 3)};
  const RigidTransform b{Rotation::from_axis_angle(Vec3(1, 1, 0).normalized(), -0.7), Vec3(-0.5, 0, 2)};
  const Vec3 p(0.2, -0.4, 1.1);
  EXPECT_LT(((a * b).apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
  EXPECT_LT(((a.inverse() * a).apply(p) - p).norm(), 1e-12);
}

TEST(RigidTransform, AppliesToPose) {
  Pose pose;
  pose.translation = Vec3(0, 0, 1);
  pose.scale = Vec3(0.1, 0.2, 0.3);
  const RigidTransform t = small_motion();
  const Pose out = t.apply(pose);
  EXPECT_EQ(out.scale, pose.scale);
  const Vec3 local(0.05, -0.02, 0.1);
  const Vec3 before = pose.rotation.matrix() * local + pose.translation;
  const Vec3 after = out.rotation.matrix() * local + out.translation;
  EXPECT_LT((t.apply(before) - after).norm(), 1e-12);
}

TEST(SpatialHashGrid, FindsEveryPointWithinOneCell) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  Points pts(2000);
  for (Vec3& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  const double cell = 0.1;
  const SpatialHashGrid grid(pts, cell);
  for (int q = 0; q < 50; ++q) {
    const Vec3 c(u(rng), u(rng), u(rng));
    std::set<int> found;
    grid.for_each_near(c, [&](int i) {
      if ((pts[i] - c).norm() <= cell) found.insert(i);
    });
    std::set<int> brute;
    for (int i = 0; i < static_cast<int>(pts.size()); ++i)
      if ((pts[i] - c).norm() <= cell) brute.insert(i);
    EXPECT_EQ(found, brute);
  }
}

TEST(Icp, IdentityOnSameCloud) {
  const Points pts = surface_samples(1500, 2);
  const PointCloud c{pts, {}};
  const IcpResult r = icp_colored(c, c, {});
  EXPECT_LT(angle_deg(r.transform, {}), 1e-6);
  EXPECT_LT(r.transform.translation.norm(), 1e-9);
  EXPECT_LT(r.rms, 1e-9);
}

TEST(Icp, RecoversSmallMotion) {
  const Points pts = surface_samples(3000, 3);
  const RigidTransform gt = small_motion();
  const IcpResult r = icp_colored(PointCloud{pts, {}}, moved(pts, gt), {});
  EXPECT_LT(angle_deg(r.transform, gt), 0.05);
  EXPECT_LT((r.transform.translation - gt.translation).norm(), 5e-4);
}

TEST(Icp, TrimmingRejectsOutliers) {
  const Points pts = surface_samples(3000, 4);
  const RigidTransform gt = small_motion();
  PointCloud dst = moved(pts, gt);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.15, 0.15);
  for (size_t i = 0; i < dst.points.size(); i += 5) dst.points[i] += Vec3(u(rng), u(rng), u(rng));
  IcpConfig cfg;
  cfg.trim_fraction = 0.3;
  const IcpResult r = icp_colored(PointCloud{pts, {}}, dst, {}, cfg);
  EXPECT_LT(angle_deg(r.transform, gt), 0.2);
  EXPECT_LT((r.transform.translation - gt.translation).norm(), 2e-3);
}

TEST(Icp, RmsNeverRisesWithinAnIteration) {
  const Points pts = surface_samples(2000, 5);
  const IcpResult r = icp_colored(PointCloud{pts, {}}, moved(pts, small_motion()), {});
  ASSERT_FALSE(r.history.empty());
  for (const IcpIteration& it : r.history) EXPECT_LE(it.rms_after, it.rms_before + 1e-12);
}

TEST(Icp, ComposesAcrossThreeClouds) {
  const Points a = surface_samples(3000, 6);
  const RigidTransform ab{Rotation::from_axis_angle(Vec3::UnitY(), rad(3)), Vec3(0.005, 0, 0)};
  const RigidTransform bc{Rotation::from_axis_angle(Vec3::UnitX(), rad(-2)), Vec3(0, 0.004, 0.003)};
  const PointCloud b = moved(a, ab);
  const PointCloud c = moved(b.points, bc);
  const IcpResult r1 = icp_colored(PointCloud{a, {}}, b, {});
  const IcpResult r2 = icp_colored(b, c, {});
  const IcpResult direct = icp_colored(PointCloud{a, {}}, c, {});
  const RigidTransform chained = r2.transform * r1.transform;
  EXPECT_LT(angle_deg(chained, bc * ab), 0.05);
  EXPECT_LT(angle_deg(chained, direct.transform), 0.05);
  EXPECT_LT((chained.translation - direct.transform.translation).norm(), 5e-4);
}

TEST(Icp, ColorsBreakGeometricTies) {
  // A flat grid shifted by exactly one pitch: geometry alone is satisfied
  // by zero motion, the colors pin the true shift.
  Points grid;
  std::vector<Vec3> colors;
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j) {
      grid.emplace_back(0.01 * i, 0.01 * j, 1.0);
      colors.emplace_back(i / 30.0, j / 30.0, 0.5);
    }
  PointCloud src{grid, colors};
  PointCloud dst = src;
  for (Vec3& p : dst.points) p.x() += 0.01;
  IcpConfig cfg;
  cfg.color_weight = 1.0;
  cfg.trim_fraction = 0.1;
  const IcpResult r = icp_colored(src, dst, {}, cfg);
  EXPECT_NEAR(r.transform.translation.x(), 0.01, 1e-3);
}

TEST(Icp, TooFewCorrespondencesFails) {
  const Points pts = surface_samples(500, 7);
  const RigidTransform far{Rotation(), Vec3(5, 0, 0)};
  try {
    icp_colored(PointCloud{pts, {}}, moved(pts, far), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRegistrationFailed);
  }
}

TEST(KeyframeSchedule, EveryStride) {
  EXPECT_EQ(keyframe_schedule(120, 50), (std::vector<int>{0, 50, 100}));
  EXPECT_EQ(keyframe_schedule(1, 50), (std::vector<int>{0}));
  EXPECT_THROW(keyframe_schedule(10, 0), Error);
}

SceneSpec small_scene(int frames, double deg_per_frame) {
  SceneSpec spec;
  spec.mesh = testing::asymmetric_rock();
  spec.intrinsics = {150, 150, 80, 60, 160, 120};
  Pose start;
  start.rotation = Rotation::from_axis_angle(Vec3(1, 1, 0).normalized(), 0.6);
  start.translation = Vec3(0, 0, 0.5);
  start.scale = Vec3::Constant(0.3 / std::sqrt(3.0));
  spec.trajectory = linear_trajectory(start, frames, Vec3::UnitZ(), deg_per_frame, Vec3::Zero());
  spec.keyframe_stride = 0;
  return spec;
}

TEST(Propagate, StaticVideoKeepsKeyframePose) {
  const SyntheticVideo s = synth_generate(small_scene(6, 0.0), 1);
  PropagationConfig cfg;
  cfg.cloud_points = 1500;
  const PropagationResult r = propagate(s.video, {{0, s.ground_truth[0]}}, cfg);
  EXPECT_TRUE(r.unpropagated.empty());
  ASSERT_EQ(r.poses.size(), 6u);
  for (const auto& [f, pose] : r.poses) {
    EXPECT_LT(deg(rotation_angle_between(pose.rotation.matrix(), s.ground_truth[0].rotation.matrix())), 1e-6) << f;
    EXPECT_LT((pose.translation - s.ground_truth[0].translation).norm(), 1e-9) << f;
  }
}

TEST(Propagate, AllKeyframesPassThrough) {
  const SyntheticVideo s = synth_generate(small_scene(4, 2.0), 2);
  std::map<int, Pose> keys;
  for (int f = 0; f < 4; ++f) keys[f] = s.ground_truth[f];
  PropagationConfig cfg;
  cfg.keyframe_stride = 1;
  const PropagationResult r = propagate(s.video, keys, cfg);
  for (int f = 0; f < 4; ++f) {
    EXPECT_EQ(r.poses.at(f).translation, keys[f].translation);
    EXPECT_EQ(r.poses.at(f).rotation.coeffs(), keys[f].rotation.coeffs());
    EXPECT_EQ(r.drift_rms.at(f), 0.0);
  }
}

TEST(Propagate, BrokenLinkReanchorsAtNextKeyframe) {
  SyntheticVideo s = synth_generate(small_scene(8, 1.0), 3);
  // Frame 2 loses its foreground entirely.
  std::fill(s.video.frames[2].mask.data.begin(), s.video.frames[2].mask.data.end(), 0);
  PropagationConfig cfg;
  cfg.cloud_points = 1500;
  std::vector<int> ticks;
  const PropagationResult r =
      propagate(s.video, {{0, s.ground_truth[0]}, {5, s.ground_truth[5]}}, cfg,
                [&](int done, int total) {
                  EXPECT_EQ(total, 8);
                  ticks.push_back(done);
                });
  EXPECT_EQ(r.unpropagated, (std::vector<int>{2, 3, 4}));
  EXPECT_TRUE(r.poses.contains(1));
  EXPECT_TRUE(r.poses.contains(7));
  EXPECT_FALSE(r.poses.contains(3));
  EXPECT_EQ(ticks.size(), 8u);
  EXPECT_EQ(ticks.back(), 8);
  EXPECT_EQ(r.poses.at(5).rotation.coeffs(), s.ground_truth[5].rotation.coeffs());
  EXPECT_EQ(r.poses.at(5).translation, s.ground_truth[5].translation);
  EXPECT_EQ(r.drift_rms.at(5), 0.0);
}

TEST(Propagate, FramesBeforeFirstKeyframeAreUnpropagated) {
  const SyntheticVideo s = synth_generate(small_scene(4, 0.0), 4);
  PropagationConfig cfg;
  cfg.cloud_points = 1000;
  const PropagationResult r = propagate(s.video, {{2, s.ground_truth[2]}}, cfg);
  EXPECT_EQ(r.unpropagated, (std::vector<int>{0, 1}));
  EXPECT_TRUE(r.poses.contains(3));
}

TEST(Propagate, RejectsBadKeyframes) {
  const SyntheticVideo s = synth_generate(small_scene(3, 0.0), 5);
  EXPECT_THROW(propagate(s.video, {}), Error);
  EXPECT_THROW(propagate(s.video, {{7, s.ground_truth[0]}}), Error);
}

TEST(MergePropagation, KeepsKeyframesVerbatim) {
  Annotations current;
  PoseRecord key = PoseRecord::from_pose(Pose{}, true);
  key.translation_m = {0.1, 0.2, 0.30000000000000004};
  current.frames[0] = key;
  current.frames[1] = PoseRecord::from_pose(Pose{}, false);
  current.unpropagated = {4};

  PropagationResult result;
  Pose moved_pose;
  moved_pose.translation = Vec3(0, 0, 1);
  result.poses[0] = key.to_pose();
  result.poses[1] = moved_pose;
  result.poses[2] = moved_pose;
  result.unpropagated = {3};
  result.drift_rms = {{0, 0.0}, {1, 0.001}, {2, 0.002}};

  const Annotations next = merge_propagation(current, result);
  EXPECT_EQ(next.frames.at(0), key);
  EXPECT_FALSE(next.frames.at(1).is_keyframe);
  EXPECT_EQ(next.frames.at(1).translation_m[2], 1.0);
  EXPECT_TRUE(next.frames.contains(2));
  EXPECT_EQ(next.unpropagated, (std::vector<int>{3}));
  EXPECT_EQ(next.drift_rms, result.drift_rms);
}

}  // namespace
}  // namespace posekit
