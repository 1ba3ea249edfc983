#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "posekit/geometry.hpp"
#include "posekit/losses.hpp"

namespace posekit {

/// Oriented box; extents are full side lengths.
struct Box3D {
  Vec3 center = Vec3::Zero();
  Rotation rotation;
  Vec3 extents = Vec3::Ones();

  static Box3D from_pose(const Pose& pose) { return {pose.translation, pose.rotation, pose.scale}; }
  double volume() const { return extents.prod(); }
  /// Signed distance-like test: inside when every local |coordinate| <= extent / 2.
  bool contains(const Vec3& p) const;
};

/// Exact intersection volume: box a's faces clipped against b's six
/// half-spaces, volume summed over the faces of the resulting polytope.
double intersection_volume(const Box3D& a, const Box3D& b);
double iou3d(const Box3D& a, const Box3D& b);

struct PoseError {
  double rotation_deg = 0.0;
  double translation_cm = 0.0;
};

/// Geodesic rotation error, minimized over the ground truth's symmetry
/// rotations, and translation distance in centimeters.
PoseError pose_error(const Pose& pred, const Pose& gt, const SymmetrySpec& sym);

struct EvalRecord {
  std::string category;
  Pose predicted;
  Pose ground_truth;
  SymmetrySpec symmetry;
};

struct EvalThresholds {
  std::vector<double> iou = {0.25, 0.5, 0.75};
  std::vector<std::pair<double, double>> deg_cm = {{5, 2}, {5, 5}, {10, 2}, {10, 5}};
};

struct MetricValue {
  std::string metric;
  double value = 0.0;  ///< accuracy in percent
};

struct CategoryMetrics {
  std::string category;
  size_t count = 0;
  bool symmetry_active = false;
  std::vector<MetricValue> values;
};

struct MetricTable {
  std::vector<CategoryMetrics> categories;  ///< sorted by name
  CategoryMetrics mean;                     ///< category "mean", averaged over categories
};

/// Column names in table order, e.g. "IOU_50", "5deg2cm".
std::vector<std::string> metric_names(const EvalThresholds& thresholds);

/// Per-category accuracy at each threshold plus the category mean. Axis
/// symmetric records are evaluated with 360 discrete rotations; the box IOU
/// then uses the ground-truth rotation that minimizes the rotation error.
/// Throws kInvalidInput for an empty record list or a category outside
/// `allowed` (when non-empty).
MetricTable evaluate(const std::vector<EvalRecord>& records, const EvalThresholds& thresholds = {},
                     const std::set<std::string>& allowed = {});

}  // namespace posekit
