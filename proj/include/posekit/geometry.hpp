#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "posekit/image.hpp"

namespace posekit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Points = std::vector<Vec3>;

/// Unit quaternion, scalar first. Always normalized on construction.
class Rotation {
 public:
  Rotation() = default;
  /// Throws kInvalidInput on non-finite or zero-norm input.
  Rotation(double w, double x, double y, double z);
  explicit Rotation(const Vec4& wxyz) : Rotation(wxyz[0], wxyz[1], wxyz[2], wxyz[3]) {}

  static Rotation from_matrix(const Mat3& m);
  static Rotation from_axis_angle(const Vec3& axis, double angle_rad);

  double w() const { return q_[0]; }
  double x() const { return q_[1]; }
  double y() const { return q_[2]; }
  double z() const { return q_[3]; }
  const Vec4& coeffs() const { return q_; }

  Mat3 matrix() const;
  Rotation inverse() const { return Rotation(q_[0], -q_[1], -q_[2], -q_[3]); }
  Rotation operator*(const Rotation& rhs) const;

 private:
  Vec4 q_{1.0, 0.0, 0.0, 0.0};
};

/// Rotation matrix of a quaternion (w, x, y, z). The input is normalized first;
/// non-finite or zero input throws kInvalidInput.
Mat3 quat_to_matrix(const Vec4& wxyz);
inline Mat3 quat_to_matrix(const Rotation& q) { return quat_to_matrix(q.coeffs()); }

/// Partial derivatives dR/dw, dR/dx, dR/dy, dR/dz of the unit-quaternion
/// rotation formula at q.
std::array<Mat3, 4> quat_matrix_jacobian(const Vec4& wxyz);

/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

/// Object pose: rotation, translation in meters and per-axis object size in
/// meters. The similarity scale used for canonical coordinates is |scale|.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();
  Vec3 scale = Vec3::Ones();

  double scalar_scale() const { return scale.norm(); }
};

void validate(const Pose& pose);

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  Vec2 project(const Vec3& p) const { return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy}; }
  Vec3 unproject(double u, double v, double depth) const {
    return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  }
};

void validate(const Intrinsics& k);

struct PointCloud {
  Points points;
  Points colors;  ///< empty, or one rgb triple in [0, 1] per point
  bool has_colors() const { return !colors.empty(); }
};

void validate(const PointCloud& cloud);

/// Canonical-space coordinates, index-aligned with a PointCloud.
struct NocsMap {
  Points coords;
  /// Builds a map with every coordinate clamped into [-1, 1].
  static NocsMap clamped(Points coords);
};

struct PixelIndex {
  int u = 0;
  int v = 0;
};

struct Backprojection {
  PointCloud cloud;
  std::vector<PixelIndex> pixels;  ///< source pixel of each point
};

struct BackprojectOptions {
  size_t sample_count = 1024;
  uint64_t seed = 0;
};

/// Lifts masked pixels with depth > 0 into camera-frame points. When there
/// are more valid pixels than sample_count a seeded uniform subset (without
/// replacement, raster order preserved) is kept. Colors are attached when rgb
/// is given. Throws kEmptyForeground when no pixel is valid.
Backprojection backproject(const DepthImage& depth, const Intrinsics& k,
                           const BinaryMask& mask, const BackprojectOptions& options = {},
                           const RgbImage* rgb = nullptr);

struct ImageCenterDepth {
  double o_x = 0.0;
  double o_y = 0.0;
  double t_z = 1.0;
};

/// T = t_z * K^-1 * (o_x, o_y, 1). Throws kInvalidDepth for t_z <= 0.
Vec3 decouple_translation(double o_x, double o_y, double t_z, const Intrinsics& k);
inline Vec3 decouple_translation(const ImageCenterDepth& c, const Intrinsics& k) {
  return decouple_translation(c.o_x, c.o_y, c.t_z, k);
}
/// Inverse of decouple_translation. Throws kInvalidDepth for T.z <= 0.
ImageCenterDepth project_translation(const Vec3& translation, const Intrinsics& k);

/// x' = s R x + T with s = |S| when apply_scale, else x' = R x + T.
Points transform_points(const Pose& pose, std::span<const Vec3> points, bool apply_scale);

}  // namespace posekit
