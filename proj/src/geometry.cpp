#include "posekit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <random>

#include "posekit/error.hpp"

namespace posekit {
namespace {

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

Rotation::Rotation(double w, double x, double y, double z) {
  Vec4 q(w, x, y, z);
  require(q.allFinite(), ErrorCode::kInvalidInput, "quaternion has non-finite entries");
  const double n = q.norm();
  require(n > 1e-300, ErrorCode::kInvalidInput, "quaternion has zero norm");
  q_ = q / n;
}

Rotation Rotation::from_matrix(const Mat3& m) {
  require(m.allFinite(), ErrorCode::kInvalidInput, "rotation matrix has non-finite entries");
  Eigen::Quaterniond q(m);
  return Rotation(q.w(), q.x(), q.y(), q.z());
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  require(n > 0 && std::isfinite(angle_rad), ErrorCode::kInvalidInput, "invalid axis-angle");
  const Vec3 a = axis / n * std::sin(angle_rad / 2);
  return Rotation(std::cos(angle_rad / 2), a.x(), a.y(), a.z());
}

Mat3 Rotation::matrix() const { return quat_to_matrix(q_); }

Rotation Rotation::operator*(const Rotation& rhs) const {
  const double w1 = w(), x1 = x(), y1 = y(), z1 = z();
  const double w2 = rhs.w(), x2 = rhs.x(), y2 = rhs.y(), z2 = rhs.z();
  return Rotation(w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                  w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                  w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                  w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2);
}

Mat3 quat_to_matrix(const Vec4& wxyz) {
  require(wxyz.allFinite(), ErrorCode::kInvalidInput, "quaternion has non-finite entries");
  const double n = wxyz.norm();
  require(n > 1e-300, ErrorCode::kInvalidInput, "quaternion has zero norm");
  const Vec4 q = wxyz / n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

std::array<Mat3, 4> quat_matrix_jacobian(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
  return d;
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a * b.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

void validate(const Pose& pose) {
  require(finite(pose.translation) && finite(pose.scale), ErrorCode::kInvalidInput,
          "pose has non-finite entries");
  require((pose.scale.array() > 0).all(), ErrorCode::kInvalidInput,
          "pose scale components must be positive");
}

void validate(const Intrinsics& k) {
  require(std::isfinite(k.fx) && std::isfinite(k.fy) && k.fx > 0 && k.fy > 0,
          ErrorCode::kInvalidInput, "focal lengths must be positive");
  require(k.width > 0 && k.height > 0, ErrorCode::kInvalidInput, "image size must be positive");
  require(k.cx > 0 && k.cx < k.width && k.cy > 0 && k.cy < k.height,
          ErrorCode::kInvalidInput, "principal point must lie inside the image");
}

void validate(const PointCloud& cloud) {
  require(!cloud.points.empty(), ErrorCode::kInvalidInput, "point cloud is empty");
  for (const Vec3& p : cloud.points) {
    require(finite(p), ErrorCode::kInvalidInput, "point cloud has non-finite points");
  }
  require(cloud.colors.empty() || cloud.colors.size() == cloud.points.size(),
          ErrorCode::kInvalidInput, "color count does not match point count");
}

NocsMap NocsMap::clamped(Points coords) {
  for (Vec3& c : coords) {
    require(finite(c), ErrorCode::kInvalidInput, "nocs map has non-finite coordinates");
    c = c.cwiseMax(-1.0).cwiseMin(1.0);
  }
  return NocsMap{std::move(coords)};
}

Backprojection backproject(const DepthImage& depth, const Intrinsics& k, const BinaryMask& mask,
                           const BackprojectOptions& options, const RgbImage* rgb) {
  validate(k);
  require(depth.same_size(mask.width, mask.height), ErrorCode::kInvalidInput,
          "depth and mask resolutions differ");
  require(!rgb || (rgb->same_size(depth.width, depth.height) && rgb->channels == 3),
          ErrorCode::kInvalidInput, "rgb resolution differs from depth");
  require(options.sample_count >= 1, ErrorCode::kInvalidInput, "sample_count must be >= 1");

  std::vector<PixelIndex> valid;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (mask.at(u, v) && depth.at(u, v) > 0) valid.push_back({u, v});
    }
  }
  require(!valid.empty(), ErrorCode::kEmptyForeground, "no masked pixel has valid depth");

  Backprojection out;
  if (valid.size() > options.sample_count) {
    std::mt19937_64 rng(options.seed);
    out.pixels.reserve(options.sample_count);
    std::sample(valid.begin(), valid.end(), std::back_inserter(out.pixels),
                options.sample_count, rng);
  } else {
    out.pixels = std::move(valid);
  }

  out.cloud.points.reserve(out.pixels.size());
  for (const PixelIndex& px : out.pixels) {
    const double z = depth.at(px.u, px.v) / 1000.0;
    out.cloud.points.push_back(k.unproject(px.u, px.v, z));
    if (rgb) {
      out.cloud.colors.emplace_back(rgb->at(px.u, px.v, 0) / 255.0, rgb->at(px.u, px.v, 1) / 255.0,
                                    rgb->at(px.u, px.v, 2) / 255.0);
    }
  }
  return out;
}

Vec3 decouple_translation(double o_x, double o_y, double t_z, const Intrinsics& k) {
  require(std::isfinite(t_z) && t_z > 0, ErrorCode::kInvalidDepth, "t_z must be positive");
  return k.unproject(o_x, o_y, t_z);
}

ImageCenterDepth project_translation(const Vec3& t, const Intrinsics& k) {
  require(finite(t) && t.z() > 0, ErrorCode::kInvalidDepth, "translation must be in front of the camera");
  const Vec2 o = k.project(t);
  return {o.x(), o.y(), t.z()};
}

Points transform_points(const Pose& pose, std::span<const Vec3> points, bool apply_scale) {
  const Mat3 r = pose.rotation.matrix();
  const double s = apply_scale ? pose.scalar_scale() : 1.0;
  Points out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(s * (r * p) + pose.translation);
  return out;
}

}  // namespace posekit
