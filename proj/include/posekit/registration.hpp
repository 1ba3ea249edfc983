#pragma once

#include <functional>
#include <map>
#include <unordered_map>
#include <vector>

#include "posekit/dataio.hpp"
#include "posekit/geometry.hpp"

namespace posekit {

/// x -> R x + t.
struct RigidTransform {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation.matrix() * p + translation; }
  /// (this * other)(x) = this(other(x)).
  RigidTransform operator*(const RigidTransform& other) const;
  RigidTransform inverse() const;
  Pose apply(const Pose& pose) const;
};

/// Uniform hash grid over a fixed point set for radius queries.
class SpatialHashGrid {
 public:
  SpatialHashGrid(const Points& points, double cell_size);

  /// Calls visit(index) for every point in the 27 cells around p. Callers
  /// filter by distance.
  template <typename Visit>
  void for_each_near(const Vec3& p, Visit&& visit) const {
    const auto c = cell_of(p);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(key(c[0] + dx, c[1] + dy, c[2] + dz));
          if (it == cells_.end()) continue;
          for (int i : it->second) visit(i);
        }
  }

 private:
  std::array<int64_t, 3> cell_of(const Vec3& p) const;
  static uint64_t key(int64_t x, int64_t y, int64_t z);

  double inv_cell_;
  std::unordered_map<uint64_t, std::vector<int>> cells_;
};

struct IcpConfig {
  int max_iters = 50;
  double correspondence_radius = 0.05;  ///< meters
  double trim_fraction = 0.2;
  double color_weight = 0.1;
  double rms_tolerance = 1e-6;
  size_t min_correspondences = 10;
  size_t min_points = 50;
};

struct IcpIteration {
  size_t correspondences = 0;  ///< after trimming
  double rms_before = 0.0;     ///< trimmed set, transform entering the iteration
  double rms_after = 0.0;      ///< same set, after the re-solve
};

struct IcpResult {
  RigidTransform transform;
  double rms = 0.0;
  int iterations = 0;
  std::vector<IcpIteration> history;
};

/// Trimmed point-to-point ICP with a color-augmented correspondence metric
/// |dx|^2 + w |dc|^2 among neighbors within the radius. Colors are ignored
/// when either cloud has none. Throws kRegistrationFailed when fewer than
/// min_correspondences survive.
IcpResult icp_colored(const PointCloud& src, const PointCloud& dst, const RigidTransform& init,
                      const IcpConfig& cfg = {});

struct PropagationConfig {
  int keyframe_stride = 50;
  IcpConfig icp;
  size_t cloud_points = 4096;
  uint64_t seed = 0;
};

struct PropagationResult {
  std::map<int, Pose> poses;
  std::map<int, double> drift_rms;  ///< ICP rms of the link into each frame
  std::vector<int> unpropagated;
};

/// Frames a human should annotate: 0, stride, 2 * stride, ...
std::vector<int> keyframe_schedule(size_t frame_count, int stride);

using ProgressCallback = std::function<void(int frames_done, int frames_total)>;

/// Chains frame-to-frame registrations from each keyframe up to the next.
/// A failed link marks that frame and the rest of its segment
/// unpropagated; the next keyframe starts a fresh chain.
PropagationResult propagate(const VideoRecord& video, const std::map<int, Pose>& keyframes,
                            const PropagationConfig& cfg = {},
                            const ProgressCallback& progress = {});

/// Annotation set after a propagation run: the keyframe records of `current`
/// verbatim, every other frame from the result.
Annotations merge_propagation(const Annotations& current, const PropagationResult& result);

}  // namespace posekit
