#include "posekit/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "posekit/error.hpp"
#include "posekit/umeyama.hpp"

namespace posekit {

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  return {rotation * other.rotation, rotation.matrix() * other.translation + translation};
}

RigidTransform RigidTransform::inverse() const {
  const Rotation inv = rotation.inverse();
  return {inv, -(inv.matrix() * translation)};
}

Pose RigidTransform::apply(const Pose& pose) const {
  Pose out = pose;
  out.rotation = rotation * pose.rotation;
  out.translation = apply(pose.translation);
  return out;
}

SpatialHashGrid::SpatialHashGrid(const Points& points, double cell_size) {
  require(cell_size > 0, ErrorCode::kInvalidInput, "cell size must be positive");
  inv_cell_ = 1.0 / cell_size;
  for (size_t i = 0; i < points.size(); ++i) {
    const auto c = cell_of(points[i]);
    cells_[key(c[0], c[1], c[2])].push_back(static_cast<int>(i));
  }
}

std::array<int64_t, 3> SpatialHashGrid::cell_of(const Vec3& p) const {
  return {static_cast<int64_t>(std::floor(p.x() * inv_cell_)),
          static_cast<int64_t>(std::floor(p.y() * inv_cell_)),
          static_cast<int64_t>(std::floor(p.z() * inv_cell_))};
}

uint64_t SpatialHashGrid::key(int64_t x, int64_t y, int64_t z) {
  // 21 bits per axis, two's complement wrapped.
  constexpr uint64_t mask = (uint64_t{1} << 21) - 1;
  return (static_cast<uint64_t>(x) & mask) | ((static_cast<uint64_t>(y) & mask) << 21) |
         ((static_cast<uint64_t>(z) & mask) << 42);
}

namespace {

struct Match {
  int src = -1;
  int dst = -1;
  double cost = 0.0;
};

double spatial_rms(const RigidTransform& t, const std::vector<Match>& matches, const PointCloud& src,
                   const PointCloud& dst) {
  const Mat3 r = t.rotation.matrix();
  double sum = 0.0;
  for (const Match& m : matches) sum += (r * src.points[m.src] + t.translation - dst.points[m.dst]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(matches.size()));
}

}  // namespace

IcpResult icp_colored(const PointCloud& src, const PointCloud& dst, const RigidTransform& init,
                      const IcpConfig& cfg) {
  validate(src);
  validate(dst);
  require(cfg.max_iters >= 1 && cfg.correspondence_radius > 0 && cfg.trim_fraction >= 0 &&
              cfg.trim_fraction < 1 && cfg.color_weight >= 0,
          ErrorCode::kInvalidInput, "invalid ICP configuration");
  require(src.points.size() >= cfg.min_points && dst.points.size() >= cfg.min_points,
          ErrorCode::kRegistrationFailed, "both clouds need at least " + std::to_string(cfg.min_points) + " points");

  const bool use_color = src.has_colors() && dst.has_colors() && cfg.color_weight > 0;
  const SpatialHashGrid grid(dst.points, cfg.correspondence_radius);
  const double radius2 = cfg.correspondence_radius * cfg.correspondence_radius;
  const long n = static_cast<long>(src.points.size());

  IcpResult result;
  result.transform = init;
  std::vector<Match> nearest(src.points.size());
  double prev_rms = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= cfg.max_iters; ++it) {
    const Mat3 r = result.transform.rotation.matrix();
    const Vec3 t = result.transform.translation;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
      const Vec3 p = r * src.points[i] + t;
      Match best{static_cast<int>(i), -1, std::numeric_limits<double>::infinity()};
      grid.for_each_near(p, [&](int j) {
        const double d2 = (p - dst.points[j]).squaredNorm();
        if (d2 > radius2) return;
        const double cost = use_color ? d2 + cfg.color_weight * (src.colors[i] - dst.colors[j]).squaredNorm() : d2;
        if (cost < best.cost || (cost == best.cost && j < best.dst)) best = {static_cast<int>(i), j, cost};
      });
      nearest[i] = best;
    }

    std::vector<Match> matches;
    for (const Match& m : nearest) {
      if (m.dst >= 0) matches.push_back(m);
    }
    std::stable_sort(matches.begin(), matches.end(),
                     [](const Match& a, const Match& b) { return a.cost < b.cost; });
    const size_t keep = static_cast<size_t>(
        std::ceil((1.0 - cfg.trim_fraction) * static_cast<double>(matches.size())));
    matches.resize(std::min(keep, matches.size()));
    require(matches.size() >= cfg.min_correspondences, ErrorCode::kRegistrationFailed,
            "only " + std::to_string(matches.size()) + " correspondences at iteration " + std::to_string(it));

    Points a, b;
    a.reserve(matches.size());
    b.reserve(matches.size());
    for (const Match& m : matches) {
      a.push_back(src.points[m.src]);
      b.push_back(dst.points[m.dst]);
    }
    IcpIteration stats;
    stats.correspondences = matches.size();
    stats.rms_before = spatial_rms(result.transform, matches, src, dst);
    Similarity rigid;
    try {
      rigid = estimate_similarity(a, b, true);
    } catch (const Error& e) {
      fail(ErrorCode::kRegistrationFailed, std::string("rigid solve failed: ") + e.what());
    }
    result.transform = {Rotation::from_matrix(rigid.rotation), rigid.translation};
    stats.rms_after = spatial_rms(result.transform, matches, src, dst);
    result.history.push_back(stats);
    result.iterations = it;
    result.rms = stats.rms_after;
    if (std::abs(prev_rms - stats.rms_after) < cfg.rms_tolerance) break;
    prev_rms = stats.rms_after;
  }
  return result;
}

std::vector<int> keyframe_schedule(size_t frame_count, int stride) {
  require(stride >= 1, ErrorCode::kInvalidInput, "keyframe stride must be >= 1");
  std::vector<int> out;
  for (size_t f = 0; f < frame_count; f += static_cast<size_t>(stride)) out.push_back(static_cast<int>(f));
  return out;
}

PropagationResult propagate(const VideoRecord& video, const std::map<int, Pose>& keyframes,
                            const PropagationConfig& cfg, const ProgressCallback& progress) {
  require(!keyframes.empty(), ErrorCode::kInvalidInput, "propagation needs at least one keyframe");
  require(cfg.keyframe_stride >= 1, ErrorCode::kInvalidInput, "keyframe stride must be >= 1");
  const int total = static_cast<int>(video.frame_count());
  for (const auto& [f, pose] : keyframes) {
    require(f >= 0 && f < total, ErrorCode::kInvalidInput, "keyframe " + std::to_string(f) + " is out of range");
    validate(pose);
  }

  // Object clouds for every frame, independent of each other.
  std::vector<std::optional<PointCloud>> clouds(video.frame_count());
#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < total; ++f) {
    const Frame& fr = video.frames[f];
    try {
      BackprojectOptions opt;
      opt.sample_count = cfg.cloud_points;
      opt.seed = cfg.seed + static_cast<uint64_t>(f);
      clouds[f] = backproject(fr.depth, video.intrinsics, fr.mask, opt, &fr.rgb).cloud;
    } catch (const Error&) {
      clouds[f].reset();
    }
  }

  PropagationResult out;
  int done = 0;
  auto tick = [&] {
    ++done;
    if (progress) progress(done, total);
  };
  for (int f = 0; f < keyframes.begin()->first; ++f) {
    out.unpropagated.push_back(f);
    tick();
  }

  for (auto it = keyframes.begin(); it != keyframes.end(); ++it) {
    const int k = it->first;
    const Pose& key_pose = it->second;
    const int end = std::next(it) == keyframes.end() ? total : std::next(it)->first;
    out.poses[k] = key_pose;
    out.drift_rms[k] = 0.0;
    tick();

    RigidTransform chained;  // keyframe camera frame -> current frame
    RigidTransform last_link;
    bool broken = false;
    for (int f = k + 1; f < end; ++f) {
      if (!broken) {
        try {
          require(clouds[f - 1].has_value() && clouds[f].has_value(), ErrorCode::kRegistrationFailed,
                  "frame has no usable foreground");
          const IcpResult link = icp_colored(*clouds[f - 1], *clouds[f], last_link, cfg.icp);
          last_link = link.transform;
          chained = link.transform * chained;
          out.poses[f] = chained.apply(key_pose);
          out.drift_rms[f] = link.rms;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kRegistrationFailed) throw;
          broken = true;
        }
      }
      if (broken) out.unpropagated.push_back(f);
      tick();
    }
  }
  return out;
}

Annotations merge_propagation(const Annotations& current, const PropagationResult& result) {
  Annotations next;
  next.schema_version = current.schema_version;
  for (const auto& [f, r] : current.frames) {
    if (r.is_keyframe) next.frames[f] = r;
  }
  for (const auto& [f, pose] : result.poses) {
    if (!next.frames.contains(f)) next.frames[f] = PoseRecord::from_pose(pose, false);
  }
  next.unpropagated = result.unpropagated;
  next.drift_rms = result.drift_rms;
  return next;
}

}  // namespace posekit
