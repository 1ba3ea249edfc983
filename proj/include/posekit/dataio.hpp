#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "posekit/geometry.hpp"
#include "posekit/image.hpp"
#include "posekit/mesh.hpp"

namespace posekit {

inline constexpr int kAnnotationSchemaVersion = 1;

/// One annotated frame as stored on disk. Values are kept verbatim so a
/// write/read cycle is bit-identical; use to_pose for computation.
struct PoseRecord {
  std::array<double, 4> quaternion{1, 0, 0, 0};  ///< w, x, y, z
  std::array<double, 3> translation_m{0, 0, 0};
  std::array<double, 3> size_m{1, 1, 1};
  bool is_keyframe = false;

  Pose to_pose() const;
  static PoseRecord from_pose(const Pose& pose, bool is_keyframe);
  bool operator==(const PoseRecord&) const = default;
};

/// Structural checks on a pose payload: finite values, unit quaternion
/// within 1e-6, positive size. Returns an empty string when valid, else a
/// message naming the offending field.
std::string check_pose_record(const PoseRecord& r);

/// Throws kIo when the file cannot be opened and kParse on malformed JSON.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

nlohmann::json to_json(const PoseRecord& r);
/// Throws kParse on missing or mistyped fields.
PoseRecord pose_record_from_json(const nlohmann::json& j);

struct Annotations {
  int schema_version = kAnnotationSchemaVersion;
  std::map<int, PoseRecord> frames;
  std::vector<int> unpropagated;
  std::map<int, double> drift_rms;

  std::map<int, Pose> keyframe_poses() const;
  bool operator==(const Annotations&) const = default;
};

nlohmann::json to_json(const Annotations& a);
Annotations annotations_from_json(const nlohmann::json& j);
Annotations read_annotations(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over the target.
void write_annotations_atomic(const std::filesystem::path& path, const Annotations& a);

nlohmann::json to_json(const Intrinsics& k);
/// Keys fx, fy, cx, cy, width, height. Throws kParse.
Intrinsics intrinsics_from_json(const nlohmann::json& j);
Intrinsics read_intrinsics(const std::filesystem::path& path);

nlohmann::json pose_to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& j);

struct Frame {
  RgbImage rgb;
  DepthImage depth;
  BinaryMask mask;
};

struct FramePaths {
  std::filesystem::path rgb;
  std::filesystem::path depth;
  std::filesystem::path mask;
};

/// A recorded or generated video of one object.
///
/// Directory layout:
///   meta.json          {"id", "category"}
///   intrinsics.json    {"fx", "fy", "cx", "cy", "width", "height"}
///   rgb/NNNNNN.png     8-bit RGB
///   depth/NNNNNN.png   16-bit gray, millimeters
///   mask/NNNNNN.png    8-bit gray, {0, 255}
///   annotations.json   keyframe and propagated poses
struct VideoRecord {
  std::string id;
  std::string category;
  Intrinsics intrinsics;
  std::filesystem::path root;
  std::vector<FramePaths> paths;
  std::vector<Frame> frames;
  Annotations annotations;

  size_t frame_count() const { return frames.size(); }
};

std::string frame_name(int index);

/// Loads and validates every frame. Throws kContiguity naming the first
/// missing frame, kFormat on wrong PNG formats or resolution mismatch,
/// kParse on unreadable JSON.
VideoRecord load_video(const std::filesystem::path& dir);
void write_video(const VideoRecord& video, const std::filesystem::path& dir);

/// Only meta.json and the frame count; no image decoding.
struct VideoSummary {
  std::string id;
  std::string category;
  size_t frame_count = 0;
};
VideoSummary summarize_video(const std::filesystem::path& dir);

struct NoiseModel {
  double depth_sigma_mm = 0.0;
  double outlier_fraction = 0.0;  ///< foreground depth pixels replaced by uniform depths
};

struct SceneSpec {
  std::string id = "synthetic";
  std::string category = "object";
  Mesh mesh;                ///< canonical frame
  std::vector<Pose> trajectory;
  Intrinsics intrinsics;
  NoiseModel noise;
  int keyframe_stride = 50;  ///< ground-truth keyframes stored in the annotations; 0 for none
};

void validate(const SceneSpec& spec);

/// Canonical coordinates per foreground pixel: 3 channels, NaN elsewhere.
using NocsImage = Image<double>;

struct SyntheticVideo {
  VideoRecord video;
  std::vector<Pose> ground_truth;
  std::vector<NocsImage> nocs;
};

/// Ray-cast renders of the posed mesh. Masks are the ray-hit footprint; the
/// NOCS image inverts the pose on the noise-free back-projected depth; the
/// stored depth adds seeded Gaussian noise and outliers. Colors encode the
/// canonical coordinate. The video's annotations hold the ground-truth poses
/// of the keyframe schedule. Throws kSpec naming an empty frame.
SyntheticVideo synth_generate(const SceneSpec& spec, uint64_t seed);

/// Picks the canonical coordinates at the given pixels.
NocsMap sample_nocs(const NocsImage& nocs, const std::vector<PixelIndex>& pixels);

/// Straight-line trajectory: rotation about `axis` by `deg_per_frame` and a
/// translation step of `step_m` per frame, starting at `start`.
std::vector<Pose> linear_trajectory(const Pose& start, int frames, const Vec3& axis,
                                    double deg_per_frame, const Vec3& step_m);

}  // namespace posekit
