#include "posekit/dataio.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "posekit/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace posekit {

Pose PoseRecord::to_pose() const {
  Pose p;
  p.rotation = Rotation(quaternion[0], quaternion[1], quaternion[2], quaternion[3]);
  p.translation = Vec3(translation_m[0], translation_m[1], translation_m[2]);
  p.scale = Vec3(size_m[0], size_m[1], size_m[2]);
  return p;
}

PoseRecord PoseRecord::from_pose(const Pose& pose, bool is_keyframe) {
  PoseRecord r;
  const Vec4& q = pose.rotation.coeffs();
  r.quaternion = {q[0], q[1], q[2], q[3]};
  r.translation_m = {pose.translation.x(), pose.translation.y(), pose.translation.z()};
  r.size_m = {pose.scale.x(), pose.scale.y(), pose.scale.z()};
  r.is_keyframe = is_keyframe;
  return r;
}

std::string check_pose_record(const PoseRecord& r) {
  auto finite = [](const auto& a) { return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); }); };
  if (!finite(r.quaternion)) return "quaternion has non-finite components";
  if (!finite(r.translation_m)) return "translation_m has non-finite components";
  if (!finite(r.size_m)) return "size_m has non-finite components";
  double n2 = 0.0;
  for (double v : r.quaternion) n2 += v * v;
  const double norm = std::sqrt(n2);
  if (std::abs(norm - 1.0) > 1e-6) {
    std::ostringstream ss;
    ss << std::setprecision(17) << "quaternion norm is " << norm << "; divide each component by the norm";
    return ss.str();
  }
  for (double v : r.size_m) {
    if (v <= 0) return "size_m components must be positive";
  }
  return {};
}

json to_json(const PoseRecord& r) {
  return {{"quaternion", r.quaternion},
          {"translation_m", r.translation_m},
          {"size_m", r.size_m},
          {"is_keyframe", r.is_keyframe}};
}

namespace {

template <size_t N>
std::array<double, N> number_array(const json& j, const char* key) {
  require(j.is_object() && j.contains(key), ErrorCode::kParse, std::string("missing field '") + key + "'");
  const json& a = j.at(key);
  require(a.is_array() && a.size() == N, ErrorCode::kParse,
          std::string("field '") + key + "' must be an array of " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (size_t i = 0; i < N; ++i) {
    require(a[i].is_number(), ErrorCode::kParse, std::string("field '") + key + "' must contain numbers");
    out[i] = a[i].get<double>();
  }
  return out;
}

double number(const json& j, const char* key) {
  require(j.is_object() && j.contains(key) && j.at(key).is_number(), ErrorCode::kParse,
          std::string("missing or non-numeric field '") + key + "'");
  return j.at(key).get<double>();
}

std::string text(const json& j, const char* key) {
  require(j.is_object() && j.contains(key) && j.at(key).is_string(), ErrorCode::kParse,
          std::string("missing or non-string field '") + key + "'");
  return j.at(key).get<std::string>();
}

int frame_key(const std::string& s) {
  size_t used = 0;
  int v = -1;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
  }
  require(used == s.size() && v >= 0, ErrorCode::kParse, "frame key '" + s + "' is not a frame index");
  return v;
}

}  // namespace

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

PoseRecord pose_record_from_json(const json& j) {
  require(j.is_object(), ErrorCode::kParse, "pose must be a JSON object");
  PoseRecord r;
  r.quaternion = number_array<4>(j, "quaternion");
  r.translation_m = number_array<3>(j, "translation_m");
  r.size_m = number_array<3>(j, "size_m");
  if (j.contains("is_keyframe")) {
    require(j.at("is_keyframe").is_boolean(), ErrorCode::kParse, "field 'is_keyframe' must be a boolean");
    r.is_keyframe = j.at("is_keyframe").get<bool>();
  }
  return r;
}

std::map<int, Pose> Annotations::keyframe_poses() const {
  std::map<int, Pose> out;
  for (const auto& [f, r] : frames) {
    if (r.is_keyframe) out[f] = r.to_pose();
  }
  return out;
}

json to_json(const Annotations& a) {
  json frames = json::object();
  for (const auto& [f, r] : a.frames) frames[std::to_string(f)] = to_json(r);
  json drift = json::object();
  for (const auto& [f, v] : a.drift_rms) drift[std::to_string(f)] = v;
  return {{"schema_version", a.schema_version},
          {"frames", frames},
          {"unpropagated", a.unpropagated},
          {"drift_rms", drift}};
}

Annotations annotations_from_json(const json& j) {
  require(j.is_object(), ErrorCode::kParse, "annotations must be a JSON object");
  Annotations a;
  require(j.contains("schema_version") && j.at("schema_version").is_number_integer(), ErrorCode::kParse,
          "missing schema_version");
  a.schema_version = j.at("schema_version").get<int>();
  require(a.schema_version == kAnnotationSchemaVersion, ErrorCode::kParse,
          "unsupported schema_version " + std::to_string(a.schema_version));
  if (j.contains("frames")) {
    require(j.at("frames").is_object(), ErrorCode::kParse, "'frames' must be an object");
    for (const auto& [k, v] : j.at("frames").items()) a.frames[frame_key(k)] = pose_record_from_json(v);
  }
  if (j.contains("unpropagated")) {
    require(j.at("unpropagated").is_array(), ErrorCode::kParse, "'unpropagated' must be an array");
    for (const json& v : j.at("unpropagated")) {
      require(v.is_number_integer(), ErrorCode::kParse, "'unpropagated' must hold frame indices");
      a.unpropagated.push_back(v.get<int>());
    }
  }
  if (j.contains("drift_rms")) {
    require(j.at("drift_rms").is_object(), ErrorCode::kParse, "'drift_rms' must be an object");
    for (const auto& [k, v] : j.at("drift_rms").items()) {
      require(v.is_number(), ErrorCode::kParse, "'drift_rms' values must be numbers");
      a.drift_rms[frame_key(k)] = v.get<double>();
    }
  }
  return a;
}

Annotations read_annotations(const fs::path& path) { return annotations_from_json(read_json_file(path)); }

void write_annotations_atomic(const fs::path& path, const Annotations& a) {
  static std::atomic<uint64_t> counter{0};
  std::ostringstream suffix;
  suffix << ".tmp-" << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '-' << counter++;
  const fs::path tmp = path.string() + suffix.str();
  write_json_file(tmp, to_json(a));
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::kIo, "cannot replace " + path.string());
  }
}

json to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics k;
  k.fx = number(j, "fx");
  k.fy = number(j, "fy");
  k.cx = number(j, "cx");
  k.cy = number(j, "cy");
  require(j.contains("width") && j.at("width").is_number_integer() && j.contains("height") &&
              j.at("height").is_number_integer(),
          ErrorCode::kParse, "intrinsics need integer width and height");
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  try {
    validate(k);
  } catch (const Error& e) {
    fail(ErrorCode::kParse, std::string("invalid intrinsics: ") + e.what());
  }
  return k;
}

Intrinsics read_intrinsics(const fs::path& path) {
  try {
    return intrinsics_from_json(read_json_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

json pose_to_json(const Pose& pose) {
  json j = to_json(PoseRecord::from_pose(pose, false));
  j.erase("is_keyframe");
  return j;
}

Pose pose_from_json(const json& j) {
  const PoseRecord r = pose_record_from_json(j);
  const std::string problem = check_pose_record(r);
  require(problem.empty(), ErrorCode::kInvalidInput, problem);
  return r.to_pose();
}

std::string frame_name(int index) {
  std::ostringstream ss;
  ss << std::setw(6) << std::setfill('0') << index << ".png";
  return ss.str();
}

namespace {

constexpr const char* kStreams[] = {"rgb", "depth", "mask"};

/// Frame indices present in one stream directory.
std::set<int> stream_indices(const fs::path& dir) {
  std::set<int> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() != 10 || entry.path().extension() != ".png") continue;
    const std::string stem = name.substr(0, 6);
    if (!std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    out.insert(std::stoi(stem));
  }
  return out;
}

void read_meta(const fs::path& dir, std::string& id, std::string& category) {
  const json meta = read_json_file(dir / "meta.json");
  try {
    id = text(meta, "id");
    category = text(meta, "category");
  } catch (const Error& e) {
    fail(ErrorCode::kParse, (dir / "meta.json").string() + ": " + e.what());
  }
}

}  // namespace

VideoRecord load_video(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::kIo, "no video directory at " + dir.string());
  VideoRecord video;
  video.root = dir;
  read_meta(dir, video.id, video.category);
  video.intrinsics = read_intrinsics(dir / "intrinsics.json");

  int count = 0;
  for (const char* s : kStreams) {
    const std::set<int> idx = stream_indices(dir / s);
    if (!idx.empty()) count = std::max(count, *idx.rbegin() + 1);
  }
  require(count > 0, ErrorCode::kContiguity, "video " + dir.string() + " has no frames");
  for (int f = 0; f < count; ++f) {
    FramePaths p{dir / "rgb" / frame_name(f), dir / "depth" / frame_name(f), dir / "mask" / frame_name(f)};
    for (const fs::path* path : {&p.rgb, &p.depth, &p.mask}) {
      require(fs::exists(*path), ErrorCode::kContiguity,
              "frame " + frame_name(f).substr(0, 6) + " is missing (" + path->string() + ")");
    }
    video.paths.push_back(std::move(p));
  }

  video.frames.resize(count);
  const int w = video.intrinsics.width, h = video.intrinsics.height;
  for (int f = 0; f < count; ++f) {
    Frame& fr = video.frames[f];
    const FramePaths& p = video.paths[f];
    fr.rgb = read_rgb_png(p.rgb);
    fr.depth = read_depth_png(p.depth);
    fr.mask = read_mask_png(p.mask);
    for (const auto& [path, ok] : {std::pair{&p.rgb, fr.rgb.same_size(w, h)},
                                   std::pair{&p.depth, fr.depth.same_size(w, h)},
                                   std::pair{&p.mask, fr.mask.same_size(w, h)}}) {
      require(ok, ErrorCode::kFormat,
              path->string() + " does not match the intrinsics resolution " + std::to_string(w) + "x" +
                  std::to_string(h));
    }
  }

  const fs::path ann = dir / "annotations.json";
  if (fs::exists(ann)) video.annotations = read_annotations(ann);
  return video;
}

void write_video(const VideoRecord& video, const fs::path& dir) {
  for (const char* s : kStreams) fs::create_directories(dir / s);
  write_json_file(dir / "meta.json", {{"id", video.id}, {"category", video.category}});
  write_json_file(dir / "intrinsics.json", to_json(video.intrinsics));
  for (size_t f = 0; f < video.frames.size(); ++f) {
    const std::string name = frame_name(static_cast<int>(f));
    write_rgb_png(dir / "rgb" / name, video.frames[f].rgb);
    write_depth_png(dir / "depth" / name, video.frames[f].depth);
    write_mask_png(dir / "mask" / name, video.frames[f].mask);
  }
  write_annotations_atomic(dir / "annotations.json", video.annotations);
}

VideoSummary summarize_video(const fs::path& dir) {
  VideoSummary s;
  read_meta(dir, s.id, s.category);
  const std::set<int> idx = stream_indices(dir / "rgb");
  s.frame_count = idx.empty() ? 0 : static_cast<size_t>(*idx.rbegin() + 1);
  return s;
}

void validate(const SceneSpec& spec) {
  require(!spec.trajectory.empty(), ErrorCode::kSpec, "trajectory needs at least one pose");
  require(!spec.mesh.faces.empty(), ErrorCode::kSpec, "scene mesh has no faces");
  require(spec.noise.depth_sigma_mm >= 0 && std::isfinite(spec.noise.depth_sigma_mm), ErrorCode::kSpec,
          "depth noise must be >= 0");
  require(spec.noise.outlier_fraction >= 0 && spec.noise.outlier_fraction <= 1, ErrorCode::kSpec,
          "outlier fraction must be in [0, 1]");
  require(spec.keyframe_stride >= 0, ErrorCode::kSpec, "keyframe stride must be >= 0");
  try {
    validate(spec.mesh);
    validate(spec.intrinsics);
    for (const Pose& p : spec.trajectory) validate(p);
  } catch (const Error& e) {
    fail(ErrorCode::kSpec, e.what());
  }
}

namespace {

struct Triangle {
  Vec3 a, e1, e2;
  double u_min, u_max, v_min, v_max;
};

/// Nearest ray hit depth per pixel (z of the hit, camera looks along +z);
/// +inf where the ray misses. Pixel (u, v) casts through the point (u, v).
Image<double> cast_depth(const Mesh& mesh, const Pose& pose, const Intrinsics& k) {
  const Points world = transform_points(pose, mesh.vertices, true);
  std::vector<Triangle> tris;
  tris.reserve(mesh.faces.size());
  for (const Face& f : mesh.faces) {
    const Vec3& a = world[f[0]];
    const Vec3& b = world[f[1]];
    const Vec3& c = world[f[2]];
    Triangle t{a, b - a, c - a, 0, 0, 0, 0};
    if (a.z() > 0 && b.z() > 0 && c.z() > 0) {
      const Vec2 pa = k.project(a), pb = k.project(b), pc = k.project(c);
      t.u_min = std::min({pa.x(), pb.x(), pc.x()}) - 1;
      t.u_max = std::max({pa.x(), pb.x(), pc.x()}) + 1;
      t.v_min = std::min({pa.y(), pb.y(), pc.y()}) - 1;
      t.v_max = std::max({pa.y(), pb.y(), pc.y()}) + 1;
    } else if (a.z() <= 0 && b.z() <= 0 && c.z() <= 0) {
      continue;
    } else {
      t.u_min = t.v_min = -std::numeric_limits<double>::infinity();
      t.u_max = t.v_max = std::numeric_limits<double>::infinity();
    }
    tris.push_back(t);
  }

  Image<double> out(k.width, k.height, 1, std::numeric_limits<double>::infinity());
#pragma omp parallel for schedule(dynamic)
  for (int v = 0; v < k.height; ++v) {
    for (const Triangle& t : tris) {
      if (v < t.v_min || v > t.v_max) continue;
      const int u0 = std::max(0, static_cast<int>(std::floor(std::max(t.u_min, -1.0))));
      const int u1 = std::min(k.width - 1, static_cast<int>(std::ceil(std::min(t.u_max, double(k.width)))));
      for (int u = u0; u <= u1; ++u) {
        // Möller–Trumbore with the ray origin at the camera center.
        const Vec3 dir((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        const Vec3 p = dir.cross(t.e2);
        const double det = t.e1.dot(p);
        if (std::abs(det) < 1e-15) continue;
        const double inv = 1.0 / det;
        const Vec3 s = -t.a;
        const double bu = s.dot(p) * inv;
        if (bu < 0 || bu > 1) continue;
        const Vec3 q = s.cross(t.e1);
        const double bv = dir.dot(q) * inv;
        if (bv < 0 || bu + bv > 1) continue;
        const double z = t.e2.dot(q) * inv;
        if (z > 0 && z < out.at(u, v)) out.at(u, v) = z;
      }
    }
  }
  return out;
}

uint16_t to_millimeters(double meters) {
  return static_cast<uint16_t>(std::clamp(std::round(meters * 1000.0), 1.0, 65535.0));
}

uint8_t color_byte(double c) { return static_cast<uint8_t>(std::lround(std::clamp(c + 0.5, 0.0, 1.0) * 255.0)); }

}  // namespace

SyntheticVideo synth_generate(const SceneSpec& spec, uint64_t seed) {
  validate(spec);
  const Intrinsics& k = spec.intrinsics;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::mt19937_64 rng(seed);

  SyntheticVideo out;
  out.video.id = spec.id;
  out.video.category = spec.category;
  out.video.intrinsics = k;
  out.ground_truth = spec.trajectory;

  for (size_t f = 0; f < spec.trajectory.size(); ++f) {
    const Pose& pose = spec.trajectory[f];
    const Image<double> hit = cast_depth(spec.mesh, pose, k);
    const Mat3 rt = pose.rotation.matrix().transpose();
    const double inv_s = 1.0 / pose.scalar_scale();

    Frame fr{RgbImage(k.width, k.height, 3, 0), DepthImage(k.width, k.height), BinaryMask(k.width, k.height)};
    NocsImage nocs(k.width, k.height, 3, nan);
    std::vector<PixelIndex> fg;
    double z_min = std::numeric_limits<double>::infinity(), z_max = 0.0;
    for (int v = 0; v < k.height; ++v) {
      for (int u = 0; u < k.width; ++u) {
        const double z = hit.at(u, v);
        if (!std::isfinite(z)) continue;
        fg.push_back({u, v});
        z_min = std::min(z_min, z);
        z_max = std::max(z_max, z);
        fr.mask.at(u, v) = 1;
        const uint16_t clean = to_millimeters(z);
        const Vec3 canonical = inv_s * rt * (k.unproject(u, v, clean / 1000.0) - pose.translation);
        for (int c = 0; c < 3; ++c) {
          nocs.at(u, v, c) = canonical[c];
          fr.rgb.at(u, v, c) = color_byte(canonical[c]);
        }
        fr.depth.at(u, v) = clean;
      }
    }
    require(!fg.empty(), ErrorCode::kSpec, "frame " + std::to_string(f) + " renders empty");

    if (spec.noise.depth_sigma_mm > 0) {
      std::normal_distribution<double> noise(0.0, spec.noise.depth_sigma_mm);
      for (const PixelIndex& px : fg) {
        const double mm = hit.at(px.u, px.v) * 1000.0 + noise(rng);
        fr.depth.at(px.u, px.v) = to_millimeters(mm / 1000.0);
      }
    }
    if (spec.noise.outlier_fraction > 0) {
      const size_t n_out = static_cast<size_t>(std::round(spec.noise.outlier_fraction * static_cast<double>(fg.size())));
      std::vector<PixelIndex> chosen;
      std::sample(fg.begin(), fg.end(), std::back_inserter(chosen), n_out, rng);
      std::uniform_real_distribution<double> depth(0.5 * z_min, 1.5 * z_max);
      for (const PixelIndex& px : chosen) fr.depth.at(px.u, px.v) = to_millimeters(depth(rng));
    }

    out.video.frames.push_back(std::move(fr));
    out.nocs.push_back(std::move(nocs));
  }

  if (spec.keyframe_stride > 0) {
    for (size_t f = 0; f < spec.trajectory.size(); f += static_cast<size_t>(spec.keyframe_stride)) {
      out.video.annotations.frames[static_cast<int>(f)] = PoseRecord::from_pose(spec.trajectory[f], true);
    }
  }
  return out;
}

NocsMap sample_nocs(const NocsImage& nocs, const std::vector<PixelIndex>& pixels) {
  require(nocs.channels == 3, ErrorCode::kInvalidInput, "NOCS image needs 3 channels");
  NocsMap out;
  out.coords.reserve(pixels.size());
  for (const PixelIndex& px : pixels) {
    require(px.u >= 0 && px.v >= 0 && px.u < nocs.width && px.v < nocs.height, ErrorCode::kInvalidInput,
            "pixel outside the NOCS image");
    const Vec3 c(nocs.at(px.u, px.v, 0), nocs.at(px.u, px.v, 1), nocs.at(px.u, px.v, 2));
    require(c.allFinite(), ErrorCode::kInvalidInput,
            "pixel (" + std::to_string(px.u) + ", " + std::to_string(px.v) + ") has no canonical coordinate");
    out.coords.push_back(c);
  }
  return out;
}

std::vector<Pose> linear_trajectory(const Pose& start, int frames, const Vec3& axis, double deg_per_frame,
                                    const Vec3& step_m) {
  require(frames >= 1, ErrorCode::kInvalidInput, "trajectory needs at least one frame");
  std::vector<Pose> out;
  out.reserve(frames);
  for (int i = 0; i < frames; ++i) {
    Pose p = start;
    p.rotation = Rotation::from_axis_angle(axis, i * deg_per_frame * M_PI / 180.0) * start.rotation;
    p.translation = start.translation + static_cast<double>(i) * step_m;
    out.push_back(p);
  }
  return out;
}

}  // namespace posekit
