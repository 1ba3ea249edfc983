#include "posekit/annoserve.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "httplib.h"

#include "posekit/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace posekit {

const std::array<std::pair<int, int>, 12> OverlayCorners::kEdges = {{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // along x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // along y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
}};

bool OverlayCorners::any_behind() const {
  for (bool b : behind) {
    if (b) return true;
  }
  return false;
}

OverlayCorners overlay_corners(const Pose& pose, const Intrinsics& k) {
  validate(pose);
  validate(k);
  const Mat3 r = pose.rotation.matrix();
  OverlayCorners out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 local((i & 1 ? 0.5 : -0.5) * pose.scale.x(), (i & 2 ? 0.5 : -0.5) * pose.scale.y(),
                     (i & 4 ? 0.5 : -0.5) * pose.scale.z());
    const Vec3 p = r * local + pose.translation;
    out.behind[i] = p.z() <= 0;
    out.pixels[i] = out.behind[i] ? Vec2(std::nan(""), std::nan("")) : k.project(p);
  }
  return out;
}

json to_json(const OverlayCorners& o) {
  json corners = json::array();
  for (int i = 0; i < 8; ++i) {
    if (o.behind[i]) {
      corners.push_back({nullptr, nullptr});
    } else {
      corners.push_back({o.pixels[i].x(), o.pixels[i].y()});
    }
  }
  json edges = json::array();
  for (const auto& [a, b] : OverlayCorners::kEdges) edges.push_back({a, b});
  return {{"corners", corners}, {"edges", edges}, {"behind", o.behind}, {"any_behind", o.any_behind()}};
}

const char* to_string(JobState s) {
  switch (s) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "unknown";
}

struct AnnotationService::Video {
  std::string id;
  fs::path dir;
  VideoSummary summary;
  Intrinsics intrinsics;
  std::mutex write_mutex;
  bool job_active = false;  // guarded by jobs_mutex_

  std::shared_ptr<const Annotations> snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
  }
  void publish(Annotations a) {
    auto next = std::make_shared<const Annotations>(std::move(a));
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
  }

 private:
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Annotations> snapshot_;
};

namespace {

json error_body(const std::string& message) { return {{"error", message}}; }

json status_json(const JobStatus& s) {
  json j = {{"job_id", s.id},
            {"video", s.video},
            {"state", to_string(s.state)},
            {"frames_done", s.frames_done},
            {"frames_total", s.frames_total}};
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

std::optional<int> parse_frame(const std::string& s) {
  try {
    size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

}  // namespace

AnnotationService::AnnotationService(ServiceOptions options) : options_(std::move(options)) {
  require(fs::is_directory(options_.root), ErrorCode::kInvalidInput,
          "dataset root " + options_.root.string() + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(options_.root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const fs::path& dir : dirs) {
    auto v = std::make_unique<Video>();
    v->dir = dir;
    v->summary = summarize_video(dir);
    v->id = v->summary.id;
    v->intrinsics = read_intrinsics(dir / "intrinsics.json");
    const fs::path ann = dir / "annotations.json";
    v->publish(fs::exists(ann) ? read_annotations(ann) : Annotations{});
    require(!videos_.contains(v->id), ErrorCode::kInvalidInput, "duplicate video id '" + v->id + "'");
    videos_[v->id] = std::move(v);
  }
}

AnnotationService::~AnnotationService() { wait_for_jobs(); }

void AnnotationService::wait_for_jobs() {
  for (;;) {
    std::vector<std::thread> pending;
    {
      std::lock_guard lock(jobs_mutex_);
      pending.swap(workers_);
    }
    if (pending.empty()) return;
    for (std::thread& t : pending) t.join();
  }
}

std::optional<JobStatus> AnnotationService::job(const std::string& id) const {
  std::lock_guard lock(jobs_mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

AnnotationService::Video* AnnotationService::find(const std::string& id) const {
  const auto it = videos_.find(id);
  return it == videos_.end() ? nullptr : it->second.get();
}

AnnotationService::Reply AnnotationService::list_videos() const {
  json out = json::array();
  for (const auto& [id, v] : videos_) {
    const auto snap = v->snapshot();
    out.push_back({{"id", id},
                   {"category", v->summary.category},
                   {"frame_count", v->summary.frame_count},
                   {"keyframe_count", snap->keyframe_poses().size()}});
  }
  return {200, out};
}

AnnotationService::Reply AnnotationService::keyframes(const std::string& id) const {
  const Video* v = find(id);
  if (!v) return {404, error_body("unknown video '" + id + "'")};
  json out = json::object();
  for (const auto& [f, r] : v->snapshot()->frames) {
    if (r.is_keyframe) out[std::to_string(f)] = to_json(r);
  }
  return {200, out};
}

AnnotationService::Reply AnnotationService::poses(const std::string& id) const {
  const Video* v = find(id);
  if (!v) return {404, error_body("unknown video '" + id + "'")};
  return {200, to_json(*v->snapshot())};
}

AnnotationService::Reply AnnotationService::put_keyframe(const std::string& id, int frame, const std::string& body) {
  Video* v = find(id);
  if (!v) return {404, error_body("unknown video '" + id + "'")};
  if (frame >= static_cast<int>(v->summary.frame_count)) {
    return {404, error_body("frame " + std::to_string(frame) + " is out of range")};
  }
  PoseRecord record;
  try {
    record = pose_record_from_json(json::parse(body));
  } catch (const json::exception& e) {
    return {422, error_body(std::string("malformed JSON: ") + e.what())};
  } catch (const Error& e) {
    return {422, error_body(e.what())};
  }
  if (const std::string problem = check_pose_record(record); !problem.empty()) {
    json reply = error_body(problem);
    double n2 = 0.0;
    for (double q : record.quaternion) n2 += q * q;
    if (std::isfinite(n2) && n2 > 0) {
      const double n = std::sqrt(n2);
      reply["hint"] = "normalize the quaternion to unit length";
      reply["normalized_quaternion"] = {record.quaternion[0] / n, record.quaternion[1] / n,
                                        record.quaternion[2] / n, record.quaternion[3] / n};
    }
    return {422, reply};
  }
  record.is_keyframe = true;

  std::lock_guard write(v->write_mutex);
  Annotations next = *v->snapshot();
  next.frames[frame] = record;
  std::erase(next.unpropagated, frame);
  next.drift_rms.erase(frame);
  try {
    write_annotations_atomic(v->dir / "annotations.json", next);
  } catch (const Error& e) {
    return {500, error_body(e.what())};
  }
  v->publish(std::move(next));
  return {200, to_json(record)};
}

AnnotationService::Reply AnnotationService::start_propagation(const std::string& id) {
  Video* v = find(id);
  if (!v) return {404, error_body("unknown video '" + id + "'")};
  std::lock_guard lock(jobs_mutex_);
  if (v->job_active) return {409, error_body("propagation already running for '" + id + "'")};
  JobStatus status;
  status.id = "job-" + std::to_string(next_job_++);
  status.video = id;
  status.frames_total = static_cast<int>(v->summary.frame_count);
  jobs_[status.id] = status;
  v->job_active = true;
  workers_.emplace_back([this, job_id = status.id, v] { run_job(job_id, *v); });
  return {202, {{"job_id", status.id}}};
}

void AnnotationService::run_job(const std::string& job_id, Video& video) {
  auto update = [&](auto&& fn) {
    std::lock_guard lock(jobs_mutex_);
    fn(jobs_[job_id]);
  };
  try {
    std::lock_guard write(video.write_mutex);
    update([](JobStatus& s) { s.state = JobState::kRunning; });
    const VideoRecord record = load_video(video.dir);
    const auto current = video.snapshot();
    const std::map<int, Pose> keys = current->keyframe_poses();
    require(!keys.empty(), ErrorCode::kInvalidInput, "video has no keyframes");
    const PropagationResult result = propagate(record, keys, options_.propagation, [&](int done, int total) {
      update([&](JobStatus& s) {
        s.frames_done = done;
        s.frames_total = total;
      });
    });

    Annotations next = merge_propagation(*current, result);
    write_annotations_atomic(video.dir / "annotations.json", next);
    video.publish(std::move(next));
    update([](JobStatus& s) { s.state = JobState::kDone; });
  } catch (const std::exception& e) {
    update([&](JobStatus& s) {
      s.state = JobState::kFailed;
      s.error = e.what();
    });
  }
  std::lock_guard lock(jobs_mutex_);
  video.job_active = false;
}

AnnotationService::Reply AnnotationService::job_status(const std::string& id) const {
  const std::optional<JobStatus> s = job(id);
  if (!s) return {404, error_body("unknown job '" + id + "'")};
  return {200, status_json(*s)};
}

AnnotationService::Reply AnnotationService::overlay(const std::string& id, int frame) const {
  const Video* v = find(id);
  if (!v) return {404, error_body("unknown video '" + id + "'")};
  if (frame >= static_cast<int>(v->summary.frame_count)) {
    return {404, error_body("frame " + std::to_string(frame) + " is out of range")};
  }
  const auto snap = v->snapshot();
  const auto it = snap->frames.find(frame);
  if (it == snap->frames.end()) return {404, error_body("frame " + std::to_string(frame) + " has no pose")};
  json out = to_json(overlay_corners(it->second.to_pose(), v->intrinsics));
  out["frame"] = frame;
  out["pose"] = to_json(it->second);
  return {200, out};
}

void AnnotationService::mount(httplib::Server& server) {
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto frame_or_404 = [send](httplib::Response& res, const std::string& s) -> std::optional<int> {
    const std::optional<int> f = parse_frame(s);
    if (!f) send(res, {404, error_body("bad frame index '" + s + "'")});
    return f;
  };

  server.Get("/api/videos", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, list_videos());
  });
  server.Get(R"(/api/videos/([^/]+)/keyframes)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, keyframes(req.matches[1]));
  });
  server.Put(R"(/api/videos/([^/]+)/keyframes/([^/]+))",
             [this, send, frame_or_404](const httplib::Request& req, httplib::Response& res) {
               if (const auto f = frame_or_404(res, req.matches[2])) send(res, put_keyframe(req.matches[1], *f, req.body));
             });
  server.Get(R"(/api/videos/([^/]+)/poses)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, poses(req.matches[1]));
  });
  server.Post(R"(/api/videos/([^/]+)/propagate)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, start_propagation(req.matches[1]));
  });
  server.Get(R"(/api/jobs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, job_status(req.matches[1]));
  });
  server.Get(R"(/api/videos/([^/]+)/frames/([^/]+)/overlay)",
             [this, send, frame_or_404](const httplib::Request& req, httplib::Response& res) {
               if (const auto f = frame_or_404(res, req.matches[2])) send(res, overlay(req.matches[1], *f));
             });
  server.Get(R"(/api/videos/([^/]+)/frames/([^/]+)/(rgb|depth|mask))",
             [this, send, frame_or_404](const httplib::Request& req, httplib::Response& res) {
               const Video* v = find(req.matches[1]);
               if (!v) return send(res, {404, error_body("unknown video '" + req.matches[1].str() + "'")});
               const auto f = frame_or_404(res, req.matches[2]);
               if (!f) return;
               const fs::path path = v->dir / req.matches[3].str() / frame_name(*f);
               std::ifstream in(path, std::ios::binary);
               if (*f >= static_cast<int>(v->summary.frame_count) || !in) {
                 return send(res, {404, error_body("frame " + req.matches[2].str() + " not found")});
               }
               std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
               res.set_content(std::move(bytes), "image/png");
             });

  if (!options_.assets.empty()) server.set_mount_point("/", options_.assets.string());
}

}  // namespace posekit
