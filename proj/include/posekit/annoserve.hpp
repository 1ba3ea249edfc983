#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "posekit/dataio.hpp"
#include "posekit/geometry.hpp"
#include "posekit/registration.hpp"

namespace httplib {
class Server;
}

namespace posekit {

/// Projected corners of the pose's box. Corner i has local coordinates
/// (±S_x/2, ±S_y/2, ±S_z/2) with bit 0, 1, 2 of i selecting the + sign on
/// x, y, z. Corners at or behind the camera plane are flagged; their pixel
/// coordinates are then meaningless.
struct OverlayCorners {
  std::array<Vec2, 8> pixels;
  std::array<bool, 8> behind{};
  static const std::array<std::pair<int, int>, 12> kEdges;

  bool any_behind() const;
};

OverlayCorners overlay_corners(const Pose& pose, const Intrinsics& k);
nlohmann::json to_json(const OverlayCorners& o);

enum class JobState { kQueued, kRunning, kDone, kFailed };
const char* to_string(JobState s);

struct JobStatus {
  std::string id;
  std::string video;
  JobState state = JobState::kQueued;
  int frames_done = 0;
  int frames_total = 0;
  std::string error;
};

struct ServiceOptions {
  std::filesystem::path root;    ///< one video directory per child
  std::filesystem::path assets;  ///< static frontend files; empty to disable
  PropagationConfig propagation;
};

/// HTTP adapter over a dataset directory. Reads are served from immutable
/// annotation snapshots; keyframe writes and propagation jobs on the same
/// video run one at a time and persist atomically before the snapshot is
/// swapped.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceOptions options);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  void mount(httplib::Server& server);

  /// Blocks until every submitted job has finished.
  void wait_for_jobs();

  std::optional<JobStatus> job(const std::string& id) const;

 private:
  struct Video;
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };

  Video* find(const std::string& id) const;
  Reply list_videos() const;
  Reply keyframes(const std::string& id) const;
  Reply poses(const std::string& id) const;
  Reply put_keyframe(const std::string& id, int frame, const std::string& body);
  Reply start_propagation(const std::string& id);
  Reply job_status(const std::string& id) const;
  Reply overlay(const std::string& id, int frame) const;
  void run_job(const std::string& job_id, Video& video);

  ServiceOptions options_;
  std::map<std::string, std::unique_ptr<Video>> videos_;
  mutable std::mutex jobs_mutex_;
  std::map<std::string, JobStatus> jobs_;
  std::vector<std::thread> workers_;
  int next_job_ = 1;
};

}  // namespace posekit
