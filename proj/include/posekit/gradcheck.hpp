#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "posekit/geometry.hpp"
#include "posekit/mesh.hpp"
#include "posekit/softrender.hpp"

namespace posekit {

struct GradcheckOptions {
  int poses = 10;
  /// Central-difference step. The edge distance has kinks along each
  /// triangle's medial axis, so steps much above 1e-6 pick up curvature.
  double step = 1e-7;
  double floor = 1e-6;  ///< lower bound of the relative-error denominator
  uint64_t seed = 0;
};

struct GradcheckEntry {
  std::string parameter;  ///< "q0", "t2", "s1", "v17.x", ...
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradcheckReport {
  size_t partials = 0;
  double max_relative_error = 0.0;
  GradcheckEntry worst;
};

/// Compares render_with_gradients against central differences of
/// sum(upstream * render_silhouette) at random poses in front of the camera
/// with random upstream images, over quaternion, translation, scale and
/// vertex partials.
GradcheckReport run_gradcheck(const Mesh& mesh, const Intrinsics& k, double sigma,
                              const GradcheckOptions& options = {});

}  // namespace posekit
