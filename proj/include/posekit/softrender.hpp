#pragma once

#include "posekit/geometry.hpp"
#include "posekit/image.hpp"
#include "posekit/mesh.hpp"

namespace posekit {

struct RenderConfig {
  double sigma = 1.0;  ///< sigmoid sharpness, squared pixels
  int width = 0;
  int height = 0;
  double near = 1e-3;  ///< meters
  double far = 1e3;

  static RenderConfig for_intrinsics(const Intrinsics& k, double sigma = 1.0) {
    RenderConfig cfg;
    cfg.sigma = sigma;
    cfg.width = k.width;
    cfg.height = k.height;
    return cfg;
  }
};

void validate(const RenderConfig& cfg);

/// Faces are dropped from a pixel once sign * d^2 / sigma falls below
/// -kRenderCutoff, i.e. their coverage is under sigmoid(-30) ~ 1e-13.
inline constexpr double kRenderCutoff = 30.0;

struct RenderResult {
  SoftMask mask;
  bool empty = false;  ///< no face in front of the near plane
};

/// Soft silhouette: I = 1 - prod_f (1 - sigmoid(sign_f * d_f^2 / sigma)) with
/// d_f the pixel distance to the projected triangle and sign_f = +1 inside.
/// Pixel (u, v) samples image point (u, v). Faces with any vertex outside
/// [near, far] are skipped. Rows are rendered in parallel.
RenderResult render_silhouette(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                               const RenderConfig& cfg);

struct RenderGradients {
  double value = 0.0;  ///< sum over pixels of upstream * I
  Points d_vertices;   ///< canonical-frame vertex gradients
  Vec4 d_quaternion = Vec4::Zero();  ///< projected onto the unit-sphere tangent
  Vec3 d_translation = Vec3::Zero();
  Vec3 d_scale = Vec3::Zero();
  bool empty = false;
};

/// Reverse-mode gradients of sum(upstream * I). Accumulation happens in
/// fixed row blocks reduced in order, so results do not depend on the
/// number of threads.
RenderGradients render_with_gradients(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                                      const RenderConfig& cfg, const Image<double>& upstream);

/// Pixelwise value > threshold.
BinaryMask hard_mask(const SoftMask& soft, double threshold = 0.5);

namespace reference {

/// Serial, every face at every pixel, no window culling.
RenderResult render_silhouette(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                               const RenderConfig& cfg);
RenderGradients render_with_gradients(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                                      const RenderConfig& cfg, const Image<double>& upstream);

}  // namespace reference
}  // namespace posekit
