#pragma once

#include <span>
#include <vector>

#include "posekit/geometry.hpp"
#include "posekit/image.hpp"

namespace posekit {

/// Balance weights of the supervised and semi-supervised totals.
struct LossWeights {
  double lambda_pose = 0.2;
  double lambda_nocs = 2.0;
  double lambda_recon = 5.0;
  double lambda_mask = 0.2;
  double lambda_reg = 0.01;
  double beta = 0.1;  ///< smooth-L1 transition, NOCS units
};

void validate(const LossWeights& w);

/// Rotational symmetry of a category about a canonical-frame axis.
struct SymmetrySpec {
  enum class Kind { kNone, kAxis };
  Kind kind = Kind::kNone;
  Vec3 axis = Vec3::UnitY();
  int discretization = 64;

  static SymmetrySpec none() { return {}; }
  static SymmetrySpec about(const Vec3& axis, int discretization = 64) {
    return {Kind::kAxis, axis, discretization};
  }
};

void validate(const SymmetrySpec& sym);

/// Canonical-frame rotations generating the symmetry: identity alone for
/// kNone, else D rotations by 2*pi*k/D about the axis.
std::vector<Mat3> symmetry_rotations(const SymmetrySpec& sym);

enum class SampleDomain { kSynthetic, kReal };

/// Mean over model points of |R_pred x - R_gt S_k x|, minimized over the
/// symmetry rotations S_k. Throws kInvalidInput for an empty point set.
double rotation_pm_loss(const Mat3& r_pred, const Mat3& r_gt, std::span<const Vec3> model_points,
                        const SymmetrySpec& sym);

struct TranslationScaleTerms {
  double center = 0.0;  ///< |o_x - o_x*| + |o_y - o_y*|, pixels
  double depth = 0.0;   ///< |t_z - t_z*|, meters
  double scale = 0.0;   ///< sum |S - S*|, meters
};

struct DecoupledPose {
  ImageCenterDepth center;
  Vec3 size = Vec3::Ones();
};

/// L1 terms on the decoupled translation and size. Throws kInvalidInput for
/// non-positive depth.
TranslationScaleTerms translation_scale_loss(const DecoupledPose& pred, const DecoupledPose& gt);
/// Same, with the ground-truth center and depth projected from T* through K.
TranslationScaleTerms translation_scale_loss(const DecoupledPose& pred, const Pose& gt,
                                             const Intrinsics& k);

double smooth_l1(double delta, double beta);

/// Sum of smooth-L1 over points and channels.
double nocs_loss(const NocsMap& pred, const NocsMap& gt, double beta);

/// Sum over each set of the squared distance to the nearest point of the
/// other set. Brute force, parallel over points.
double chamfer(std::span<const Vec3> x, std::span<const Vec3> y);
/// Each directional sum divided by its set size.
double chamfer_mean(std::span<const Vec3> x, std::span<const Vec3> y);

namespace reference {
double chamfer(std::span<const Vec3> x, std::span<const Vec3> y);
}

struct SilhouetteLoss {
  double value = 0.0;
  bool degenerate = false;  ///< both masks empty; value defined as 0
};

/// 1 - sum(min(r, t)) / sum(max(r, t)).
SilhouetteLoss silhouette_loss(const SoftMask& rendered, const BinaryMask& target);

/// d loss / d rendered, pixelwise. Zero image for the degenerate case.
Image<double> silhouette_loss_adjoint(const SoftMask& rendered, const BinaryMask& target);

/// Mean per-vertex deformation magnitude.
double deformation_reg(std::span<const Vec3> deltas);
/// Subgradient of deformation_reg (zero for zero-length offsets).
Points deformation_reg_gradient(std::span<const Vec3> deltas);

struct LossComponents {
  double pose = 0.0;
  double nocs = 0.0;
  double recon = 0.0;
  double mask = 0.0;
  double reg = 0.0;
};

struct TotalLoss {
  double value = 0.0;
  LossComponents weighted;  ///< per-term contributions to value
};

/// Synthetic samples: every weighted term. Real samples: the supervised
/// pose, nocs and recon terms are gated to exactly zero.
TotalLoss total_loss(const LossComponents& c, const LossWeights& w, SampleDomain domain);

/// Unweighted sum of the four pose terms.
inline double pose_loss(double rotation, const TranslationScaleTerms& ts) {
  return rotation + ts.center + ts.depth + ts.scale;
}

}  // namespace posekit
