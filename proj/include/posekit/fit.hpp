#pragma once

#include <vector>

#include "posekit/geometry.hpp"
#include "posekit/losses.hpp"
#include "posekit/mesh.hpp"
#include "posekit/shape.hpp"
#include "posekit/softrender.hpp"

namespace posekit {

/// Adam over (quaternion, o_x, o_y, log t_z, log S) with a backtracking
/// guard and a halving sharpness schedule.
struct FitConfig {
  int max_iters = 500;
  double lr_rotation = 0.01;
  double lr_depth = 0.01;   ///< log t_z
  double lr_offset = 0.05;  ///< pixels
  double lr_scale = 0.01;   ///< log S
  bool optimize_scale = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  double sigma = 1.0;  ///< initial sharpness, px^2
  double anneal_factor = 0.5;
  int anneal_every = 50;  ///< 0 keeps sigma fixed
  double min_sigma = 1e-3;

  double convergence_tol = 1e-6;
  int convergence_window = 10;
  int max_backtracks = 5;
  int divergence_window = 20;
};

struct FitResult {
  Pose final_pose;
  std::vector<double> loss_trajectory;   ///< [0] is the initial loss
  std::vector<double> sigma_trajectory;  ///< sharpness used for each entry
  std::vector<int> uphill_steps;         ///< iterations accepted after exhausting backtracking
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
};

struct SilhouetteObjective {
  double loss = 0.0;
  RenderGradients gradients;  ///< of the loss, through the renderer
  SoftMask rendered;
};

/// Soft-IOU loss against the target and its gradient: the loss adjoint fed
/// through render_with_gradients.
SilhouetteObjective silhouette_objective(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                                         double sigma, const BinaryMask& target);

/// Throws kNoOverlap when the initial render does not overlap the target.
FitResult fit_pose(const BinaryMask& target, const Mesh& mesh, const Intrinsics& k,
                   const Pose& init, const FitConfig& cfg = {});

struct ShapeFitConfig : FitConfig {
  double lambda_reg = 0.01;
  double lr_deformation = 0.002;
};

struct ShapeFitResult {
  FitResult pose;
  Deformation delta;
};

/// Joint fit of pose and a free per-vertex deformation of the prior,
/// minimizing silhouette loss + lambda_reg * deformation_reg. The
/// regularizer is applied as a proximal shrinkage after each Adam step.
ShapeFitResult fit_pose_and_shape(const BinaryMask& target, const Mesh& prior, const Intrinsics& k,
                                  const Pose& init, const ShapeFitConfig& cfg = {});

}  // namespace posekit
