#include "posekit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "posekit/error.hpp"

namespace posekit {

void validate(const LossWeights& w) {
  for (double v : {w.lambda_pose, w.lambda_nocs, w.lambda_recon, w.lambda_mask, w.lambda_reg, w.beta}) {
    require(std::isfinite(v) && v >= 0, ErrorCode::kInvalidInput, "loss weights must be >= 0");
  }
}

void validate(const SymmetrySpec& sym) {
  if (sym.kind == SymmetrySpec::Kind::kNone) return;
  require(std::abs(sym.axis.norm() - 1.0) < 1e-9, ErrorCode::kInvalidInput,
          "symmetry axis must be unit length");
  require(sym.discretization >= 2, ErrorCode::kInvalidInput, "symmetry discretization must be >= 2");
}

std::vector<Mat3> symmetry_rotations(const SymmetrySpec& sym) {
  validate(sym);
  if (sym.kind == SymmetrySpec::Kind::kNone) return {Mat3::Identity()};
  std::vector<Mat3> out;
  out.reserve(sym.discretization);
  for (int k = 0; k < sym.discretization; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / sym.discretization;
    out.push_back(Eigen::AngleAxisd(angle, sym.axis).toRotationMatrix());
  }
  return out;
}

double rotation_pm_loss(const Mat3& r_pred, const Mat3& r_gt, std::span<const Vec3> model_points,
                        const SymmetrySpec& sym) {
  require(!model_points.empty(), ErrorCode::kInvalidInput, "model point set is empty");
  double best = std::numeric_limits<double>::infinity();
  for (const Mat3& s : symmetry_rotations(sym)) {
    const Mat3 r_eq = r_gt * s;
    double sum = 0.0;
    for (const Vec3& x : model_points) sum += (r_pred * x - r_eq * x).norm();
    best = std::min(best, sum / static_cast<double>(model_points.size()));
  }
  return best;
}

TranslationScaleTerms translation_scale_loss(const DecoupledPose& pred, const DecoupledPose& gt) {
  require(pred.center.t_z > 0 && gt.center.t_z > 0, ErrorCode::kInvalidInput,
          "depths must be positive");
  TranslationScaleTerms out;
  out.center = std::abs(pred.center.o_x - gt.center.o_x) + std::abs(pred.center.o_y - gt.center.o_y);
  out.depth = std::abs(pred.center.t_z - gt.center.t_z);
  out.scale = (pred.size - gt.size).cwiseAbs().sum();
  return out;
}

TranslationScaleTerms translation_scale_loss(const DecoupledPose& pred, const Pose& gt,
                                             const Intrinsics& k) {
  DecoupledPose g;
  try {
    g.center = project_translation(gt.translation, k);
  } catch (const Error&) {
    fail(ErrorCode::kInvalidInput, "ground-truth translation must have positive depth");
  }
  g.size = gt.scale;
  return translation_scale_loss(pred, g);
}

double smooth_l1(double delta, double beta) {
  const double a = std::abs(delta);
  if (a < beta) return 0.5 * a * a / beta;
  return a - 0.5 * beta;
}

double nocs_loss(const NocsMap& pred, const NocsMap& gt, double beta) {
  require(pred.coords.size() == gt.coords.size(), ErrorCode::kInvalidInput,
          "nocs maps have different lengths");
  double sum = 0.0;
  for (size_t i = 0; i < pred.coords.size(); ++i) {
    for (int c = 0; c < 3; ++c) sum += smooth_l1(gt.coords[i][c] - pred.coords[i][c], beta);
  }
  return sum;
}

namespace {

double nearest_sq(const Vec3& p, std::span<const Vec3> set) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& q : set) best = std::min(best, (p - q).squaredNorm());
  return best;
}

double directed_sum(std::span<const Vec3> from, std::span<const Vec3> to) {
  const long n = static_cast<long>(from.size());
  double sum = 0.0;
#pragma omp parallel for reduction(+ : sum) schedule(static)
  for (long i = 0; i < n; ++i) sum += nearest_sq(from[i], to);
  return sum;
}

void check_sets(std::span<const Vec3> x, std::span<const Vec3> y) {
  require(!x.empty() && !y.empty(), ErrorCode::kInvalidInput, "chamfer needs non-empty sets");
}

}  // namespace

double chamfer(std::span<const Vec3> x, std::span<const Vec3> y) {
  check_sets(x, y);
  return directed_sum(x, y) + directed_sum(y, x);
}

double chamfer_mean(std::span<const Vec3> x, std::span<const Vec3> y) {
  check_sets(x, y);
  return directed_sum(x, y) / static_cast<double>(x.size()) +
         directed_sum(y, x) / static_cast<double>(y.size());
}

namespace reference {

double chamfer(std::span<const Vec3> x, std::span<const Vec3> y) {
  check_sets(x, y);
  double sum = 0.0;
  for (const Vec3& p : x) sum += nearest_sq(p, y);
  for (const Vec3& q : y) sum += nearest_sq(q, x);
  return sum;
}

}  // namespace reference

namespace {

void check_masks(const SoftMask& r, const BinaryMask& t) {
  require(r.same_size(t.width, t.height), ErrorCode::kInvalidInput, "mask resolutions differ");
}

}  // namespace

SilhouetteLoss silhouette_loss(const SoftMask& rendered, const BinaryMask& target) {
  check_masks(rendered, target);
  double inter = 0.0, uni = 0.0;
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    const double r = rendered.data[i];
    const double t = target.data[i] ? 1.0 : 0.0;
    inter += std::min(r, t);
    uni += std::max(r, t);
  }
  if (uni <= 0.0) return {0.0, true};
  return {1.0 - inter / uni, false};
}

Image<double> silhouette_loss_adjoint(const SoftMask& rendered, const BinaryMask& target) {
  check_masks(rendered, target);
  Image<double> out(rendered.width, rendered.height);
  double inter = 0.0, uni = 0.0;
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    const double r = rendered.data[i];
    const double t = target.data[i] ? 1.0 : 0.0;
    inter += std::min(r, t);
    uni += std::max(r, t);
  }
  if (uni <= 0.0) return out;
  // Inside the target r feeds the intersection, outside it feeds the union.
  const double d_inter = -1.0 / uni;
  const double d_union = inter / (uni * uni);
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    out.data[i] = target.data[i] ? d_inter : d_union;
  }
  return out;
}

double deformation_reg(std::span<const Vec3> deltas) {
  if (deltas.empty()) return 0.0;
  double sum = 0.0;
  for (const Vec3& d : deltas) sum += d.norm();
  return sum / static_cast<double>(deltas.size());
}

Points deformation_reg_gradient(std::span<const Vec3> deltas) {
  Points g(deltas.size(), Vec3::Zero());
  const double inv_n = deltas.empty() ? 0.0 : 1.0 / static_cast<double>(deltas.size());
  for (size_t i = 0; i < deltas.size(); ++i) {
    const double n = deltas[i].norm();
    if (n > 0) g[i] = deltas[i] * (inv_n / n);
  }
  return g;
}

TotalLoss total_loss(const LossComponents& c, const LossWeights& w, SampleDomain domain) {
  validate(w);
  TotalLoss out;
  const bool supervised = domain == SampleDomain::kSynthetic;
  if (supervised) {
    out.weighted.pose = w.lambda_pose * c.pose;
    out.weighted.nocs = w.lambda_nocs * c.nocs;
    out.weighted.recon = w.lambda_recon * c.recon;
  }
  out.weighted.mask = w.lambda_mask * c.mask;
  out.weighted.reg = w.lambda_reg * c.reg;
  out.value = out.weighted.pose + out.weighted.nocs + out.weighted.recon + out.weighted.mask +
              out.weighted.reg;
  return out;
}

}  // namespace posekit
