#include "posekit/fit.hpp"

#include <Eigen/Core>

#include <cmath>

#include "posekit/error.hpp"

namespace posekit {

SilhouetteObjective silhouette_objective(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                                         double sigma, const BinaryMask& target) {
  const RenderConfig cfg = RenderConfig::for_intrinsics(k, sigma);
  SilhouetteObjective out;
  out.rendered = render_silhouette(mesh, pose, k, cfg).mask;
  out.loss = silhouette_loss(out.rendered, target).value;
  out.gradients = render_with_gradients(mesh, pose, k, cfg, silhouette_loss_adjoint(out.rendered, target));
  return out;
}

namespace {

using Eigen::VectorXd;

// Flat parameter layout: q(4) o_x o_y log_tz log_S(3) deltas(3 N).
constexpr int kQ = 0;
constexpr int kOx = 4;
constexpr int kOy = 5;
constexpr int kLogTz = 6;
constexpr int kLogS = 7;
constexpr int kDelta = 10;

class Problem {
 public:
  Problem(const BinaryMask& target, const Mesh& mesh, const Intrinsics& k, const FitConfig& cfg,
          bool with_shape, double lambda_reg, double lr_deformation)
      : target_(target), mesh_(mesh), k_(k), cfg_(cfg), with_shape_(with_shape), lambda_reg_(lambda_reg) {
    const size_t n = size();
    lr_ = VectorXd::Zero(static_cast<Eigen::Index>(n));
    lr_.segment<4>(kQ).setConstant(cfg.lr_rotation);
    lr_[kOx] = cfg.lr_offset;
    lr_[kOy] = cfg.lr_offset;
    lr_[kLogTz] = cfg.lr_depth;
    if (cfg.optimize_scale) lr_.segment<3>(kLogS).setConstant(cfg.lr_scale);
    if (with_shape_) lr_.tail(static_cast<Eigen::Index>(n) - kDelta).setConstant(lr_deformation);
  }

  size_t size() const { return kDelta + (with_shape_ ? 3 * mesh_.vertices.size() : 0); }
  const VectorXd& learning_rates() const { return lr_; }

  VectorXd flatten(const Pose& pose) const {
    VectorXd x = VectorXd::Zero(static_cast<Eigen::Index>(size()));
    x.segment<4>(kQ) = pose.rotation.coeffs();
    const ImageCenterDepth c = project_translation(pose.translation, k_);
    x[kOx] = c.o_x;
    x[kOy] = c.o_y;
    x[kLogTz] = std::log(c.t_z);
    x.segment<3>(kLogS) = pose.scale.array().log();
    return x;
  }

  Pose pose(const VectorXd& x) const {
    Pose p;
    p.rotation = Rotation(Vec4(x.segment<4>(kQ)));
    p.translation = decouple_translation(x[kOx], x[kOy], std::exp(x[kLogTz]), k_);
    p.scale = x.segment<3>(kLogS).array().exp();
    return p;
  }

  Deformation deformation(const VectorXd& x) const {
    Deformation d = Deformation::zero(mesh_.vertices.size());
    if (!with_shape_) return d;
    for (size_t i = 0; i < d.deltas.size(); ++i) d.deltas[i] = x.segment<3>(kDelta + 3 * i);
    return d;
  }

  static void normalize(VectorXd& x) { x.segment<4>(kQ).normalize(); }

  struct Eval {
    double loss = 0.0;
    double silhouette = 0.0;
    VectorXd grad;
  };

  Eval evaluate(const VectorXd& x, double sigma, bool with_gradient) const {
    const Pose p = pose(x);
    const Deformation d = deformation(x);
    const Mesh shaped = with_shape_ ? apply_deformation(mesh_, d) : Mesh{};
    const Mesh& m = with_shape_ ? shaped : mesh_;
    Eval e;
    const double reg = with_shape_ ? lambda_reg_ * deformation_reg(d.deltas) : 0.0;
    if (!with_gradient) {
      const RenderConfig rc = RenderConfig::for_intrinsics(k_, sigma);
      e.silhouette = silhouette_loss(render_silhouette(m, p, k_, rc).mask, target_).value;
      e.loss = e.silhouette + reg;
      return e;
    }
    const SilhouetteObjective obj = silhouette_objective(m, p, k_, sigma, target_);
    e.silhouette = obj.loss;
    e.loss = obj.loss + reg;
    const RenderGradients& g = obj.gradients;
    e.grad = VectorXd::Zero(static_cast<Eigen::Index>(size()));
    e.grad.segment<4>(kQ) = g.d_quaternion;
    const double t_z = std::exp(x[kLogTz]);
    e.grad[kOx] = g.d_translation.x() * t_z / k_.fx;
    e.grad[kOy] = g.d_translation.y() * t_z / k_.fy;
    e.grad[kLogTz] = g.d_translation.dot(p.translation);
    e.grad.segment<3>(kLogS) = g.d_scale.cwiseProduct(p.scale);
    // The regularizer is left to prox(); only the smooth part is returned.
    if (with_shape_) {
      for (size_t i = 0; i < d.deltas.size(); ++i) e.grad.segment<3>(kDelta + 3 * i) = g.d_vertices[i];
    }
    return e;
  }

  // Proximal map of lambda_reg * deformation_reg under per-coordinate step
  // sizes: each vertex offset shrinks toward zero by its averaged step times
  // lambda / N, and snaps to zero inside that radius.
  void prox(VectorXd& x, const VectorXd& step_size) const {
    if (!with_shape_ || lambda_reg_ == 0.0) return;
    const size_t n = mesh_.vertices.size();
    const double weight = lambda_reg_ / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
      const Eigen::Index at = kDelta + 3 * static_cast<Eigen::Index>(i);
      const double norm = x.segment<3>(at).norm();
      const double tau = weight * step_size.segment<3>(at).mean();
      x.segment<3>(at) *= norm > tau ? 1.0 - tau / norm : 0.0;
    }
  }

 private:
  const BinaryMask& target_;
  const Mesh& mesh_;
  const Intrinsics& k_;
  FitConfig cfg_;
  bool with_shape_;
  double lambda_reg_;
  VectorXd lr_;
};

struct RunResult {
  FitResult fit;
  VectorXd x;
};

RunResult run(const Problem& problem, const Pose& init, const FitConfig& cfg) {
  require(cfg.max_iters >= 0 && cfg.sigma > 0 && cfg.anneal_factor > 0 && cfg.anneal_factor <= 1 &&
              cfg.convergence_window >= 1 && cfg.max_backtracks >= 0 && cfg.divergence_window >= 1,
          ErrorCode::kInvalidInput, "invalid fit configuration");
  validate(init);

  RunResult out;
  FitResult& fit = out.fit;
  VectorXd x = problem.flatten(init);
  double sigma = cfg.sigma;
  Problem::Eval cur = problem.evaluate(x, sigma, true);
  require(cur.silhouette < 1.0 - 1e-6, ErrorCode::kNoOverlap,
          "initial silhouette does not overlap the target");
  fit.loss_trajectory.push_back(cur.loss);
  fit.sigma_trajectory.push_back(sigma);
  fit.final_pose = init;
  out.x = x;
  if (cfg.max_iters == 0) return out;

  const double initial = cur.loss;
  const VectorXd& lr = problem.learning_rates();
  VectorXd m = VectorXd::Zero(x.size()), v = VectorXd::Zero(x.size());
  double b1t = 1.0, b2t = 1.0;
  int above_initial = 0;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    const VectorXd& g = cur.grad;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g.cwiseProduct(g);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    const VectorXd m_hat = m / (1 - b1t);
    const VectorXd v_hat = v / (1 - b2t);
    const VectorXd step_size = lr.cwiseQuotient((v_hat.array().sqrt() + cfg.epsilon).matrix());
    const VectorXd step = -step_size.cwiseProduct(m_hat);

    auto candidate = [&](double h) {
      VectorXd c = x + h * step;
      problem.prox(c, h * step_size);
      Problem::normalize(c);
      return c;
    };
    double h = 1.0;
    VectorXd cand = candidate(h);
    double cand_loss = problem.evaluate(cand, sigma, false).loss;
    for (int tries = 0; cand_loss > cur.loss && tries < cfg.max_backtracks; ++tries) {
      h *= 0.5;
      cand = candidate(h);
      cand_loss = problem.evaluate(cand, sigma, false).loss;
    }
    if (cand_loss > cur.loss) fit.uphill_steps.push_back(it);
    x = cand;
    fit.iterations = it;
    fit.loss_trajectory.push_back(cand_loss);
    fit.sigma_trajectory.push_back(sigma);

    above_initial = cand_loss > 2.0 * initial ? above_initial + 1 : 0;
    if (above_initial >= cfg.divergence_window) {
      fit.diverged = true;
      break;
    }
    const size_t n = fit.loss_trajectory.size();
    const size_t w = static_cast<size_t>(cfg.convergence_window);
    const bool stalled = n > w && fit.sigma_trajectory[n - 1 - w] == sigma &&
                         std::abs(fit.loss_trajectory[n - 1] - fit.loss_trajectory[n - 1 - w]) < cfg.convergence_tol;
    const bool sharpest = cfg.anneal_every == 0 || sigma <= cfg.min_sigma;
    if (stalled && sharpest) {
      fit.converged = true;
      break;
    }
    if (it == cfg.max_iters) break;
    // A stall before the final sharpness moves on to the next level early.
    if (!sharpest && (stalled || it % cfg.anneal_every == 0)) {
      sigma = std::max(cfg.min_sigma, sigma * cfg.anneal_factor);
      m.setZero();
      v.setZero();
      b1t = b2t = 1.0;
    }
    cur = problem.evaluate(x, sigma, true);
  }
  fit.final_pose = problem.pose(x);
  out.x = x;
  return out;
}

}  // namespace

FitResult fit_pose(const BinaryMask& target, const Mesh& mesh, const Intrinsics& k,
                   const Pose& init, const FitConfig& cfg) {
  validate(mesh);
  validate(k);
  require(target.same_size(k.width, k.height), ErrorCode::kInvalidInput,
          "target mask must match the intrinsics image size");
  const Problem problem(target, mesh, k, cfg, false, 0.0, 0.0);
  return run(problem, init, cfg).fit;
}

ShapeFitResult fit_pose_and_shape(const BinaryMask& target, const Mesh& prior, const Intrinsics& k,
                                  const Pose& init, const ShapeFitConfig& cfg) {
  validate(prior);
  validate(k);
  require(target.same_size(k.width, k.height), ErrorCode::kInvalidInput,
          "target mask must match the intrinsics image size");
  require(cfg.lambda_reg >= 0 && cfg.lr_deformation >= 0, ErrorCode::kInvalidInput,
          "invalid shape fit configuration");
  const Problem problem(target, prior, k, cfg, true, cfg.lambda_reg, cfg.lr_deformation);
  RunResult r = run(problem, init, cfg);
  ShapeFitResult out;
  out.pose = std::move(r.fit);
  out.delta = problem.deformation(r.x);
  return out;
}

}  // namespace posekit
