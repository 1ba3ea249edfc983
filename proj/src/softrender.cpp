#include "posekit/softrender.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "posekit/error.hpp"

namespace posekit {
namespace {

constexpr int kBlockRows = 4;

struct ProjectedFace {
  Vec2 p[3];
  int vi[3];
  double area2 = 0.0;  // twice the signed area in image space
  int u0, u1, v0, v1;  // culling window, inclusive, clamped to the image
};

struct Projection {
  std::vector<Vec2> uv;
  std::vector<double> depth;
  Points camera;  // posed vertices
  std::vector<ProjectedFace> faces;
};

Projection project_mesh(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                        const RenderConfig& cfg, bool drop_offscreen = true) {
  validate(mesh);
  validate(pose);
  validate(k);
  validate(cfg);

  Projection out;
  out.camera = transform_points(pose, mesh.vertices, true);
  out.uv.resize(out.camera.size());
  out.depth.resize(out.camera.size());
  for (size_t i = 0; i < out.camera.size(); ++i) {
    out.depth[i] = out.camera[i].z();
    out.uv[i] = out.depth[i] > 0 ? k.project(out.camera[i]) : Vec2::Zero();
  }

  const double radius = std::sqrt(kRenderCutoff * cfg.sigma);
  for (const Face& f : mesh.faces) {
    bool visible = true;
    for (int i : f) visible &= out.depth[i] >= cfg.near && out.depth[i] <= cfg.far;
    if (!visible) continue;
    ProjectedFace pf;
    for (int j = 0; j < 3; ++j) {
      pf.vi[j] = f[j];
      pf.p[j] = out.uv[f[j]];
    }
    const Vec2 e1 = pf.p[1] - pf.p[0], e2 = pf.p[2] - pf.p[0];
    pf.area2 = e1.x() * e2.y() - e1.y() * e2.x();
    const double umin = std::min({pf.p[0].x(), pf.p[1].x(), pf.p[2].x()}) - radius;
    const double umax = std::max({pf.p[0].x(), pf.p[1].x(), pf.p[2].x()}) + radius;
    const double vmin = std::min({pf.p[0].y(), pf.p[1].y(), pf.p[2].y()}) - radius;
    const double vmax = std::max({pf.p[0].y(), pf.p[1].y(), pf.p[2].y()}) + radius;
    const bool offscreen = umax < 0 || vmax < 0 || umin > cfg.width - 1 || vmin > cfg.height - 1;
    if (offscreen && drop_offscreen) continue;
    pf.u0 = std::max(0, static_cast<int>(std::ceil(umin)));
    pf.u1 = std::min(cfg.width - 1, static_cast<int>(std::floor(umax)));
    pf.v0 = std::max(0, static_cast<int>(std::ceil(vmin)));
    pf.v1 = std::min(cfg.height - 1, static_cast<int>(std::floor(vmax)));
    out.faces.push_back(pf);
  }
  return out;
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Per-face, per-pixel quantities needed for value and gradient.
struct FaceSample {
  double logit;      // sign * d^2 / sigma
  double sign;
  int edge;          // closest edge, from vertex edge to edge + 1
  double t;          // closest point parameter along that edge
  Vec2 diff;         // pixel minus closest point
};

FaceSample sample_face(const ProjectedFace& f, const Vec2& p, double inv_sigma) {
  FaceSample s{};
  double best = std::numeric_limits<double>::infinity();
  for (int e = 0; e < 3; ++e) {
    const Vec2& a = f.p[e];
    const Vec2& b = f.p[(e + 1) % 3];
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 diff = p - (a + t * ab);
    const double d2 = diff.squaredNorm();
    if (d2 < best) {
      best = d2;
      s.edge = e;
      s.t = t;
      s.diff = diff;
    }
  }
  bool inside = false;
  if (f.area2 != 0.0) {
    const double c0 = cross2(f.p[1] - f.p[0], p - f.p[0]);
    const double c1 = cross2(f.p[2] - f.p[1], p - f.p[1]);
    const double c2 = cross2(f.p[0] - f.p[2], p - f.p[2]);
    inside = f.area2 > 0 ? (c0 >= 0 && c1 >= 0 && c2 >= 0) : (c0 <= 0 && c1 <= 0 && c2 <= 0);
  }
  s.sign = inside ? 1.0 : -1.0;
  s.logit = s.sign * best * inv_sigma;
  return s;
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct PixelScratch {
  std::vector<const ProjectedFace*> faces;
  std::vector<FaceSample> samples;
  std::vector<double> coverage;    // D_f
  std::vector<double> complement;  // 1 - D_f
  std::vector<double> suffix;
};

/// Evaluates one pixel over the candidate faces. Returns occupancy; fills the
/// scratch with per-face terms when gradients are wanted.
double shade_pixel(const Vec2& p, std::span<const ProjectedFace* const> candidates,
                   double inv_sigma, bool cull, PixelScratch& s) {
  s.faces.clear();
  s.samples.clear();
  s.coverage.clear();
  s.complement.clear();
  double prod = 1.0;
  for (const ProjectedFace* f : candidates) {
    const FaceSample fs = sample_face(*f, p, inv_sigma);
    if (cull && fs.logit < -kRenderCutoff) continue;
    const double d = sigmoid(fs.logit);
    const double one_minus = sigmoid(-fs.logit);
    prod *= one_minus;
    s.faces.push_back(f);
    s.samples.push_back(fs);
    s.coverage.push_back(d);
    s.complement.push_back(one_minus);
  }
  return 1.0 - prod;
}

/// Adds g * dI/d(uv) for one pixel into grad_uv.
void backprop_pixel(double g, double inv_sigma, PixelScratch& s, std::vector<Vec2>& grad_uv) {
  const size_t n = s.faces.size();
  if (n == 0 || g == 0.0) return;
  s.suffix.assign(n + 1, 1.0);
  for (size_t i = n; i-- > 0;) s.suffix[i] = s.suffix[i + 1] * s.complement[i];
  double prefix = 1.0;
  for (size_t i = 0; i < n; ++i) {
    const double others = prefix * s.suffix[i + 1];
    prefix *= s.complement[i];
    const double d_logit = g * others * s.coverage[i] * s.complement[i];
    if (d_logit == 0.0) continue;
    const FaceSample& fs = s.samples[i];
    // logit = sign * |p - q|^2 / sigma with q = a + t (b - a); t is optimal so
    // only the explicit endpoint dependence remains.
    const Vec2 dq = -2.0 * fs.sign * inv_sigma * d_logit * fs.diff;
    const ProjectedFace& f = *s.faces[i];
    grad_uv[f.vi[fs.edge]] += (1.0 - fs.t) * dq;
    grad_uv[f.vi[(fs.edge + 1) % 3]] += fs.t * dq;
  }
}

RenderGradients chain_to_pose(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                              const Projection& proj, const std::vector<Vec2>& grad_uv) {
  RenderGradients out;
  const size_t nv = mesh.vertices.size();
  out.d_vertices.assign(nv, Vec3::Zero());
  const Mat3 r = pose.rotation.matrix();
  const double s = pose.scalar_scale();
  Mat3 d_r = Mat3::Zero();
  double d_s = 0.0;
  for (size_t i = 0; i < nv; ++i) {
    const Vec2& g = grad_uv[i];
    if (g.x() == 0.0 && g.y() == 0.0) continue;
    const Vec3& x = proj.camera[i];
    const double iz = 1.0 / x.z();
    const Vec3 d_x(g.x() * k.fx * iz, g.y() * k.fy * iz,
                   -(g.x() * k.fx * x.x() + g.y() * k.fy * x.y()) * iz * iz);
    out.d_translation += d_x;
    const Vec3 rm = r * mesh.vertices[i];
    d_s += d_x.dot(rm);
    d_r += s * d_x * mesh.vertices[i].transpose();
    out.d_vertices[i] = s * (r.transpose() * d_x);
  }
  out.d_scale = d_s * pose.scale / s;
  const Vec4& q = pose.rotation.coeffs();
  const auto jac = quat_matrix_jacobian(q);
  Vec4 d_q;
  for (int j = 0; j < 4; ++j) d_q[j] = (d_r.array() * jac[j].array()).sum();
  out.d_quaternion = d_q - d_q.dot(q) * q;
  return out;
}

void check_upstream(const Image<double>& upstream, const RenderConfig& cfg) {
  require(upstream.same_size(cfg.width, cfg.height) && upstream.channels == 1,
          ErrorCode::kInvalidInput, "upstream adjoint must match the render size");
}

}  // namespace

void validate(const RenderConfig& cfg) {
  require(std::isfinite(cfg.sigma) && cfg.sigma > 0, ErrorCode::kInvalidInput, "sigma must be positive");
  require(cfg.width > 0 && cfg.height > 0, ErrorCode::kInvalidInput, "render size must be positive");
  require(cfg.near > 0 && cfg.near < cfg.far, ErrorCode::kInvalidInput, "need 0 < near < far");
}

namespace {

/// Per-block candidate lists: faces whose window overlaps the block rows.
std::vector<std::vector<const ProjectedFace*>> bin_faces(const Projection& proj, int height) {
  const int blocks = (height + kBlockRows - 1) / kBlockRows;
  std::vector<std::vector<const ProjectedFace*>> bins(blocks);
  for (const ProjectedFace& f : proj.faces) {
    for (int b = f.v0 / kBlockRows; b <= f.v1 / kBlockRows; ++b) bins[b].push_back(&f);
  }
  return bins;
}

void check_size(const Intrinsics& k, const RenderConfig& cfg) {
  require(k.width == cfg.width && k.height == cfg.height, ErrorCode::kInvalidInput,
          "render size must match the intrinsics image size");
}

}  // namespace

RenderResult render_silhouette(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                               const RenderConfig& cfg) {
  const Projection proj = project_mesh(mesh, pose, k, cfg);
  check_size(k, cfg);
  RenderResult out;
  out.mask = SoftMask(cfg.width, cfg.height);
  out.empty = proj.faces.empty();
  if (out.empty) return out;

  const auto bins = bin_faces(proj, cfg.height);
  const double inv_sigma = 1.0 / cfg.sigma;
  const int blocks = static_cast<int>(bins.size());
#pragma omp parallel
  {
    PixelScratch scratch;
    std::vector<const ProjectedFace*> row_faces;
#pragma omp for schedule(dynamic)
    for (int b = 0; b < blocks; ++b) {
      const int v_end = std::min(cfg.height, (b + 1) * kBlockRows);
      for (int v = b * kBlockRows; v < v_end; ++v) {
        for (int u = 0; u < cfg.width; ++u) {
          row_faces.clear();
          for (const ProjectedFace* f : bins[b]) {
            if (v >= f->v0 && v <= f->v1 && u >= f->u0 && u <= f->u1) row_faces.push_back(f);
          }
          if (row_faces.empty()) continue;
          out.mask.at(u, v) = shade_pixel(Vec2(u, v), row_faces, inv_sigma, true, scratch);
        }
      }
    }
  }
  return out;
}

RenderGradients render_with_gradients(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                                      const RenderConfig& cfg, const Image<double>& upstream) {
  const Projection proj = project_mesh(mesh, pose, k, cfg);
  check_size(k, cfg);
  check_upstream(upstream, cfg);
  const size_t nv = mesh.vertices.size();
  if (proj.faces.empty()) {
    RenderGradients out;
    out.d_vertices.assign(nv, Vec3::Zero());
    out.empty = true;
    return out;
  }

  const auto bins = bin_faces(proj, cfg.height);
  const double inv_sigma = 1.0 / cfg.sigma;
  const int blocks = static_cast<int>(bins.size());
  std::vector<std::vector<Vec2>> block_grad(blocks);
  std::vector<double> block_value(blocks, 0.0);
#pragma omp parallel
  {
    PixelScratch scratch;
    std::vector<const ProjectedFace*> row_faces;
#pragma omp for schedule(dynamic)
    for (int b = 0; b < blocks; ++b) {
      if (bins[b].empty()) continue;
      std::vector<Vec2>& grad = block_grad[b];
      grad.assign(nv, Vec2::Zero());
      double value = 0.0;
      const int v_end = std::min(cfg.height, (b + 1) * kBlockRows);
      for (int v = b * kBlockRows; v < v_end; ++v) {
        for (int u = 0; u < cfg.width; ++u) {
          row_faces.clear();
          for (const ProjectedFace* f : bins[b]) {
            if (v >= f->v0 && v <= f->v1 && u >= f->u0 && u <= f->u1) row_faces.push_back(f);
          }
          if (row_faces.empty()) continue;
          const double g = upstream.at(u, v);
          const double occ = shade_pixel(Vec2(u, v), row_faces, inv_sigma, true, scratch);
          value += g * occ;
          backprop_pixel(g, inv_sigma, scratch, grad);
        }
      }
      block_value[b] = value;
    }
  }

  std::vector<Vec2> grad_uv(nv, Vec2::Zero());
  double value = 0.0;
  for (int b = 0; b < blocks; ++b) {
    value += block_value[b];
    if (block_grad[b].empty()) continue;
    for (size_t i = 0; i < nv; ++i) grad_uv[i] += block_grad[b][i];
  }
  RenderGradients out = chain_to_pose(mesh, pose, k, proj, grad_uv);
  out.value = value;
  return out;
}

BinaryMask hard_mask(const SoftMask& soft, double threshold) {
  require(threshold > 0 && threshold < 1, ErrorCode::kInvalidInput, "threshold must be in (0, 1)");
  BinaryMask out(soft.width, soft.height);
  for (size_t i = 0; i < soft.data.size(); ++i) out.data[i] = soft.data[i] > threshold ? 1 : 0;
  return out;
}

namespace reference {

RenderResult render_silhouette(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                               const RenderConfig& cfg) {
  const Projection proj = project_mesh(mesh, pose, k, cfg, false);
  check_size(k, cfg);
  RenderResult out;
  out.mask = SoftMask(cfg.width, cfg.height);
  out.empty = proj.faces.empty();
  std::vector<const ProjectedFace*> all;
  for (const ProjectedFace& f : proj.faces) all.push_back(&f);
  PixelScratch scratch;
  const double inv_sigma = 1.0 / cfg.sigma;
  for (int v = 0; v < cfg.height; ++v) {
    for (int u = 0; u < cfg.width; ++u) {
      out.mask.at(u, v) = shade_pixel(Vec2(u, v), all, inv_sigma, false, scratch);
    }
  }
  return out;
}

RenderGradients render_with_gradients(const Mesh& mesh, const Pose& pose, const Intrinsics& k,
                                      const RenderConfig& cfg, const Image<double>& upstream) {
  const Projection proj = project_mesh(mesh, pose, k, cfg, false);
  check_size(k, cfg);
  check_upstream(upstream, cfg);
  std::vector<const ProjectedFace*> all;
  for (const ProjectedFace& f : proj.faces) all.push_back(&f);
  std::vector<Vec2> grad_uv(mesh.vertices.size(), Vec2::Zero());
  PixelScratch scratch;
  const double inv_sigma = 1.0 / cfg.sigma;
  double value = 0.0;
  for (int v = 0; v < cfg.height; ++v) {
    for (int u = 0; u < cfg.width; ++u) {
      const double g = upstream.at(u, v);
      value += g * shade_pixel(Vec2(u, v), all, inv_sigma, false, scratch);
      backprop_pixel(g, inv_sigma, scratch, grad_uv);
    }
  }
  RenderGradients out = chain_to_pose(mesh, pose, k, proj, grad_uv);
  out.value = value;
  out.empty = proj.faces.empty();
  return out;
}

}  // namespace reference
}  // namespace posekit
