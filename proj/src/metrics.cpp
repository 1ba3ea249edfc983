#include "posekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "posekit/error.hpp"

namespace posekit {

bool Box3D::contains(const Vec3& p) const {
  const Vec3 local = rotation.matrix().transpose() * (p - center);
  return (local.cwiseAbs().array() <= extents.array() / 2).all();
}

namespace {

struct Polygon {
  Vec3 normal;  // outward
  std::vector<Vec3> vertices;
};

struct Plane {
  Vec3 normal;  // outward
  double offset;  // inside: normal . p <= offset
};

std::vector<Polygon> box_faces(const Box3D& b) {
  const Mat3 r = b.rotation.matrix();
  const Vec3 h = b.extents / 2;
  std::vector<Polygon> faces;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, w = (axis + 2) % 3;
    for (double side : {-1.0, 1.0}) {
      Polygon f;
      f.normal = side * r.col(axis);
      const Vec3 c = b.center + side * h[axis] * r.col(axis);
      const Vec3 du = h[u] * r.col(u), dw = h[w] * r.col(w);
      f.vertices = {c - du - dw, c + du - dw, c + du + dw, c - du + dw};
      faces.push_back(std::move(f));
    }
  }
  return faces;
}

std::vector<Plane> box_planes(const Box3D& b) {
  std::vector<Plane> planes;
  for (const Polygon& f : box_faces(b)) planes.push_back({f.normal, f.normal.dot(f.vertices[0])});
  return planes;
}

Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

/// Cyclic order around the centroid, counter-clockwise seen from +normal.
std::vector<Vec3> order_cap(std::vector<Vec3> pts, const Vec3& normal, double tol) {
  std::vector<Vec3> unique;
  for (const Vec3& p : pts) {
    bool dup = false;
    for (const Vec3& q : unique) dup |= (p - q).squaredNorm() < tol * tol;
    if (!dup) unique.push_back(p);
  }
  if (unique.size() < 3) return {};
  const Vec3 c = centroid(unique);
  const Vec3 e1 = normal.unitOrthogonal();
  const Vec3 e2 = normal.cross(e1);
  std::sort(unique.begin(), unique.end(), [&](const Vec3& a, const Vec3& b) {
    return std::atan2((a - c).dot(e2), (a - c).dot(e1)) < std::atan2((b - c).dot(e2), (b - c).dot(e1));
  });
  return unique;
}

std::vector<Polygon> clip(const std::vector<Polygon>& poly, const Plane& plane, double tol) {
  std::vector<Polygon> out;
  std::vector<Vec3> cap;
  for (const Polygon& f : poly) {
    Polygon kept{f.normal, {}};
    const size_t n = f.vertices.size();
    for (size_t i = 0; i < n; ++i) {
      const Vec3& a = f.vertices[i];
      const Vec3& b = f.vertices[(i + 1) % n];
      const double da = plane.normal.dot(a) - plane.offset;
      const double db = plane.normal.dot(b) - plane.offset;
      if (da <= 0) {
        kept.vertices.push_back(a);
        if (da >= -tol) cap.push_back(a);
      }
      if ((da < 0 && db > 0) || (da > 0 && db < 0)) {
        const Vec3 x = a + (b - a) * (da / (da - db));
        kept.vertices.push_back(x);
        cap.push_back(x);
      }
    }
    if (kept.vertices.size() >= 3) out.push_back(std::move(kept));
  }
  std::vector<Vec3> ordered = order_cap(std::move(cap), plane.normal, tol);
  if (!ordered.empty()) {
    // Drop any existing face lying in this plane; the cap replaces it.
    std::erase_if(out, [&](const Polygon& f) { return f.normal.dot(plane.normal) > 1 - 1e-12 &&
                                                      std::abs(plane.normal.dot(centroid(f.vertices)) - plane.offset) < tol; });
    out.push_back({plane.normal, std::move(ordered)});
  }
  return out;
}

double polytope_volume(const std::vector<Polygon>& faces) {
  if (faces.size() < 4) return 0.0;
  Vec3 ref = Vec3::Zero();
  size_t count = 0;
  for (const Polygon& f : faces) {
    for (const Vec3& v : f.vertices) {
      ref += v;
      ++count;
    }
  }
  ref /= static_cast<double>(count);
  double volume = 0.0;
  for (const Polygon& f : faces) {
    Vec3 area_vec = Vec3::Zero();
    const size_t n = f.vertices.size();
    for (size_t i = 0; i < n; ++i) area_vec += f.vertices[i].cross(f.vertices[(i + 1) % n]);
    const double area = 0.5 * std::abs(area_vec.dot(f.normal));
    const double height = f.normal.dot(centroid(f.vertices) - ref);
    volume += height * area / 3.0;
  }
  return std::max(0.0, volume);
}

}  // namespace

double intersection_volume(const Box3D& a, const Box3D& b) {
  const double scale = std::max(a.extents.maxCoeff(), b.extents.maxCoeff());
  const double tol = 1e-12 * scale;
  std::vector<Polygon> poly = box_faces(a);
  for (const Plane& plane : box_planes(b)) {
    poly = clip(poly, plane, tol);
    if (poly.empty()) return 0.0;
  }
  return polytope_volume(poly);
}

double iou3d(const Box3D& a, const Box3D& b) {
  require((a.extents.array() > 0).all() && (b.extents.array() > 0).all(), ErrorCode::kInvalidInput,
          "box extents must be positive");
  const double inter = intersection_volume(a, b);
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

namespace {

struct RotationMatch {
  double angle_rad;
  Mat3 gt_equivalent;
};

RotationMatch best_rotation(const Mat3& pred, const Mat3& gt, const SymmetrySpec& sym) {
  RotationMatch best{std::numeric_limits<double>::infinity(), gt};
  for (const Mat3& s : symmetry_rotations(sym)) {
    const Mat3 cand = gt * s;
    const double a = rotation_angle_between(pred, cand);
    if (a < best.angle_rad) best = {a, cand};
  }
  return best;
}

std::string fmt_number(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

PoseError pose_error(const Pose& pred, const Pose& gt, const SymmetrySpec& sym) {
  const RotationMatch m = best_rotation(pred.rotation.matrix(), gt.rotation.matrix(), sym);
  return {m.angle_rad * 180.0 / std::numbers::pi, (pred.translation - gt.translation).norm() * 100.0};
}

std::vector<std::string> metric_names(const EvalThresholds& t) {
  std::vector<std::string> names;
  for (double k : t.iou) names.push_back("IOU_" + fmt_number(std::round(k * 100)));
  for (const auto& [deg, cm] : t.deg_cm) names.push_back(fmt_number(deg) + "deg" + fmt_number(cm) + "cm");
  return names;
}

MetricTable evaluate(const std::vector<EvalRecord>& records, const EvalThresholds& thresholds,
                     const std::set<std::string>& allowed) {
  require(!records.empty(), ErrorCode::kInvalidInput, "no evaluation records");
  for (const EvalRecord& r : records) {
    require(allowed.empty() || allowed.contains(r.category), ErrorCode::kInvalidInput,
            "category '" + r.category + "' is not configured");
    validate(r.predicted);
    validate(r.ground_truth);
  }

  struct PerRecord {
    double iou = 0.0;
    PoseError err;
  };
  std::vector<PerRecord> per(records.size());
  const long n = static_cast<long>(records.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const EvalRecord& r = records[i];
    SymmetrySpec sym = r.symmetry;
    if (sym.kind == SymmetrySpec::Kind::kAxis) sym.discretization = 360;
    const RotationMatch m = best_rotation(r.predicted.rotation.matrix(), r.ground_truth.rotation.matrix(), sym);
    Box3D gt_box = Box3D::from_pose(r.ground_truth);
    gt_box.rotation = Rotation::from_matrix(m.gt_equivalent);
    per[i].iou = iou3d(Box3D::from_pose(r.predicted), gt_box);
    per[i].err = {m.angle_rad * 180.0 / std::numbers::pi,
                  (r.predicted.translation - r.ground_truth.translation).norm() * 100.0};
  }

  const std::vector<std::string> names = metric_names(thresholds);
  std::map<std::string, std::vector<size_t>> by_category;
  for (size_t i = 0; i < records.size(); ++i) by_category[records[i].category].push_back(i);

  MetricTable table;
  table.mean.category = "mean";
  std::vector<double> sums(names.size(), 0.0);
  for (const auto& [category, idx] : by_category) {
    CategoryMetrics cm;
    cm.category = category;
    cm.count = idx.size();
    size_t col = 0;
    auto add = [&](auto&& passes) {
      size_t hits = 0;
      for (size_t i : idx) hits += passes(per[i]);
      const double pct = 100.0 * static_cast<double>(hits) / static_cast<double>(idx.size());
      cm.values.push_back({names[col], pct});
      sums[col] += pct;
      ++col;
    };
    for (double k : thresholds.iou) add([k](const PerRecord& p) { return p.iou >= k; });
    for (const auto& [deg, cmt] : thresholds.deg_cm) {
      add([deg, cmt](const PerRecord& p) { return p.err.rotation_deg <= deg && p.err.translation_cm <= cmt; });
    }
    for (size_t i : idx) cm.symmetry_active |= records[i].symmetry.kind == SymmetrySpec::Kind::kAxis;
    table.mean.count += cm.count;
    table.categories.push_back(std::move(cm));
  }
  for (size_t c = 0; c < names.size(); ++c) {
    table.mean.values.push_back({names[c], sums[c] / static_cast<double>(table.categories.size())});
  }
  return table;
}

}  // namespace posekit
