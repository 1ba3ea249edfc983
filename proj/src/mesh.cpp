#include "posekit/mesh.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "posekit/error.hpp"

namespace posekit {

void validate(const Mesh& mesh) {
  require(mesh.vertices.size() >= 3, ErrorCode::kInvalidInput, "mesh needs at least 3 vertices");
  const int n = static_cast<int>(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) {
    require(v.allFinite(), ErrorCode::kInvalidInput, "mesh has non-finite vertices");
  }
  for (const Face& f : mesh.faces) {
    for (int i : f) {
      require(i >= 0 && i < n, ErrorCode::kInvalidInput, "face index out of range");
    }
  }
}

Mesh remove_degenerate_faces(Mesh mesh, double min_area) {
  std::vector<Face> kept;
  kept.reserve(mesh.faces.size());
  for (const Face& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const double area = 0.5 * (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).norm();
    if (area > min_area) kept.push_back(f);
  }
  mesh.faces = std::move(kept);
  return mesh;
}

Mesh read_obj(std::istream& in) {
  Mesh mesh;
  std::string line;
  int line_no = 0;
  auto parse_error = [&](const std::string& what) {
    fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      std::string tok[3];
      if (!(ss >> tok[0] >> tok[1] >> tok[2])) parse_error("vertex needs three coordinates");
      Vec3 v;
      for (int i = 0; i < 3; ++i) {
        try {
          size_t used = 0;
          v[i] = std::stod(tok[i], &used);
          if (used != tok[i].size()) parse_error("malformed coordinate '" + tok[i] + "'");
        } catch (const std::logic_error&) {
          parse_error("malformed coordinate '" + tok[i] + "'");
        }
      }
      if (!v.allFinite()) parse_error("non-finite vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        int i = 0;
        try {
          i = std::stoi(head);
        } catch (const std::logic_error&) {
          parse_error("malformed face index '" + tok + "'");
        }
        const int n = static_cast<int>(mesh.vertices.size());
        const int zero_based = i > 0 ? i - 1 : n + i;
        if (i == 0 || zero_based < 0 || zero_based >= n) parse_error("face index out of range");
        idx.push_back(zero_based);
      }
      if (idx.size() < 3) parse_error("face needs at least three vertices");
      for (size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  if (mesh.vertices.size() < 3) fail(ErrorCode::kParse, "mesh has fewer than 3 vertices");
  return mesh;
}

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  try {
    return read_obj(in);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParse) fail(ErrorCode::kParse, path.string() + ": " + e.what());
    throw;
  }
}

void write_obj(std::ostream& out, const Mesh& mesh) {
  out.precision(17);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Face& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  write_obj(out, mesh);
}

double bounding_diagonal(const Mesh& mesh) {
  if (mesh.vertices.empty()) return 0.0;
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return (hi - lo).norm();
}

Mesh make_box(const Vec3& e) {
  Mesh m;
  const Vec3 h = e / 2;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                            (i & 4) ? h.z() : -h.z());
  }
  // Outward counter-clockwise winding.
  m.faces = {{0, 2, 3}, {0, 3, 1},   // -z
             {4, 5, 7}, {4, 7, 6},   // +z
             {0, 1, 5}, {0, 5, 4},   // -y
             {2, 6, 7}, {2, 7, 3},   // +y
             {0, 4, 6}, {0, 6, 2},   // -x
             {1, 3, 7}, {1, 7, 5}};  // +x
  return m;
}

Mesh make_icosahedron(double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& v : m.vertices) v = v.normalized() * radius;
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  return m;
}

Mesh make_uv_sphere(int slices, int stacks, double radius) {
  require(slices >= 3 && stacks >= 2, ErrorCode::kInvalidInput, "sphere needs slices >= 3, stacks >= 2");
  Mesh m;
  const double pi = std::numbers::pi;
  m.vertices.emplace_back(0, radius, 0);
  for (int i = 1; i < stacks; ++i) {
    const double phi = pi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double theta = 2 * pi * j / slices;
      m.vertices.emplace_back(radius * std::sin(phi) * std::cos(theta), radius * std::cos(phi),
                              radius * std::sin(phi) * std::sin(theta));
    }
  }
  m.vertices.emplace_back(0, -radius, 0);
  const int bottom = static_cast<int>(m.vertices.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) m.faces.push_back({0, ring(1, j + 1), ring(1, j)});
  for (int i = 1; i + 1 < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      m.faces.push_back({ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)});
      m.faces.push_back({ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)});
    }
  }
  for (int j = 0; j < slices; ++j) m.faces.push_back({bottom, ring(stacks - 1, j), ring(stacks - 1, j + 1)});
  return m;
}

Mesh make_lathe(const std::vector<Vec2>& profile, int slices) {
  require(profile.size() >= 2 && slices >= 3, ErrorCode::kInvalidInput, "lathe needs 2 rings and 3 slices");
  Mesh m;
  const double pi = std::numbers::pi;
  for (const Vec2& p : profile) {
    for (int j = 0; j < slices; ++j) {
      const double theta = 2 * pi * j / slices;
      m.vertices.emplace_back(p.x() * std::cos(theta), p.y(), p.x() * std::sin(theta));
    }
  }
  auto at = [&](size_t i, int j) { return static_cast<int>(i * slices + (j % slices)); };
  for (size_t i = 0; i + 1 < profile.size(); ++i) {
    for (int j = 0; j < slices; ++j) {
      m.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      m.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  }
  return remove_degenerate_faces(std::move(m));
}

Mesh normalize_to_unit_diagonal(Mesh mesh) {
  require(!mesh.vertices.empty(), ErrorCode::kInvalidInput, "empty mesh");
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 center = (lo + hi) / 2;
  const double diag = (hi - lo).norm();
  require(diag > 0, ErrorCode::kInvalidInput, "mesh has zero extent");
  for (Vec3& v : mesh.vertices) v = (v - center) / diag;
  return mesh;
}

}  // namespace posekit
