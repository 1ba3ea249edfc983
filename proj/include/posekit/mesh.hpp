#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "posekit/geometry.hpp"

namespace posekit {

using Face = std::array<int, 3>;

/// Triangle mesh in the canonical object frame.
struct Mesh {
  Points vertices;
  std::vector<Face> faces;
};

/// Index range, vertex count and finiteness checks. Throws kInvalidInput.
void validate(const Mesh& mesh);

/// Drops faces whose area is at most min_area.
Mesh remove_degenerate_faces(Mesh mesh, double min_area = 1e-12);

/// Wavefront OBJ subset: `v x y z` and `f a b c ...` records (1-based, negative
/// indices relative, `a/b/c` forms take the vertex index). Polygons are fan
/// triangulated; other records are ignored. Throws kParse.
Mesh read_obj(std::istream& in);
Mesh read_obj(const std::filesystem::path& path);
void write_obj(std::ostream& out, const Mesh& mesh);
void write_obj(const std::filesystem::path& path, const Mesh& mesh);

/// Diagonal of the axis-aligned box around the vertices.
double bounding_diagonal(const Mesh& mesh);

// Procedural meshes for tests, synthetic scenes and bundled priors.

/// Axis-aligned box centered at the origin, 8 vertices / 12 faces.
Mesh make_box(const Vec3& extents);
/// Regular icosahedron of the given circumradius, 12 vertices / 20 faces.
Mesh make_icosahedron(double radius);
/// Latitude-longitude sphere with `slices` columns and `stacks` bands; poles
/// are single vertices. Faces = 2 * slices * (stacks - 1).
Mesh make_uv_sphere(int slices, int stacks, double radius);
/// Surface of revolution around +y. profile[i] = (radius, height) from bottom
/// to top; each ring has `slices` vertices. Open at both ends.
Mesh make_lathe(const std::vector<Vec2>& profile, int slices);

/// Translates the mesh to its box center and scales its box diagonal to 1.
Mesh normalize_to_unit_diagonal(Mesh mesh);

}  // namespace posekit
