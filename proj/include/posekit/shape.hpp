#pragma once

#include <filesystem>
#include <string>

#include "posekit/mesh.hpp"

namespace posekit {

/// Per-vertex canonical offsets, index-aligned with a prior mesh.
struct Deformation {
  Points deltas;

  static Deformation zero(size_t vertex_count) { return {Points(vertex_count, Vec3::Zero())}; }
};

/// prior + delta, vertex-wise. Faces are copied unchanged.
/// Throws kInvalidInput on a vertex count mismatch or non-finite offsets.
Mesh apply_deformation(const Mesh& prior, const Deformation& delta);

struct PriorCheck {
  size_t expected_vertices = 1024;
  size_t tolerance = 32;
  /// Skips the vertex-count check (small test assets).
  bool relaxed_count = false;
  double max_diagonal = 1.0 + 1e-3;
};

/// Loads a category prior from an OBJ file, drops degenerate faces and
/// checks the vertex count and the canonical bound. Throws kParse,
/// kVertexCount or kOutOfBounds.
Mesh load_prior(const std::string& category, const std::filesystem::path& path,
                const PriorCheck& check = {});

/// `<assets>/priors/<category>.obj`
std::filesystem::path prior_path(const std::filesystem::path& assets_dir, const std::string& category);

/// Procedural prior for a known category (bottle, bowl, camera, can, laptop,
/// mug), 1024 vertices, unit diagonal. Used to build the bundled assets.
Mesh make_category_prior(const std::string& category);

}  // namespace posekit
