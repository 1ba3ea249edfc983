#include "posekit/shape.hpp"

#include <cmath>
#include <functional>
#include <numbers>

#include "posekit/error.hpp"

namespace posekit {

Mesh apply_deformation(const Mesh& prior, const Deformation& delta) {
  require(prior.vertices.size() == delta.deltas.size(), ErrorCode::kInvalidInput,
          "deformation has " + std::to_string(delta.deltas.size()) + " offsets for " +
              std::to_string(prior.vertices.size()) + " vertices");
  Mesh out = prior;
  for (size_t i = 0; i < out.vertices.size(); ++i) {
    require(delta.deltas[i].allFinite(), ErrorCode::kInvalidInput, "deformation is not finite");
    out.vertices[i] += delta.deltas[i];
  }
  return out;
}

Mesh load_prior(const std::string& category, const std::filesystem::path& path,
                const PriorCheck& check) {
  Mesh mesh = remove_degenerate_faces(read_obj(path));
  const size_t n = mesh.vertices.size();
  if (!check.relaxed_count) {
    const size_t lo = check.expected_vertices > check.tolerance ? check.expected_vertices - check.tolerance : 0;
    require(n >= lo && n <= check.expected_vertices + check.tolerance, ErrorCode::kVertexCount,
            category + " prior has " + std::to_string(n) + " vertices, expected " +
                std::to_string(check.expected_vertices) + " +- " + std::to_string(check.tolerance));
  }
  const double diag = bounding_diagonal(mesh);
  require(diag <= check.max_diagonal, ErrorCode::kOutOfBounds,
          category + " prior diagonal " + std::to_string(diag) + " exceeds the canonical bound");
  return mesh;
}

std::filesystem::path prior_path(const std::filesystem::path& assets_dir, const std::string& category) {
  return assets_dir / "priors" / (category + ".obj");
}

namespace {

constexpr int kRings = 32;
constexpr int kSlices = 32;

std::vector<Vec2> sample_profile(const std::function<double(double)>& radius_at) {
  std::vector<Vec2> profile;
  for (int i = 0; i < kRings; ++i) {
    const double h = static_cast<double>(i) / (kRings - 1);
    profile.emplace_back(radius_at(h), h);
  }
  return profile;
}

Mesh scaled(Mesh m, const Vec3& s) {
  for (Vec3& v : m.vertices) v = v.cwiseProduct(s);
  return m;
}

}  // namespace

Mesh make_category_prior(const std::string& category) {
  const double pi = std::numbers::pi;
  Mesh m;
  if (category == "bottle") {
    m = make_lathe(sample_profile([&](double h) {
      if (h < 0.6) return 0.3;
      if (h < 0.8) return 0.3 - 0.2 * std::sin((h - 0.6) / 0.2 * pi / 2);
      return 0.1;
    }), kSlices);
  } else if (category == "bowl") {
    m = make_lathe(sample_profile([&](double h) { return 0.2 + 0.8 * std::sin(h * pi / 2); }), kSlices);
    m = scaled(std::move(m), {1.0, 0.45, 1.0});
  } else if (category == "can") {
    m = make_lathe(sample_profile([](double) { return 0.33; }), kSlices);
  } else if (category == "mug") {
    m = make_lathe(sample_profile([](double h) { return 0.42 + 0.03 * h; }), kSlices);
  } else if (category == "camera") {
    m = make_lathe(sample_profile([&](double h) { return 0.5 * std::sin(h * pi) + 0.02; }), kSlices);
    m = scaled(std::move(m), {1.3, 0.8, 0.6});
  } else if (category == "laptop") {
    m = make_lathe(sample_profile([&](double h) { return 0.5 * std::sin(h * pi) + 0.02; }), kSlices);
    m = scaled(std::move(m), {1.0, 0.08, 0.75});
  } else {
    fail(ErrorCode::kInvalidInput, "no procedural prior for category '" + category + "'");
  }
  return normalize_to_unit_diagonal(std::move(m));
}

}  // namespace posekit
