#include "posekit/shape.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "posekit/config.hpp"
#include "posekit/error.hpp"
#include "posekit/losses.hpp"
#include "test_support.hpp"

namespace posekit {
namespace {

const std::filesystem::path kAssets = POSEKIT_ASSETS_DIR;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

Deformation random_delta(std::mt19937_64& rng, size_t n) {
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  Deformation d = Deformation::zero(n);
  for (Vec3& v : d.deltas) v = Vec3(u(rng), u(rng), u(rng));
  return d;
}

TEST(ApplyDeformation, ZeroIsIdentity) {
  const Mesh m = make_icosahedron(0.5);
  const Mesh out = apply_deformation(m, Deformation::zero(m.vertices.size()));
  EXPECT_EQ(out.vertices, m.vertices);
  EXPECT_EQ(out.faces, m.faces);
}

TEST(ApplyDeformation, UniformShift) {
  const Mesh m = make_icosahedron(0.5);
  Deformation d{Points(m.vertices.size(), Vec3(0, 0, 0.1))};
  const Mesh out = apply_deformation(m, d);
  for (size_t i = 0; i < m.vertices.size(); ++i) {
    EXPECT_EQ(out.vertices[i].z(), m.vertices[i].z() + 0.1);
    EXPECT_EQ(out.vertices[i].head<2>(), m.vertices[i].head<2>());
  }
  EXPECT_EQ(out.faces, m.faces);
}

TEST(ApplyDeformation, ReachesAlignedTarget) {
  const Mesh prior = make_uv_sphere(12, 8, 0.5);
  Mesh cad = prior;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> r(0.8, 1.2);
  for (Vec3& v : cad.vertices) v *= r(rng);
  Deformation d = Deformation::zero(prior.vertices.size());
  for (size_t i = 0; i < d.deltas.size(); ++i) d.deltas[i] = cad.vertices[i] - prior.vertices[i];
  EXPECT_EQ(chamfer(apply_deformation(prior, d).vertices, cad.vertices), 0.0);
}

TEST(ApplyDeformation, Linear) {
  std::mt19937_64 rng(2);
  const Mesh m = make_uv_sphere(10, 6, 0.5);
  const Deformation a = random_delta(rng, m.vertices.size());
  const Deformation b = random_delta(rng, m.vertices.size());
  Deformation sum = a;
  for (size_t i = 0; i < sum.deltas.size(); ++i) sum.deltas[i] += b.deltas[i];
  const Mesh twice = apply_deformation(apply_deformation(m, a), b);
  const Mesh once = apply_deformation(m, sum);
  for (size_t i = 0; i < m.vertices.size(); ++i) EXPECT_LT((twice.vertices[i] - once.vertices[i]).norm(), 1e-15);
  EXPECT_NO_THROW(validate(twice));
}

TEST(ApplyDeformation, CountMismatch) {
  const Mesh m = make_icosahedron(0.5);
  EXPECT_EQ(code_of([&] { apply_deformation(m, Deformation::zero(3)); }), ErrorCode::kInvalidInput);
  Deformation nan = Deformation::zero(m.vertices.size());
  nan.deltas[0].x() = NAN;
  EXPECT_EQ(code_of([&] { apply_deformation(m, nan); }), ErrorCode::kInvalidInput);
}

TEST(LoadPrior, BundledCubeRelaxed) {
  PriorCheck check;
  check.relaxed_count = true;
  const Mesh cube = load_prior("cube", kAssets / "test" / "unit_cube.obj", check);
  EXPECT_EQ(cube.vertices.size(), 8u);
  EXPECT_EQ(cube.faces.size(), 12u);
  EXPECT_NEAR(bounding_diagonal(cube), 1.0, 1e-12);
}

TEST(LoadPrior, CubeFailsStrictCount) {
  EXPECT_EQ(code_of([] { load_prior("cube", kAssets / "test" / "unit_cube.obj"); }), ErrorCode::kVertexCount);
}

TEST(LoadPrior, BundledCategoryPriors) {
  for (const std::string& category : CategoryConfig::defaults().category_names()) {
    const Mesh m = load_prior(category, prior_path(kAssets, category));
    EXPECT_EQ(m.vertices.size(), 1024u) << category;
    EXPECT_LE(bounding_diagonal(m), 1.0 + 1e-3) << category;
  }
}

TEST(LoadPrior, NanVertexIsParseError) {
  const testing::TempDir dir("posekit-prior");
  const auto path = dir.path() / "bad.obj";
  std::ofstream(path) << "v 0 0 0\nv nan 0 0\nv 0 1 0\nf 1 2 3\n";
  PriorCheck check;
  check.relaxed_count = true;
  EXPECT_EQ(code_of([&] { load_prior("bad", path, check); }), ErrorCode::kParse);
}

TEST(LoadPrior, OversizedMeshOutOfBounds) {
  const testing::TempDir dir("posekit-prior");
  const auto path = dir.path() / "big.obj";
  Mesh big = normalize_to_unit_diagonal(make_box(Vec3::Ones()));
  for (Vec3& v : big.vertices) v *= 2;
  write_obj(path, big);
  PriorCheck check;
  check.relaxed_count = true;
  EXPECT_EQ(code_of([&] { load_prior("big", path, check); }), ErrorCode::kOutOfBounds);
}

TEST(LoadPrior, DropsDegenerateFaces) {
  const testing::TempDir dir("posekit-prior");
  const auto path = dir.path() / "sliver.obj";
  std::ofstream(path) << "v 0 0 0\nv 0.5 0 0\nv 0 0.5 0\nv 0.25 0 0\nf 1 2 3\nf 1 2 4\n";
  PriorCheck check;
  check.relaxed_count = true;
  EXPECT_EQ(load_prior("sliver", path, check).faces.size(), 1u);
}

TEST(Obj, RoundTripAndPolygons) {
  std::istringstream in("# comment\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4/4/1\nf -4 -3 -2\n");
  const Mesh m = read_obj(in);
  EXPECT_EQ(m.vertices.size(), 4u);
  ASSERT_EQ(m.faces.size(), 3u);
  EXPECT_EQ(m.faces[1], (Face{0, 2, 3}));
  EXPECT_EQ(m.faces[2], (Face{0, 1, 2}));

  std::stringstream buf;
  write_obj(buf, m);
  const Mesh back = read_obj(buf);
  EXPECT_EQ(back.vertices, m.vertices);
  EXPECT_EQ(back.faces, m.faces);
}

TEST(Obj, BadIndexIsParseError) {
  std::istringstream in("v 0 0 0\nv 1 0 0\nf 1 2 9\n");
  EXPECT_EQ(code_of([&] { read_obj(in); }), ErrorCode::kParse);
}

}  // namespace
}  // namespace posekit
