// Runs the posekit binary end to end and checks exit codes and outputs.
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "posekit/dataio.hpp"
#include "test_support.hpp"

namespace posekit {
namespace {

namespace fs = std::filesystem;

const std::string kBinary = POSEKIT_CLI;
const fs::path kAssets = POSEKIT_ASSETS_DIR;

int run(const std::string& args) {
  const int status = std::system((kBinary + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  fs::path at(const std::string& name) const { return dir_.path() / name; }
  std::string q(const std::string& name) const { return "'" + at(name).string() + "'"; }
  testing::TempDir dir_{"posekit-cli"};
};

TEST_F(Cli, UsageErrorsAreValidation) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("fit --mesh"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, SolveUmeyama) {
  std::ofstream src(at("src.txt")), dst(at("dst.txt"));
  const Mat3 r = Rotation::from_axis_angle(Vec3::UnitZ(), 0.5).matrix();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 20; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const Vec3 m = 2.0 * r * p + Vec3(0.1, 0.2, 0.3);
    src << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    dst.precision(17);
    dst << m.x() << ' ' << m.y() << ' ' << m.z() << '\n';
  }
  src.close();
  dst.close();
  ASSERT_EQ(run("solve-umeyama --src " + q("src.txt") + " --dst " + q("dst.txt") + " --out " + q("s.json")), 0);
  const nlohmann::json j = read_json_file(at("s.json"));
  EXPECT_NEAR(j["scale"].get<double>(), 2.0, 1e-4);

  std::ofstream(at("bad.txt")) << "1 2\n";
  EXPECT_EQ(run("solve-umeyama --src " + q("bad.txt") + " --dst " + q("dst.txt")), 2);
  EXPECT_EQ(run("solve-umeyama --src " + q("missing.txt") + " --dst " + q("dst.txt")), 2);
  // Unwritable output is a runtime failure, not a usage problem.
  EXPECT_EQ(run("solve-umeyama --src " + q("src.txt") + " --dst " + q("dst.txt") + " --out " + q("no/such/dir/s.json")),
            1);
}

TEST_F(Cli, SynthThenPropagate) {
  write_json_file(at("k.json"), to_json(Intrinsics{150, 150, 80, 60, 160, 120}));
  ASSERT_EQ(run("--seed 3 synth --out " + q("video") + " --frames 4 --intrinsics " + q("k.json") +
                " --size 0.3 --deg-per-frame 0 --step-mm 0 0 0 --keyframe-stride 2"),
            0);
  EXPECT_TRUE(fs::exists(at("video") / "ground_truth.json"));
  EXPECT_EQ(load_video(at("video")).frame_count(), 4u);
  ASSERT_EQ(run("propagate --video " + q("video") + " --out " + q("prop.json") + " --cloud-points 800"), 0);
  const Annotations a = read_annotations(at("prop.json"));
  EXPECT_EQ(a.frames.size(), 4u);
  EXPECT_TRUE(a.unpropagated.empty());

  fs::remove(at("video") / "mask" / "000001.png");
  EXPECT_EQ(run("propagate --video " + q("video") + " --out " + q("prop2.json")), 2);
}

TEST_F(Cli, BadConfigIsValidation) {
  std::ofstream(at("bad.conf")) << "weights.lambda1 = abc\n";
  EXPECT_EQ(run("--config " + q("bad.conf") + " gradcheck --poses 1"), 2);
}

TEST_F(Cli, Gradcheck) {
  EXPECT_EQ(run("gradcheck --mesh '" + (kAssets / "test" / "unit_cube.obj").string() + "' --poses 2"), 0);
}

TEST_F(Cli, FitWritesPoseAndTrajectory) {
  write_json_file(at("k.json"), to_json(Intrinsics{80, 80, 32, 32, 64, 64}));
  ASSERT_EQ(run("synth --out " + q("video") + " --frames 1 --intrinsics " + q("k.json") + " --size 0.9 --distance 1.6" +
                " --mesh '" + (kAssets / "test" / "unit_cube.obj").string() + "'"),
            0);
  const nlohmann::json gt = read_json_file(at("video") / "ground_truth.json");
  nlohmann::json init = gt["0"];
  init["translation_m"][2] = init["translation_m"][2].get<double>() * 1.05;
  write_json_file(at("init.json"), init);
  ASSERT_EQ(run("fit --mesh '" + (kAssets / "test" / "unit_cube.obj").string() + "' --mask " +
                q("video/mask/000000.png") + " --intrinsics " + q("video/intrinsics.json") + " --init " +
                q("init.json") + " --out " + q("fit.json") + " --max-iters 30"),
            0);
  EXPECT_TRUE(fs::exists(at("fit.json")));
  std::ifstream csv(at("fit.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "iteration,sigma,loss");
}

}  // namespace
}  // namespace posekit
