// Writes the procedural category priors to <assets>/priors/<category>.obj
// and a cube test prior to <assets>/test/unit_cube.obj.
#include <filesystem>
#include <iostream>

#include "posekit/config.hpp"
#include "posekit/mesh.hpp"
#include "posekit/shape.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: gen_priors <assets dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  try {
    std::filesystem::create_directories(dir / "priors");
    for (const std::string& category : posekit::CategoryConfig::defaults().category_names()) {
      const posekit::Mesh mesh = posekit::make_category_prior(category);
      posekit::write_obj(posekit::prior_path(dir, category), mesh);
      std::cout << category << ": " << mesh.vertices.size() << " vertices, " << mesh.faces.size() << " faces\n";
    }
    // Eight-vertex cube for loader tests with the relaxed count check.
    std::filesystem::create_directories(dir / "test");
    posekit::write_obj(dir / "test" / "unit_cube.obj",
                       posekit::normalize_to_unit_diagonal(posekit::make_box(posekit::Vec3::Ones())));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
