#include "posekit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "posekit/error.hpp"

namespace posekit {

GradcheckReport run_gradcheck(const Mesh& mesh, const Intrinsics& k, double sigma,
                              const GradcheckOptions& options) {
  validate(mesh);
  validate(k);
  require(options.poses >= 1 && options.step > 0 && options.floor > 0, ErrorCode::kInvalidInput,
          "gradcheck needs at least one pose and positive step and floor");
  const RenderConfig cfg = RenderConfig::for_intrinsics(k, sigma);
  validate(cfg);

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal;
  const double diagonal = bounding_diagonal(mesh);
  require(diagonal > 0, ErrorCode::kInvalidInput, "mesh has zero extent");

  GradcheckReport report;
  auto check = [&](const std::string& name, double analytic, const std::function<double(double)>& f) {
    const double numeric = (f(options.step) - f(-options.step)) / (2 * options.step);
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), options.floor});
    ++report.partials;
    if (rel >= report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst = {name, analytic, numeric, rel};
    }
  };

  for (int trial = 0; trial < options.poses; ++trial) {
    Pose pose;
    pose.rotation = Rotation(normal(rng), normal(rng), normal(rng), normal(rng));
    pose.scale = Vec3(0.6 + 0.2 * unit(rng), 0.6 + 0.2 * unit(rng), 0.6 + 0.2 * unit(rng));
    // Object spans roughly 40% of the image width.
    const double depth = k.fx * pose.scalar_scale() * diagonal / (0.4 * k.width) * (1.0 + 0.1 * unit(rng));
    pose.translation = decouple_translation(k.cx + 0.1 * k.width * unit(rng), k.cy + 0.1 * k.height * unit(rng),
                                            depth, k);
    Image<double> up(k.width, k.height);
    for (double& v : up.data) v = unit(rng);

    const RenderGradients g = render_with_gradients(mesh, pose, k, cfg, up);
    auto value = [&](const Mesh& m, const Pose& p) {
      const RenderResult r = render_silhouette(m, p, k, cfg);
      double s = 0.0;
      for (size_t i = 0; i < up.data.size(); ++i) s += up.data[i] * r.mask.data[i];
      return s;
    };

    for (int i = 0; i < 4; ++i) {
      check("q" + std::to_string(i), g.d_quaternion[i], [&](double h) {
        Pose p = pose;
        Vec4 q = pose.rotation.coeffs();
        q[i] += h;
        p.rotation = Rotation(q);
        return value(mesh, p);
      });
    }
    for (int i = 0; i < 3; ++i) {
      check("t" + std::to_string(i), g.d_translation[i], [&](double h) {
        Pose p = pose;
        p.translation[i] += h;
        return value(mesh, p);
      });
      check("s" + std::to_string(i), g.d_scale[i], [&](double h) {
        Pose p = pose;
        p.scale[i] += h;
        return value(mesh, p);
      });
    }
    static const char* kAxis = "xyz";
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
      for (int i = 0; i < 3; ++i) {
        check("v" + std::to_string(v) + "." + kAxis[i], g.d_vertices[v][i], [&](double h) {
          Mesh m = mesh;
          m.vertices[v][i] += h;
          return value(m, pose);
        });
      }
    }
  }
  return report;
}

}  // namespace posekit
