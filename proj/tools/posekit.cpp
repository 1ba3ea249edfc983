#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "posekit/annoserve.hpp"
#include "posekit/config.hpp"
#include "posekit/dataio.hpp"
#include "posekit/error.hpp"
#include "posekit/fit.hpp"
#include "posekit/gradcheck.hpp"
#include "posekit/metrics.hpp"
#include "posekit/registration.hpp"
#include "posekit/shape.hpp"
#include "posekit/umeyama.hpp"

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace posekit;

namespace {

struct Globals {
  uint64_t seed = 0;
  std::string config_path;
  CategoryConfig config = CategoryConfig::defaults();

  const CategoryConfig& categories() const { return config; }
};

// Whitespace separated "x y z" rows; blank lines and '#' comments skipped.
Points read_points(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  Points out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x)) continue;
    std::string rest;
    require(static_cast<bool>(ss >> y >> z) && !(ss >> rest), ErrorCode::kParse,
            path.string() + ":" + std::to_string(number) + ": expected three numbers");
    out.emplace_back(x, y, z);
  }
  return out;
}

json matrix_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json_file(out, j);
  }
}

Vec3 parse_vec3(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

// ---------------------------------------------------------------------------

struct UmeyamaArgs {
  std::string src, dst, out;
  bool ransac = false;
  RansacOptions ransac_options;
};

int solve_umeyama_cmd(const Globals& g, UmeyamaArgs a) {
  const Points src = read_points(a.src);
  const Points dst = read_points(a.dst);
  require(src.size() == dst.size(), ErrorCode::kInvalidInput,
          "src has " + std::to_string(src.size()) + " points, dst has " + std::to_string(dst.size()));
  const NocsMap nocs{src};
  const PointCloud cloud{dst, {}};
  json j;
  SimilarityFit fit;
  if (a.ransac) {
    a.ransac_options.seed = g.seed;
    const RobustSimilarityFit robust = solve_similarity_robust(nocs, cloud, a.ransac_options);
    fit = robust.fit;
    j["inliers"] = robust.inliers;
  } else {
    fit = solve_similarity(nocs, cloud);
  }
  j["pose"] = pose_to_json(fit.pose);
  j["scale"] = fit.similarity.scale;
  j["rotation"] = matrix_json(fit.similarity.rotation);
  j["translation"] = {fit.similarity.translation.x(), fit.similarity.translation.y(),
                      fit.similarity.translation.z()};
  j["residual_rms"] = fit.residual_rms;
  emit(j, a.out);
  return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string mesh, mask, intrinsics, init, out, trajectory, shape_out;
  ShapeFitConfig cfg;
};

void write_trajectory(const fs::path& path, const FitResult& r) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out << "iteration,sigma,loss\n" << std::setprecision(17);
  for (size_t i = 0; i < r.loss_trajectory.size(); ++i) {
    out << i << ',' << r.sigma_trajectory[i] << ',' << r.loss_trajectory[i] << '\n';
  }
  require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

int fit_cmd(const Globals& g, FitArgs a) {
  const Mesh mesh = remove_degenerate_faces(read_obj(fs::path(a.mesh)));
  const BinaryMask target = read_mask_png(a.mask);
  const Intrinsics k = read_intrinsics(a.intrinsics);
  require(target.same_size(k.width, k.height), ErrorCode::kInvalidInput,
          "mask is " + std::to_string(target.width) + "x" + std::to_string(target.height) +
              " but the intrinsics say " + std::to_string(k.width) + "x" + std::to_string(k.height));
  const Pose init = pose_from_json(read_json_file(a.init));

  FitResult pose_fit;
  std::optional<Mesh> deformed;
  if (a.shape_out.empty()) {
    pose_fit = fit_pose(target, mesh, k, init, a.cfg);
  } else {
    a.cfg.lambda_reg = g.categories().weights.lambda_reg;
    const ShapeFitResult r = fit_pose_and_shape(target, mesh, k, init, a.cfg);
    pose_fit = r.pose;
    deformed = apply_deformation(mesh, r.delta);
  }

  const fs::path trajectory = a.trajectory.empty() ? fs::path(a.out).replace_extension(".csv") : fs::path(a.trajectory);
  write_trajectory(trajectory, pose_fit);
  if (deformed) write_obj(fs::path(a.shape_out), *deformed);
  json j;
  j["pose"] = pose_to_json(pose_fit.final_pose);
  j["iterations"] = pose_fit.iterations;
  j["converged"] = pose_fit.converged;
  j["diverged"] = pose_fit.diverged;
  j["initial_loss"] = pose_fit.loss_trajectory.front();
  j["final_loss"] = pose_fit.loss_trajectory.back();
  j["uphill_steps"] = pose_fit.uphill_steps;
  j["trajectory"] = trajectory.string();
  emit(j, a.out);
  std::cerr << "fit: " << pose_fit.iterations << " iterations, loss " << pose_fit.loss_trajectory.front() << " -> "
            << pose_fit.loss_trajectory.back() << (pose_fit.converged ? ", converged" : "") << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred, gt, out;
};

// A record file holds a pose plus its category.
std::pair<std::string, Pose> read_record(const fs::path& path) {
  const json j = read_json_file(path);
  require(j.is_object() && j.contains("category") && j.at("category").is_string(), ErrorCode::kParse,
          path.string() + ": missing string field 'category'");
  try {
    return {j.at("category").get<std::string>(), pose_from_json(j)};
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

int eval_cmd(const Globals& g, const EvalArgs& a) {
  const CategoryConfig config = g.categories();
  std::vector<fs::path> gt_files;
  for (const auto& entry : fs::directory_iterator(a.gt)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") gt_files.push_back(entry.path());
  }
  std::sort(gt_files.begin(), gt_files.end());
  require(!gt_files.empty(), ErrorCode::kInvalidInput, "no .json records in " + a.gt);

  std::vector<EvalRecord> records;
  for (const fs::path& gt_path : gt_files) {
    const fs::path pred_path = fs::path(a.pred) / gt_path.filename();
    require(fs::exists(pred_path), ErrorCode::kInvalidInput,
            "no prediction for " + gt_path.filename().string() + " in " + a.pred);
    auto [category, gt] = read_record(gt_path);
    auto [pred_category, pred] = read_record(pred_path);
    require(pred_category == category, ErrorCode::kInvalidInput,
            gt_path.filename().string() + ": prediction category '" + pred_category + "' differs from '" +
                category + "'");
    records.push_back({category, pred, gt, config.symmetry(category)});
  }

  const EvalThresholds thresholds;
  const MetricTable table = evaluate(records, thresholds, config.category_names());
  const std::vector<std::string> names = metric_names(thresholds);

  std::cout << std::left << std::setw(12) << "category" << std::right << std::setw(7) << "count";
  for (const std::string& n : names) std::cout << std::setw(10) << n;
  std::cout << '\n' << std::fixed << std::setprecision(1);
  auto row = [&](const CategoryMetrics& c) {
    std::cout << std::left << std::setw(12) << (c.category + (c.symmetry_active ? "*" : "")) << std::right
              << std::setw(7) << c.count;
    for (const MetricValue& v : c.values) std::cout << std::setw(10) << v.value;
    std::cout << '\n';
  };
  for (const CategoryMetrics& c : table.categories) row(c);
  row(table.mean);
  std::cout << "* rotation error and box IOU minimized over the category's symmetry\n";

  std::ofstream out(a.out);
  require(out.good(), ErrorCode::kIo, "cannot write " + a.out);
  auto lines = [&](const CategoryMetrics& c) {
    for (const MetricValue& v : c.values) {
      out << json{{"category", c.category}, {"metric", v.metric}, {"value", v.value}}.dump() << '\n';
    }
  };
  for (const CategoryMetrics& c : table.categories) lines(c);
  lines(table.mean);
  require(out.good(), ErrorCode::kIo, "write failed for " + a.out);
  return 0;
}

// ---------------------------------------------------------------------------

struct PropagateArgs {
  std::string video, keyframes, out;
  PropagationConfig cfg;
};

int propagate_cmd(const Globals& g, PropagateArgs a) {
  const VideoRecord video = load_video(a.video);
  Annotations current;
  if (a.keyframes.empty()) {
    current = video.annotations;
  } else {
    const json j = read_json_file(a.keyframes);
    require(j.is_object(), ErrorCode::kParse, a.keyframes + ": expected an object of frame -> pose");
    for (const auto& [key, value] : j.items()) {
      size_t used = 0;
      int frame = -1;
      try {
        frame = std::stoi(key, &used);
      } catch (const std::exception&) {
      }
      require(used == key.size() && frame >= 0, ErrorCode::kParse, "keyframe key '" + key + "' is not a frame index");
      PoseRecord r = pose_record_from_json(value);
      const std::string problem = check_pose_record(r);
      require(problem.empty(), ErrorCode::kInvalidInput, "keyframe " + key + ": " + problem);
      r.is_keyframe = true;
      current.frames[frame] = r;
    }
  }
  const std::map<int, Pose> keys = current.keyframe_poses();
  require(!keys.empty(), ErrorCode::kInvalidInput, "no keyframes given and none stored with the video");

  a.cfg.seed = g.seed;
  int last_percent = -1;
  const PropagationResult result = propagate(video, keys, a.cfg, [&](int done, int total) {
    const int percent = 100 * done / total;
    if (percent / 10 != last_percent / 10) {
      std::cerr << "propagate: " << done << "/" << total << " frames\n";
      last_percent = percent;
    }
  });
  const Annotations next = merge_propagation(current, result);
  write_annotations_atomic(a.out, next);
  std::cerr << "propagate: " << result.poses.size() << " posed, " << result.unpropagated.size()
            << " unpropagated\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out, mesh, intrinsics;
  std::string category = "mug";
  std::string id;
  int frames = 50;
  double size = 0.2;
  double distance = 0.5;
  double deg_per_frame = 1.0;
  std::vector<double> axis{0, 0, 1};
  std::vector<double> step_mm{2, 0, 0};
  NoiseModel noise;
  int keyframe_stride = 50;
};

int synth_cmd(const Globals& g, const SynthArgs& a) {
  SceneSpec spec;
  spec.id = a.id.empty() ? fs::path(a.out).filename().string() : a.id;
  spec.category = a.category;
  spec.mesh = a.mesh.empty() ? make_category_prior(a.category)
                             : normalize_to_unit_diagonal(remove_degenerate_faces(read_obj(fs::path(a.mesh))));
  spec.intrinsics = a.intrinsics.empty() ? Intrinsics{600, 600, 320, 240, 640, 480} : read_intrinsics(a.intrinsics);
  spec.noise = a.noise;
  spec.keyframe_stride = a.keyframe_stride;

  Pose start;
  start.rotation = Rotation::from_axis_angle(Vec3(1, 1, 0).normalized(), 0.6);
  start.translation = Vec3(0, 0, a.distance);
  // Per-axis size from the mesh's box, scaled to the requested diagonal.
  Vec3 lo = spec.mesh.vertices.front(), hi = lo;
  for (const Vec3& v : spec.mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 extent = hi - lo;
  start.scale = extent / extent.norm() * a.size;
  const Vec3 axis = parse_vec3(a.axis);
  require(axis.norm() > 0, ErrorCode::kInvalidInput, "rotation axis must be nonzero");
  spec.trajectory = linear_trajectory(start, a.frames, axis.normalized(), a.deg_per_frame, parse_vec3(a.step_mm) / 1000);
  validate(spec);

  const SyntheticVideo synth = synth_generate(spec, g.seed);
  write_video(synth.video, a.out);
  json gt = json::object();
  for (size_t f = 0; f < synth.ground_truth.size(); ++f) gt[std::to_string(f)] = pose_to_json(synth.ground_truth[f]);
  write_json_file(fs::path(a.out) / "ground_truth.json", gt);
  std::cerr << "synth: wrote " << synth.video.frame_count() << " frames to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string mesh;
  int size = 64;
  double focal = 80.0;
  double sigma = 1.0;
  double tolerance = 1e-3;
  GradcheckOptions options;
};

int gradcheck_cmd(const Globals& g, GradcheckArgs a) {
  const Mesh mesh = a.mesh.empty() ? make_icosahedron(0.5) : remove_degenerate_faces(read_obj(fs::path(a.mesh)));
  Intrinsics k;
  k.fx = k.fy = a.focal;
  k.cx = k.cy = a.size / 2.0;
  k.width = k.height = a.size;
  a.options.seed = g.seed;
  const GradcheckReport r = run_gradcheck(mesh, k, a.sigma, a.options);
  std::cout << "partials checked: " << r.partials << '\n'
            << "max relative error: " << r.max_relative_error << '\n'
            << "worst partial: " << r.worst.parameter << " analytic " << r.worst.analytic << " numeric "
            << r.worst.numeric << '\n';
  if (r.max_relative_error > a.tolerance) {
    std::cerr << "gradcheck: max relative error exceeds " << a.tolerance << '\n';
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string root, assets, host = "127.0.0.1";
  int port = 8080;
  PropagationConfig cfg;
};

int serve_cmd(const Globals& g, ServeArgs a) {
  a.cfg.seed = g.seed;
  AnnotationService service({a.root, a.assets, a.cfg});
  httplib::Server server;
  service.mount(server);
  require(server.bind_to_port(a.host, a.port), ErrorCode::kIo,
          "cannot listen on " + a.host + ":" + std::to_string(a.port));
  std::cerr << "serve: http://" << a.host << ":" << a.port << " (root " << a.root << ")\n";
  server.listen_after_bind();
  service.wait_for_jobs();
  return 0;
}

void add_icp_options(CLI::App* cmd, PropagationConfig& cfg) {
  cmd->add_option("--stride", cfg.keyframe_stride, "Keyframe stride")->check(CLI::PositiveNumber);
  cmd->add_option("--cloud-points", cfg.cloud_points, "Points sampled per frame")->check(CLI::PositiveNumber);
  cmd->add_option("--icp-iters", cfg.icp.max_iters, "ICP iteration cap")->check(CLI::PositiveNumber);
  cmd->add_option("--radius", cfg.icp.correspondence_radius, "Correspondence radius, meters")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--trim", cfg.icp.trim_fraction, "Fraction of worst correspondences dropped")
      ->check(CLI::Range(0.0, 0.99));
  cmd->add_option("--color-weight", cfg.icp.color_weight, "Color term weight")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Category-level 6D pose toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--config", g.config_path, "Category config (weights and symmetries)")->check(CLI::ExistingFile);

  UmeyamaArgs ua;
  auto* um = app.add_subcommand("solve-umeyama", "Similarity transform from NOCS to camera points");
  um->add_option("--src", ua.src, "NOCS points, one 'x y z' per line")->required()->check(CLI::ExistingFile);
  um->add_option("--dst", ua.dst, "Camera points, index-aligned")->required()->check(CLI::ExistingFile);
  um->add_option("--out", ua.out, "Result JSON (stdout when omitted)");
  um->add_flag("--ransac", ua.ransac, "Robust fit over minimal samples");
  um->add_option("--ransac-iters", ua.ransac_options.iterations)->check(CLI::PositiveNumber);
  um->add_option("--ransac-threshold", ua.ransac_options.inlier_threshold, "Inlier distance, meters")
      ->check(CLI::PositiveNumber);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a pose to a silhouette by differentiable rendering");
  fit->add_option("--mesh", fa.mesh, "OBJ mesh")->required()->check(CLI::ExistingFile);
  fit->add_option("--mask", fa.mask, "Target mask PNG")->required()->check(CLI::ExistingFile);
  fit->add_option("--intrinsics", fa.intrinsics, "Intrinsics JSON")->required()->check(CLI::ExistingFile);
  fit->add_option("--init", fa.init, "Initial pose JSON")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fa.out, "Result JSON")->required();
  fit->add_option("--trajectory", fa.trajectory, "Loss trajectory CSV (default: --out with .csv)");
  fit->add_option("--shape-out", fa.shape_out, "Also fit a deformation and write the deformed mesh here");
  fit->add_option("--max-iters", fa.cfg.max_iters)->check(CLI::NonNegativeNumber);
  fit->add_option("--sigma", fa.cfg.sigma, "Initial sharpness, px^2")->check(CLI::PositiveNumber);
  fit->add_option("--min-sigma", fa.cfg.min_sigma)->check(CLI::PositiveNumber);
  fit->add_option("--anneal-every", fa.cfg.anneal_every, "Iterations per sharpness level, 0 to keep sigma")
      ->check(CLI::NonNegativeNumber);
  fit->add_flag("--optimize-scale", fa.cfg.optimize_scale, "Let the object size vary");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Metric table of predictions against ground truth");
  ev->add_option("--pred", ea.pred, "Directory of predicted records")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--gt", ea.gt, "Directory of ground-truth records")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", ea.out, "Machine-readable results, one JSON object per line")
      ->default_val("metrics.jsonl");

  PropagateArgs pa;
  auto* pr = app.add_subcommand("propagate", "Carry keyframe poses through a video");
  pr->add_option("--video", pa.video, "Video directory")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--keyframes", pa.keyframes, "Keyframe poses JSON (default: the video's annotations)")
      ->check(CLI::ExistingFile);
  pr->add_option("--out", pa.out, "Annotations JSON")->required();
  add_icp_options(pr, pa.cfg);

  SynthArgs sa;
  auto* sy = app.add_subcommand("synth", "Generate a synthetic video with ground truth");
  sy->add_option("--out", sa.out, "Output video directory")->required();
  sy->add_option("--category", sa.category, "Category of the built-in prior to render")->capture_default_str();
  sy->add_option("--mesh", sa.mesh, "Render this OBJ instead of the prior")->check(CLI::ExistingFile);
  sy->add_option("--id", sa.id, "Video id (default: directory name)");
  sy->add_option("--intrinsics", sa.intrinsics, "Intrinsics JSON (default 640x480, f=600)")
      ->check(CLI::ExistingFile);
  sy->add_option("--frames", sa.frames)->check(CLI::PositiveNumber)->capture_default_str();
  sy->add_option("--size", sa.size, "Object box diagonal, meters")->check(CLI::PositiveNumber)->capture_default_str();
  sy->add_option("--distance", sa.distance, "Start depth, meters")->check(CLI::PositiveNumber)->capture_default_str();
  sy->add_option("--deg-per-frame", sa.deg_per_frame)->capture_default_str();
  sy->add_option("--axis", sa.axis, "Rotation axis")->expected(3);
  sy->add_option("--step-mm", sa.step_mm, "Translation per frame")->expected(3);
  sy->add_option("--noise-mm", sa.noise.depth_sigma_mm, "Depth noise sigma")->check(CLI::NonNegativeNumber);
  sy->add_option("--outliers", sa.noise.outlier_fraction, "Fraction of outlier depths")->check(CLI::Range(0.0, 1.0));
  sy->add_option("--keyframe-stride", sa.keyframe_stride, "Ground-truth keyframes to store, 0 for none")
      ->check(CLI::NonNegativeNumber);

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Renderer gradients against finite differences");
  gc->add_option("--mesh", ga.mesh, "OBJ mesh (default: icosahedron)")->check(CLI::ExistingFile);
  gc->add_option("--poses", ga.options.poses)->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--size", ga.size, "Image side, pixels")->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--focal", ga.focal)->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--sigma", ga.sigma)->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--step", ga.options.step)->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--tolerance", ga.tolerance, "Fail above this relative error")->capture_default_str();

  ServeArgs va;
  auto* sv = app.add_subcommand("serve", "Annotation HTTP service");
  sv->add_option("--root", va.root, "Dataset directory, one video per child")->required()->check(CLI::ExistingDirectory);
  sv->add_option("--port", va.port)->check(CLI::Range(1, 65535))->capture_default_str();
  sv->add_option("--host", va.host)->capture_default_str();
  sv->add_option("--assets", va.assets, "Static frontend directory")->check(CLI::ExistingDirectory);
  add_icp_options(sv, va.cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    // Every subcommand rejects a broken config, whether it reads it or not.
    if (!g.config_path.empty()) g.config = load_category_config(g.config_path);
    if (*um) return solve_umeyama_cmd(g, ua);
    if (*fit) return fit_cmd(g, fa);
    if (*ev) return eval_cmd(g, ea);
    if (*pr) return propagate_cmd(g, pa);
    if (*sy) return synth_cmd(g, sa);
    if (*gc) return gradcheck_cmd(g, ga);
    if (*sv) return serve_cmd(g, va);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
