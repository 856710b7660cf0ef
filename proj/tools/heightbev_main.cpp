#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "heightbev/io.hpp"
#include "heightbev/pipeline.hpp"

namespace hb = heightbev;
namespace fs = std::filesystem;

namespace {

struct GridFlags {
  hb::GridSpec grid = hb::DatasetSpec::desk_grid();

  void attach(CLI::App* cmd) {
    cmd->add_option("--cells-x", grid.cells_x, "BEV cells along x");
    cmd->add_option("--cells-z", grid.cells_z, "BEV cells along z");
    cmd->add_option("--cell-size", grid.cell_size, "cell edge (m)");
    cmd->add_option("--origin-x", grid.origin_x, "grid origin x (m)");
    cmd->add_option("--origin-z", grid.origin_z, "grid origin z (m)");
    cmd->add_option("--y-min", grid.y_min, "height range lower bound (m)");
    cmd->add_option("--y-max", grid.y_max, "height range upper bound (m)");
  }
};

void run_gen(const std::string& out_dir, int n_scenes, int n_boxes,
             std::uint64_t seed, double noise, const hb::GridSpec& grid) {
  hb::DatasetSpec spec;
  spec.n_scenes = n_scenes;
  spec.n_boxes = n_boxes;
  spec.seed = seed;
  spec.background_noise = noise;
  spec.grid = grid;
  const auto scenes = hb::make_dataset(spec);
  fs::create_directories(out_dir);
  for (size_t s = 0; s < scenes.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04zu.json", s);
    hb::save_scene(scenes[s], (fs::path(out_dir) / name).string());
  }
  std::cout << "wrote " << scenes.size() << " scenes to " << out_dir << "\n";
}

void run_bounds(const std::string& calib, double eps, int sweep,
                std::uint64_t seed, int steps) {
  const hb::CameraModel cam = hb::load_camera(calib);
  std::cout << "u_gt,v_gt,eps,depth_bound_m,height_bound_m,empirical_depth,"
               "empirical_height\n";
  auto print_row = [&](const hb::BoundSweepRow& r) {
    std::printf("%.6f,%.6f,%.6f,%.9f,%.9f,%.9f,%.9f\n", r.u_gt, r.v_gt,
                r.epsilon, r.depth_bound, r.height_bound, r.empirical_depth,
                r.empirical_height);
  };
  // On-axis reference row first: the depth bound collapses to eps there.
  hb::BoundQuery on_axis{cam, cam.u0(), cam.v0(), 10.0, eps};
  hb::BoundSweepRow first{};
  first.u_gt = cam.u0();
  first.v_gt = cam.v0();
  first.epsilon = eps;
  first.depth_bound = hb::depth_error_bound(on_axis);
  first.height_bound = hb::height_error_bound(on_axis);
  first.empirical_depth = hb::verify_depth_bound(on_axis, steps);
  first.empirical_height = hb::verify_height_bound(on_axis, steps);
  print_row(first);
  for (const auto& row : hb::bound_sweep(cam, eps, sweep, seed, steps))
    print_row(row);
}

void run_gtmap(const std::string& scene_path, bool with_lidar, int rays,
               const std::string& out_dir, const hb::GridSpec& grid) {
  const hb::Scene scene = hb::load_scene(scene_path);
  fs::create_directories(out_dir);
  const hb::HeightMap boxes = hb::heightmap_from_boxes(grid, scene.boxes);
  const fs::path out(out_dir);
  hb::write_heightmap_csv(boxes, (out / "gt_boxes.csv").string());
  hb::write_heightmap_pgm(boxes, (out / "gt_boxes.pgm").string());
  if (with_lidar) {
    const hb::LidarCloud cloud = hb::lidar_like(scene, rays, scene.seed);
    const hb::HeightMap lidar = hb::heightmap_from_lidar(grid, cloud);
    const hb::HeightMap fused = hb::fuse_heightmaps(boxes, lidar);
    hb::write_heightmap_csv(lidar, (out / "gt_lidar.csv").string());
    hb::write_heightmap_pgm(lidar, (out / "gt_lidar.pgm").string());
    hb::write_heightmap_csv(fused, (out / "gt_fused.csv").string());
    hb::write_heightmap_pgm(fused, (out / "gt_fused.pgm").string());
  }
  std::cout << "wrote height maps to " << out_dir << "\n";
}

void run_sample(const std::string& scene_path, bool gt_heights, int anchors,
                const std::string& out_path, const hb::GridSpec& grid) {
  const hb::Scene scene = hb::load_scene(scene_path);
  const hb::PreparedScene ps = hb::prepare_scene(scene, grid);
  const hb::HeightMap heights =
      gt_heights ? ps.gt : hb::HeightMap(grid);  // sentinel = fixed anchors
  const hb::BevQueryGrid q =
      hb::aggregate(grid, heights, scene.cameras, ps.views.views, anchors);
  hb::write_query_channel_pgm(q, 0, out_path);
  std::cout << "wrote " << out_path << "\n";
}

void run_train(const std::string& scenes_dir, int epochs, std::uint64_t seed,
               double lr, int anchors, int layers, int hidden,
               const std::string& ckpt_path, const std::string& log_path,
               const hb::GridSpec& grid) {
  const auto scenes = hb::load_scene_dir(scenes_dir);
  if (scenes.empty()) throw hb::DataError("no scenes in " + scenes_dir);
  const auto prepared = hb::prepare_scenes(scenes, grid);
  hb::TrainOptions opts;
  opts.grid = grid;
  opts.n_anchors = anchors;
  opts.layers = layers;
  opts.hidden = hidden;
  opts.fit.epochs = epochs;
  opts.fit.lr = lr;
  opts.fit.seed = seed;
  const hb::FitResult result = hb::train_on_scenes(prepared, opts);
  hb::Checkpoint ckpt;
  ckpt.params = result.params;
  ckpt.seed = seed;
  ckpt.epoch = epochs;
  ckpt.grid = grid;
  ckpt.n_anchors = anchors;
  hb::save_checkpoint(ckpt, ckpt_path);
  if (!log_path.empty()) hb::write_training_log_csv(result.log, log_path);
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    std::cout << "epochs " << epochs << "  final loss " << last.total
              << "  occupied y-MAE " << last.y_mae_occupied << " m\n";
  }
  std::cout << "checkpoint written to " << ckpt_path << "\n";
}

void run_eval(const std::string& scenes_dir, const std::string& ckpt_path,
              bool gt_heights, const std::string& mask, int anchors,
              hb::GridSpec grid, bool grid_given) {
  const auto scenes = hb::load_scene_dir(scenes_dir);
  if (scenes.empty()) throw hb::DataError("no scenes in " + scenes_dir);
  hb::EvalConfig cfg;
  cfg.apply_mask = (mask == "on");
  cfg.n_anchors = anchors;
  const hb::PredictorParams* params = nullptr;
  hb::Checkpoint ckpt;
  if (!ckpt_path.empty()) {
    ckpt = hb::load_checkpoint(ckpt_path);
    params = &ckpt.params;
    cfg.n_anchors = ckpt.n_anchors;
    if (!grid_given) grid = ckpt.grid;
  }
  cfg.grid = grid;
  if (gt_heights)
    cfg.mode = hb::HeightsMode::kGroundTruth;
  else if (params)
    cfg.mode = hb::HeightsMode::kPredicted;
  else
    cfg.mode = hb::HeightsMode::kFixedAnchors;
  const auto prepared = hb::prepare_scenes(scenes, grid);
  const hb::EvalResult r = hb::eval_scenes(prepared, params, cfg);
  std::cout << hb::eval_result_to_json_string(r) << "\n";
  std::printf("\n%-8s %-8s %-8s %-8s %-8s %-8s %-8s\n", "mAP", "mATE", "mASE",
              "mAOE", "mAVE", "mAAE", "NDS");
  std::printf("%-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f\n", r.map,
              r.mate, r.mase, r.maoe, r.mave, r.maae, r.nds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Height-driven BEV construction: bounds, ground-truth height "
               "maps, sampling, training and evaluation on synthetic scenes"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic scene dataset");
  std::string gen_out = "scenes";
  int gen_scenes = 50, gen_boxes = 4;
  std::uint64_t gen_seed = 7;
  double gen_noise = 0.5;
  GridFlags gen_grid;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--scenes", gen_scenes, "number of scenes");
  gen->add_option("--boxes", gen_boxes, "boxes per scene");
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--noise", gen_noise, "background noise amplitude");
  gen_grid.attach(gen);

  // bounds
  auto* bounds = app.add_subcommand(
      "bounds", "analytic vs empirical depth/height error bounds (CSV)");
  std::string bounds_calib;
  double bounds_eps = 0.512;
  int bounds_sweep = 100, bounds_steps = 10000;
  std::uint64_t bounds_seed = 1;
  bounds->add_option("--calib", bounds_calib, "camera calibration JSON")
      ->required();
  bounds->add_option("--eps", bounds_eps, "BEV misplacement tolerance (m)");
  bounds->add_option("--sweep", bounds_sweep, "number of random queries");
  bounds->add_option("--seed", bounds_seed, "sweep seed");
  bounds->add_option("--steps", bounds_steps, "oracle scan steps");

  // gtmap
  auto* gtmap = app.add_subcommand(
      "gtmap", "ground-truth height maps from a scene (CSV + PGM)");
  std::string gtmap_scene, gtmap_out = ".";
  bool gtmap_lidar = false;
  int gtmap_rays = 4096;
  GridFlags gtmap_grid;
  gtmap->add_option("--scene", gtmap_scene, "scene JSON")->required();
  gtmap->add_flag("--lidar", gtmap_lidar, "add LiDAR and fused maps");
  gtmap->add_option("--rays", gtmap_rays, "LiDAR rays");
  gtmap->add_option("--out", gtmap_out, "output directory");
  gtmap_grid.attach(gtmap);

  // sample
  auto* sample = app.add_subcommand(
      "sample", "dump aggregated BEV query objectness as PGM");
  std::string sample_scene, sample_out = "queries.pgm";
  bool sample_gt = false;
  int sample_anchors = 4;
  GridFlags sample_grid;
  sample->add_option("--scene", sample_scene, "scene JSON")->required();
  sample->add_flag("--gt-heights", sample_gt, "sample at ground-truth heights");
  sample->add_option("--anchors", sample_anchors, "anchors per cell");
  sample->add_option("--out", sample_out, "output PGM path");
  sample_grid.attach(sample);

  // train
  auto* train = app.add_subcommand("train", "train the height predictor");
  std::string train_scenes, train_ckpt = "predictor.ckpt", train_log;
  int train_epochs = 150, train_anchors = 8, train_layers = 3,
      train_hidden = 64;
  double train_lr = 0.08;
  std::uint64_t train_seed = 1;
  GridFlags train_grid;
  train->add_option("--scenes", train_scenes, "scene directory")->required();
  train->add_option("--epochs", train_epochs, "training epochs");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--anchors", train_anchors, "anchors per cell");
  train->add_option("--layers", train_layers, "predictor layers");
  train->add_option("--hidden", train_hidden, "hidden width");
  train->add_option("--out", train_ckpt, "checkpoint path");
  train->add_option("--log", train_log, "training log CSV path");
  train_grid.attach(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate detections (NDS)");
  std::string eval_scenes, eval_ckpt, eval_mask = "off";
  bool eval_gt = false;
  int eval_anchors = 4;
  GridFlags eval_grid;
  eval->add_option("--scenes", eval_scenes, "scene directory")->required();
  eval->add_option("--checkpoint", eval_ckpt,
             "predictor checkpoint (omit for the fixed-anchor baseline)");
  eval->add_flag("--gt-heights", eval_gt, "use ground-truth heights");
  eval->add_option("--mask", eval_mask, "query mask: on|off")
      ->check(CLI::IsMember({"on", "off"}));
  eval->add_option("--anchors", eval_anchors, "anchors per cell");
  eval_grid.attach(eval);

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      run_gen(gen_out, gen_scenes, gen_boxes, gen_seed, gen_noise,
              gen_grid.grid);
    else if (bounds->parsed())
      run_bounds(bounds_calib, bounds_eps, bounds_sweep, bounds_seed,
                 bounds_steps);
    else if (gtmap->parsed())
      run_gtmap(gtmap_scene, gtmap_lidar, gtmap_rays, gtmap_out,
                gtmap_grid.grid);
    else if (sample->parsed())
      run_sample(sample_scene, sample_gt, sample_anchors, sample_out,
                 sample_grid.grid);
    else if (train->parsed())
      run_train(train_scenes, train_epochs, train_seed, train_lr,
                train_anchors, train_layers, train_hidden, train_ckpt,
                train_log, train_grid.grid);
    else if (eval->parsed())
      run_eval(eval_scenes, eval_ckpt, eval_gt, eval_mask, eval_anchors,
               eval_grid.grid,
               !eval_grid.grid.same_layout(hb::DatasetSpec::desk_grid()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const hb::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const hb::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
