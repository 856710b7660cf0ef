#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heightbev/bevgrid.hpp"
#include "heightbev/geometry.hpp"
#include "heightbev/metrics.hpp"
#include "heightbev/predictor.hpp"
#include "heightbev/synthscene.hpp"

namespace heightbev {

// Camera calibration JSON:
// {"fx","fy","u0","v0","width","height","rotation":[9],"translation":[3]}
CameraModel camera_from_json_string(const std::string& text);
std::string camera_to_json_string(const CameraModel& cam);
CameraModel load_camera(const std::string& path);
void save_camera(const CameraModel& cam, const std::string& path);

// Scene JSON: seed, render settings, boxes
// ({"center":[3],"size":[3],"yaw","class_id","velocity":[2]}) and cameras.
Scene scene_from_json_string(const std::string& text);
std::string scene_to_json_string(const Scene& scene);
Scene load_scene(const std::string& path);
void save_scene(const Scene& scene, const std::string& path);
/// All *.json scenes in a directory, sorted by filename.
std::vector<Scene> load_scene_dir(const std::string& dir);

// Height map exports.
void write_heightmap_csv(const HeightMap& hm, const std::string& path);
HeightMap read_heightmap_csv(const GridSpec& g, const std::string& path);
/// 8-bit heat image: y mapped linearly from the height range to 0..255,
/// indicator-0 cells forced to 0.
void write_heightmap_pgm(const HeightMap& hm, const std::string& path);

struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

void write_pgm(const PgmImage& img, const std::string& path);
PgmImage read_pgm(const std::string& path);

/// One query-grid channel as a grayscale image, values clamped to [0, 1].
void write_query_channel_pgm(const BevQueryGrid& q, int channel,
                             const std::string& path);

// Parameter checkpoint: one JSON header line followed by the raw
// little-endian 64-bit floats of the flattened parameters.
struct Checkpoint {
  PredictorParams params;
  std::uint64_t seed = 0;
  int epoch = 0;
  GridSpec grid;
  int n_anchors = 4;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Training log CSV:
// epoch,total_loss,height_term,y_term,seg_term,y_mae_occupied_m
void write_training_log_csv(const std::vector<EpochLog>& log,
                            const std::string& path);

// Per-scene detections + ground truth.
std::string detections_to_json_string(const SceneDetections& sd);
SceneDetections detections_from_json_string(const std::string& text);

std::string eval_result_to_json_string(const EvalResult& r);

}  // namespace heightbev
