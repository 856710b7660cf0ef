#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "heightbev/io.hpp"
#include "heightbev/pipeline.hpp"

using namespace heightbev;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("heightbev_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static inline int counter = 0;
};

}  // namespace

TEST_CASE("camera JSON round trip") {
  RigidPose pose;
  pose.rotation = {0, 0, 1, 0, -1, 0, 1, 0, 0};
  pose.translation = {0.1, -0.2, 0.3};
  const CameraModel cam(450, 460, 320, 240, 640, 480, pose);
  const CameraModel back = camera_from_json_string(camera_to_json_string(cam));
  CHECK(back.fx() == cam.fx());
  CHECK(back.fy() == cam.fy());
  CHECK(back.width() == cam.width());
  CHECK(back.pose().rotation == cam.pose().rotation);
  CHECK(back.pose().translation == cam.pose().translation);
}

TEST_CASE("malformed camera JSON raises DataError") {
  CHECK_THROWS_AS(camera_from_json_string("{"), DataError);
  CHECK_THROWS_AS(camera_from_json_string("{\"fx\": 100}"), DataError);
  CHECK_THROWS_AS(
      camera_from_json_string(
          R"({"fx":1,"fy":1,"u0":0,"v0":0,"width":2,"height":2,
              "rotation":[1,0,0],"translation":[0,0,0]})"),
      DataError);
}

TEST_CASE("scene JSON round trip preserves render reproducibility") {
  const GridSpec g = DatasetSpec::desk_grid();
  GenerateOptions opts;
  opts.image_width = 320;
  opts.image_height = 200;
  opts.background_noise = 0.3;
  opts.margin = 0.8;
  const Scene s = generate(21, 3, g, opts);
  const Scene back = scene_from_json_string(scene_to_json_string(s));
  CHECK(back.seed == s.seed);
  CHECK(back.boxes.size() == s.boxes.size());
  CHECK(back.channels == s.channels);
  const RenderedViews a = render(s);
  const RenderedViews b = render(back);
  REQUIRE(a.views.size() == b.views.size());
  for (size_t k = 0; k < a.views.size(); ++k)
    CHECK(a.views[k].values == b.views[k].values);
}

TEST_CASE("scene directory loader sorts by filename") {
  TempDir tmp;
  const GridSpec g = DatasetSpec::desk_grid();
  GenerateOptions opts;
  opts.image_width = 320;
  opts.image_height = 200;
  for (int k = 0; k < 3; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04d.json", k);
    save_scene(generate(100 + k, 2, g, opts), tmp.file(name));
  }
  const auto scenes = load_scene_dir(tmp.path.string());
  REQUIRE(scenes.size() == 3);
  CHECK(scenes[0].seed == 100);
  CHECK(scenes[2].seed == 102);
  CHECK_THROWS_AS(load_scene_dir(tmp.file("missing")), DataError);
}

TEST_CASE("height map CSV round trip") {
  TempDir tmp;
  GridSpec g;
  g.cells_x = 12;
  g.cells_z = 12;
  g.cell_size = 0.512;
  g.origin_x = g.origin_z = -3.072;
  Box3D box;
  box.center = {0, -0.75, 0};
  box.width = box.length = 2.0;
  box.height = 1.25;
  const HeightMap hm = heightmap_from_boxes(g, {box});
  const std::string path = tmp.file("map.csv");
  write_heightmap_csv(hm, path);
  const HeightMap back = read_heightmap_csv(g, path);
  CHECK(back.indicator == hm.indicator);
  for (int f = 0; f < g.cell_count(); ++f) {
    CHECK(back.y[f] == hm.y[f]);
    CHECK(back.h[f] == hm.h[f]);
  }
}

TEST_CASE("height map PGM matches the CSV after the documented mapping") {
  TempDir tmp;
  GridSpec g;
  g.cells_x = 10;
  g.cells_z = 10;
  g.cell_size = 0.6;
  g.origin_x = g.origin_z = -3.0;
  Box3D box;
  box.center = {0.3, 0.5, -0.4};
  box.width = 2.2;
  box.length = 1.4;
  box.height = 1.0;
  box.yaw = 0.35;
  const HeightMap hm = heightmap_from_boxes(g, {box});
  write_heightmap_csv(hm, tmp.file("m.csv"));
  write_heightmap_pgm(hm, tmp.file("m.pgm"));
  const HeightMap csv = read_heightmap_csv(g, tmp.file("m.csv"));
  const PgmImage img = read_pgm(tmp.file("m.pgm"));
  REQUIRE(img.width == g.cells_x);
  REQUIRE(img.height == g.cells_z);
  for (int j = 0; j < g.cells_z; ++j)
    for (int i = 0; i < g.cells_x; ++i) {
      const int f = g.flat(i, j);
      const int expect =
          csv.indicator[f]
              ? static_cast<int>(std::lround(
                    (csv.y[f] - g.y_min) / g.height_range() * 255.0))
              : 0;
      CHECK(int(img.pixels[j * img.width + i]) == expect);
    }
}

TEST_CASE("checkpoint round trip") {
  TempDir tmp;
  Checkpoint ckpt;
  ckpt.params = PredictorParams::create(2, 8, 16, 99);
  ckpt.seed = 1234;
  ckpt.epoch = 42;
  ckpt.grid = DatasetSpec::desk_grid();
  ckpt.n_anchors = 6;
  const std::string path = tmp.file("p.ckpt");
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.params.layers == 2);
  CHECK(back.params.channels == 8);
  CHECK(back.params.hidden == 16);
  CHECK(back.params.data == ckpt.params.data);
  CHECK(back.seed == 1234);
  CHECK(back.epoch == 42);
  CHECK(back.n_anchors == 6);
  CHECK(back.grid.same_layout(ckpt.grid));
}

TEST_CASE("truncated checkpoint raises DataError") {
  TempDir tmp;
  Checkpoint ckpt;
  ckpt.params = PredictorParams::create(1, 4, 8, 1);
  ckpt.grid = DatasetSpec::desk_grid();
  const std::string path = tmp.file("t.ckpt");
  save_checkpoint(ckpt, path);
  // Chop the payload.
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 16);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("detections JSON round trip") {
  SceneDetections sd;
  Box3D b;
  b.center = {1, -1, 2};
  b.width = 1.5;
  b.height = 1.2;
  b.length = 3.3;
  b.yaw = 0.4;
  b.class_id = 2;
  b.vx = 0.1;
  b.vz = -0.2;
  sd.gts.push_back(b);
  sd.preds.push_back({b, 0.75});
  const SceneDetections back =
      detections_from_json_string(detections_to_json_string(sd));
  REQUIRE(back.preds.size() == 1);
  CHECK(back.preds[0].score == 0.75);
  CHECK(back.preds[0].box.class_id == 2);
  CHECK(back.gts[0].length == 3.3);
  CHECK_THROWS_AS(detections_from_json_string("{\"detections\":[]}"),
                  DataError);
}

TEST_CASE("training log CSV has the documented columns") {
  TempDir tmp;
  std::vector<EpochLog> log(2);
  log[0].epoch = 0;
  log[0].total = 1.5;
  log[1].epoch = 1;
  log[1].y_mae_occupied = 0.25;
  const std::string path = tmp.file("log.csv");
  write_training_log_csv(log, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "epoch,total_loss,height_term,y_term,seg_term,y_mae_occupied_m");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("eval result JSON exposes all sub-metrics") {
  EvalResult r;
  r.map = 0.5;
  r.nds = 0.6;
  const std::string text = eval_result_to_json_string(r);
  CHECK(text.find("\"mAP\"") != std::string::npos);
  CHECK(text.find("\"NDS\"") != std::string::npos);
  CHECK(text.find("\"mAOE\"") != std::string::npos);
}
