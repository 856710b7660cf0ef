#include "heightbev/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace heightbev {

namespace {

using nlohmann::json;

json parse(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw DataError(std::string("malformed JSON for ") + what);
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

json camera_to_json(const CameraModel& cam) {
  json j;
  j["fx"] = cam.fx();
  j["fy"] = cam.fy();
  j["u0"] = cam.u0();
  j["v0"] = cam.v0();
  j["width"] = cam.width();
  j["height"] = cam.height();
  j["rotation"] = cam.pose().rotation;
  j["translation"] = cam.pose().translation;
  return j;
}

CameraModel camera_from_json(const json& j) {
  try {
    RigidPose pose;
    const auto rot = j.at("rotation");
    const auto tr = j.at("translation");
    if (rot.size() != 9 || tr.size() != 3)
      throw DataError("camera JSON: rotation needs 9 values, translation 3");
    for (int k = 0; k < 9; ++k) pose.rotation[k] = rot[k].get<double>();
    for (int k = 0; k < 3; ++k) pose.translation[k] = tr[k].get<double>();
    return CameraModel(j.at("fx").get<double>(), j.at("fy").get<double>(),
                       j.at("u0").get<double>(), j.at("v0").get<double>(),
                       j.at("width").get<int>(), j.at("height").get<int>(),
                       pose);
  } catch (const json::exception& e) {
    throw DataError(std::string("camera JSON: ") + e.what());
  }
}

json box_to_json(const Box3D& b) {
  json j;
  j["center"] = {b.center.x, b.center.y, b.center.z};
  j["size"] = {b.width, b.height, b.length};
  j["yaw"] = b.yaw;
  j["class_id"] = b.class_id;
  j["velocity"] = {b.vx, b.vz};
  return j;
}

Box3D box_from_json(const json& j) {
  try {
    Box3D b;
    const auto c = j.at("center");
    const auto s = j.at("size");
    const auto v = j.at("velocity");
    if (c.size() != 3 || s.size() != 3 || v.size() != 2)
      throw DataError("box JSON: center[3], size[3], velocity[2] required");
    b.center = {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()};
    b.width = s[0].get<double>();
    b.height = s[1].get<double>();
    b.length = s[2].get<double>();
    b.yaw = j.at("yaw").get<double>();
    b.class_id = j.at("class_id").get<int>();
    b.vx = v[0].get<double>();
    b.vz = v[1].get<double>();
    if (!(b.width > 0.0 && b.height > 0.0 && b.length > 0.0))
      throw DataError("box JSON: sizes must be positive");
    return b;
  } catch (const json::exception& e) {
    throw DataError(std::string("box JSON: ") + e.what());
  }
}

}  // namespace

CameraModel camera_from_json_string(const std::string& text) {
  return camera_from_json(parse(text, "camera"));
}

std::string camera_to_json_string(const CameraModel& cam) {
  return camera_to_json(cam).dump(2);
}

CameraModel load_camera(const std::string& path) {
  return camera_from_json_string(read_file(path));
}

void save_camera(const CameraModel& cam, const std::string& path) {
  write_file(path, camera_to_json_string(cam) + "\n");
}

Scene scene_from_json_string(const std::string& text) {
  const json j = parse(text, "scene");
  try {
    Scene s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ground_y = j.value("ground_y", -1.8);
    s.background_noise = j.value("background_noise", 0.0);
    s.channels = j.value("channels", 32);
    s.feature_stride = j.value("feature_stride", 5.0);
    for (const auto& bj : j.at("boxes")) s.boxes.push_back(box_from_json(bj));
    for (const auto& cj : j.at("cameras"))
      s.cameras.push_back(camera_from_json(cj));
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("scene JSON: ") + e.what());
  }
}

std::string scene_to_json_string(const Scene& scene) {
  json j;
  j["seed"] = scene.seed;
  j["ground_y"] = scene.ground_y;
  j["background_noise"] = scene.background_noise;
  j["channels"] = scene.channels;
  j["feature_stride"] = scene.feature_stride;
  j["boxes"] = json::array();
  for (const Box3D& b : scene.boxes) j["boxes"].push_back(box_to_json(b));
  j["cameras"] = json::array();
  for (const CameraModel& c : scene.cameras)
    j["cameras"].push_back(camera_to_json(c));
  return j.dump(2);
}

Scene load_scene(const std::string& path) {
  return scene_from_json_string(read_file(path));
}

void save_scene(const Scene& scene, const std::string& path) {
  write_file(path, scene_to_json_string(scene) + "\n");
}

std::vector<Scene> load_scene_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError(dir + " is not a directory");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  std::vector<Scene> scenes;
  scenes.reserve(files.size());
  for (const auto& f : files) scenes.push_back(load_scene(f));
  return scenes;
}

void write_heightmap_csv(const HeightMap& hm, const std::string& path) {
  std::ostringstream out;
  out << "i,j,indicator,y_m,h_m\n";
  out.precision(17);
  for (int j = 0; j < hm.grid.cells_z; ++j)
    for (int i = 0; i < hm.grid.cells_x; ++i) {
      const int f = hm.grid.flat(i, j);
      out << i << ',' << j << ',' << int(hm.indicator[f]) << ',' << hm.y[f]
          << ',' << hm.h[f] << '\n';
    }
  write_file(path, out.str());
}

HeightMap read_heightmap_csv(const GridSpec& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  HeightMap hm(g);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int i, j, ind;
    double y, h;
    char comma;
    if (!(ss >> i >> comma >> j >> comma >> ind >> comma >> y >> comma >> h))
      throw DataError("height map CSV: bad row in " + path);
    if (i < 0 || i >= g.cells_x || j < 0 || j >= g.cells_z)
      throw DataError("height map CSV: cell out of range in " + path);
    const int f = g.flat(i, j);
    hm.indicator[f] = static_cast<std::uint8_t>(ind);
    hm.y[f] = y;
    hm.h[f] = h;
  }
  return hm;
}

void write_pgm(const PgmImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            img.pixels.size());
}

PgmImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError(path + ": not a binary PGM");
  int w, h, maxval;
  in >> w >> h >> maxval;
  in.get();  // single whitespace after the header
  if (w <= 0 || h <= 0 || maxval != 255)
    throw DataError(path + ": unsupported PGM header");
  PgmImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), img.pixels.size());
  if (!in) throw DataError(path + ": truncated PGM payload");
  return img;
}

void write_heightmap_pgm(const HeightMap& hm, const std::string& path) {
  PgmImage img;
  img.width = hm.grid.cells_x;
  img.height = hm.grid.cells_z;
  img.pixels.resize(hm.cell_count());
  const double range = hm.grid.height_range();
  for (int j = 0; j < hm.grid.cells_z; ++j)
    for (int i = 0; i < hm.grid.cells_x; ++i) {
      const int f = hm.grid.flat(i, j);
      double v = 0.0;
      if (hm.indicator[f]) {
        v = (hm.y[f] - hm.grid.y_min) / range * 255.0;
        v = std::clamp(v, 0.0, 255.0);
      }
      img.pixels[static_cast<size_t>(j) * img.width + i] =
          static_cast<std::uint8_t>(std::lround(v));
    }
  write_pgm(img, path);
}

void write_query_channel_pgm(const BevQueryGrid& q, int channel,
                             const std::string& path) {
  if (channel < 0 || channel >= q.channels)
    throw DataError("write_query_channel_pgm: channel out of range");
  PgmImage img;
  img.width = q.cells_x;
  img.height = q.cells_z;
  img.pixels.resize(static_cast<size_t>(q.cells_x) * q.cells_z);
  for (int j = 0; j < q.cells_z; ++j)
    for (int i = 0; i < q.cells_x; ++i) {
      const int f = j * q.cells_x + i;
      const double v = std::clamp<double>(q.cell(f)[channel], 0.0, 1.0);
      img.pixels[f] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  write_pgm(img, path);
}

namespace {

json grid_to_json(const GridSpec& g) {
  json j;
  j["cells_x"] = g.cells_x;
  j["cells_z"] = g.cells_z;
  j["cell_size"] = g.cell_size;
  j["origin_x"] = g.origin_x;
  j["origin_z"] = g.origin_z;
  j["y_min"] = g.y_min;
  j["y_max"] = g.y_max;
  return j;
}

GridSpec grid_from_json(const json& j) {
  GridSpec g;
  g.cells_x = j.at("cells_x").get<int>();
  g.cells_z = j.at("cells_z").get<int>();
  g.cell_size = j.at("cell_size").get<double>();
  g.origin_x = j.at("origin_x").get<double>();
  g.origin_z = j.at("origin_z").get<double>();
  g.y_min = j.at("y_min").get<double>();
  g.y_max = j.at("y_max").get<double>();
  g.validate();
  return g;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  header["layers"] = ckpt.params.layers;
  header["channels"] = ckpt.params.channels;
  header["hidden"] = ckpt.params.hidden;
  header["seed"] = ckpt.seed;
  header["epoch"] = ckpt.epoch;
  header["n_anchors"] = ckpt.n_anchors;
  header["count"] = ckpt.params.size();
  header["grid"] = grid_to_json(ckpt.grid);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(ckpt.params.data.data()),
            ckpt.params.size() * sizeof(double));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header");
  const json header = parse(line, "checkpoint header");
  Checkpoint ckpt;
  try {
    ckpt.params = PredictorParams::zeros(header.at("layers").get<int>(),
                                         header.at("channels").get<int>(),
                                         header.at("hidden").get<int>());
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.n_anchors = header.value("n_anchors", 4);
    ckpt.grid = grid_from_json(header.at("grid"));
    const size_t count = header.at("count").get<size_t>();
    if (count != ckpt.params.size())
      throw DataError(path + ": parameter count mismatch");
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  in.read(reinterpret_cast<char*>(ckpt.params.data.data()),
          ckpt.params.size() * sizeof(double));
  if (!in) throw DataError(path + ": truncated parameter payload");
  return ckpt;
}

void write_training_log_csv(const std::vector<EpochLog>& log,
                            const std::string& path) {
  std::ostringstream out;
  out << "epoch,total_loss,height_term,y_term,seg_term,y_mae_occupied_m\n";
  out.precision(10);
  for (const EpochLog& e : log)
    out << e.epoch << ',' << e.total << ',' << e.height_term << ','
        << e.y_term << ',' << e.seg_term << ',' << e.y_mae_occupied << '\n';
  write_file(path, out.str());
}

std::string detections_to_json_string(const SceneDetections& sd) {
  json j;
  j["detections"] = json::array();
  for (const Detection& d : sd.preds) {
    json dj = box_to_json(d.box);
    dj["score"] = d.score;
    j["detections"].push_back(dj);
  }
  j["ground_truth"] = json::array();
  for (const Box3D& g : sd.gts) j["ground_truth"].push_back(box_to_json(g));
  return j.dump(2);
}

SceneDetections detections_from_json_string(const std::string& text) {
  const json j = parse(text, "detections");
  SceneDetections sd;
  try {
    for (const auto& dj : j.at("detections")) {
      Detection d;
      d.box = box_from_json(dj);
      d.score = dj.at("score").get<double>();
      if (d.score < 0.0 || d.score > 1.0)
        throw DataError("detections JSON: score outside [0, 1]");
      sd.preds.push_back(d);
    }
    for (const auto& gj : j.at("ground_truth"))
      sd.gts.push_back(box_from_json(gj));
  } catch (const json::exception& e) {
    throw DataError(std::string("detections JSON: ") + e.what());
  }
  return sd;
}

std::string eval_result_to_json_string(const EvalResult& r) {
  json j;
  j["mAP"] = r.map;
  j["mATE"] = r.mate;
  j["mASE"] = r.mase;
  j["mAOE"] = r.maoe;
  j["mAVE"] = r.mave;
  j["mAAE"] = r.maae;
  j["NDS"] = r.nds;
  return j.dump(2);
}

}  // namespace heightbev
