#pragma once

#include <cstdint>
#include <vector>

#include "heightbev/bevgrid.hpp"
#include "heightbev/geometry.hpp"
#include "heightbev/sampling.hpp"

namespace heightbev {

/// Size priors per class, used both when sampling boxes and when the
/// per-grid readout assigns classes to detected components.
struct ClassPrior {
  double w_lo, w_hi;
  double l_lo, l_hi;
  double h_lo, h_hi;
};

const std::vector<ClassPrior>& class_priors();

struct GenerateOptions {
  int n_cameras = 6;
  double camera_height = 0.0;  // y of the roof ring
  int image_width = 320;
  // Wide vertical FOV: nearby objects keep their lower faces in frame.
  int image_height = 260;
  double focal = 140.0;
  // The camera facing backwards gets a different focal length, mirroring
  // rigs whose rear camera differs from the rest.
  double backward_focal = 182.0;
  int channels = 32;
  double feature_stride = 5.0;
  double ground_y = -1.8;
  double background_noise = 0.0;
  double min_ego_distance = 2.0;  // from the ego to the nearest box point
  double margin = 1.0;
  int max_retries = 200;
};

/// A deterministic synthetic scene: oriented boxes plus a ring camera rig.
/// Per-object feature signatures are derived from (seed, box index), so the
/// scene is fully reproducible from this struct alone.
struct Scene {
  std::uint64_t seed = 0;
  double ground_y = -1.8;
  double background_noise = 0.0;
  int channels = 32;
  double feature_stride = 5.0;
  std::vector<Box3D> boxes;
  std::vector<CameraModel> cameras;
};

/// One rendered feature image per camera. Channel 0 carries objectness
/// (a Gaussian blob over the projected hull, peaking at the projected box
/// center); channels 1..C-1 carry the per-object signature modulated by a
/// blob anchored at the projected top-face center, so feature magnitude
/// varies with height across the object. Values lie in [0, 1].
struct RenderedViews {
  std::vector<FeatureMap> views;
};

/// Ring rig: n cameras at the ego origin, evenly spaced azimuths, optical
/// axes horizontal. Camera n/2 faces backwards and takes `backward_focal`.
std::vector<CameraModel> make_ring_cameras(const GenerateOptions& opts);

/// Per-object feature signature: channels-1 values in [0.2, 1], derived
/// deterministically from (scene seed, box index).
std::vector<float> box_signature(std::uint64_t scene_seed, int box_index,
                                 int channels);

/// Samples a scene with `n_boxes` boxes whose BEV footprints stay inside
/// the grid, do not overlap pairwise, and keep clear of the ego origin.
/// Deterministic per seed. Throws DataError when placement fails after
/// bounded retries.
Scene generate(std::uint64_t seed, int n_boxes, const GridSpec& g,
               const GenerateOptions& opts = {});

/// Renders every camera view. Painter's order: the nearest box owns each
/// pixel of its projected hull. Background pixels receive uniform noise of
/// amplitude scene.background_noise. Parallel over image rows;
/// bit-identical to render_serial.
RenderedViews render(const Scene& scene);
RenderedViews render_serial(const Scene& scene);

/// Casts azimuth fans of slightly downward-tilted rays from the ego and
/// returns first hits on box surfaces plus ground-plane hits at
/// y = scene.ground_y. Deterministic per seed; occluded surfaces receive no
/// points.
LidarCloud lidar_like(const Scene& scene, int rays, std::uint64_t seed);

}  // namespace heightbev
