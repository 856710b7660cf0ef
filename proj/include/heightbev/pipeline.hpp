#pragma once

#include <cstdint>
#include <vector>

#include "heightbev/bevgrid.hpp"
#include "heightbev/metrics.hpp"
#include "heightbev/predictor.hpp"
#include "heightbev/sampling.hpp"
#include "heightbev/synthscene.hpp"

namespace heightbev {

/// A scene with everything the training and evaluation loops reuse across
/// epochs: rendered views, box ground truth and centerness weights.
struct PreparedScene {
  Scene scene;
  RenderedViews views;
  HeightMap gt;
  std::vector<double> weights;

  PreparedScene() : gt(GridSpec{}) {}
};

PreparedScene prepare_scene(const Scene& scene, const GridSpec& g);
std::vector<PreparedScene> prepare_scenes(const std::vector<Scene>& scenes,
                                          const GridSpec& g);

/// Queries and embeddings of one self-recursive pass: Q_l is aggregated at
/// the heights decoded from E_{l-1}, then E_l = f_l(E_{l-1}, Q_l).
struct RecursiveTrace {
  std::vector<BevQueryGrid> queries;
  std::vector<EmbeddingGrid> embeddings;  // E_0 .. E_L
};

RecursiveTrace run_recursive(const PreparedScene& ps,
                             const PredictorParams& params, const GridSpec& g,
                             int n_anchors,
                             const BevQueryGrid* cached_first = nullptr);

/// Fixed-query training batch of one scene under the current parameters.
TrainBatch make_batch(const PreparedScene& ps, const PredictorParams& params,
                      const GridSpec& g, int n_anchors,
                      const BevQueryGrid* cached_first = nullptr);

/// Which heights drive the final feature aggregation during evaluation.
enum class HeightsMode { kPredicted, kGroundTruth, kFixedAnchors };

struct EvalConfig {
  GridSpec grid;
  int n_anchors = 4;
  HeightsMode mode = HeightsMode::kPredicted;
  bool apply_mask = false;
  double mask_tau = 0.25;
};

/// Per-grid readout: hysteresis-thresholded objectness (components grow
/// from core cells), connected components, box recovery from the component
/// shape and the decoded heights, class from the nearest size prior.
/// Stands in for a detection decoder.
struct ReadoutConfig {
  double core_threshold = 0.50;   // a component needs one cell this strong
  double grow_threshold = 0.38;   // expansion floor around core cells
  // Cells below this fraction of the component peak are halo: BEV
  // neighbours whose rays cross the object's image hull at wrong heights.
  double trim_fraction = 0.55;
  int min_cells = 2;
};

std::vector<Detection> readout(const BevQueryGrid& q, const DecodedGrid& dec,
                               const GridSpec& g,
                               const ReadoutConfig& rc = {});

/// Runs one scene end-to-end under the configured mode and returns its
/// detections paired with the scene's ground truth boxes. `params` may be
/// null except in predicted mode.
SceneDetections eval_scene(const PreparedScene& ps,
                           const PredictorParams* params,
                           const EvalConfig& cfg, const ReadoutConfig& rc = {});

EvalResult eval_scenes(const std::vector<PreparedScene>& scenes,
                       const PredictorParams* params, const EvalConfig& cfg,
                       const ReadoutConfig& rc = {});

struct TrainOptions {
  GridSpec grid;
  // Training probes the full height range before estimates tighten, so it
  // defaults to a denser anchor set than the sampling default of 4.
  int n_anchors = 8;
  int layers = 3;
  int hidden = 64;
  FitConfig fit;
};

/// Prepares batches per scene (first-layer queries cached: the initial
/// embeddings are constant) and runs the optimizer.
FitResult train_on_scenes(const std::vector<PreparedScene>& scenes,
                          const TrainOptions& opts);

/// Occupied-cell |y error| of the final embeddings on every scene,
/// pooled with each cell's ego distance for near/far breakdowns.
struct HeightErrorSample {
  double error = 0.0;
  double distance = 0.0;
};

std::vector<HeightErrorSample> height_error_profile(
    const std::vector<PreparedScene>& scenes, const PredictorParams& params,
    const GridSpec& g, int n_anchors);

/// Default desk-scale dataset: 40x40 grid, 6-camera rigs, 4 boxes per
/// scene, noisy backgrounds.
struct DatasetSpec {
  int n_scenes = 50;
  int n_boxes = 4;
  std::uint64_t seed = 7;
  double background_noise = 0.5;
  GridSpec grid = desk_grid();

  static GridSpec desk_grid();
};

std::vector<Scene> make_dataset(const DatasetSpec& spec);

}  // namespace heightbev
