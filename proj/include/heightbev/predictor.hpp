#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "heightbev/bevgrid.hpp"
#include "heightbev/sampling.hpp"

namespace heightbev {

/// Per-cell height embedding: (y_norm, h_norm, log_sigma_y, log_sigma_h,
/// logit). y_norm = (y - y_min)/(y_max - y_min), h_norm = h/(y_max - y_min).
struct EmbeddingGrid {
  static constexpr int kDim = 5;
  int cells_x = 0;
  int cells_z = 0;
  std::vector<double> data;  // flat(i,j) * kDim

  EmbeddingGrid() = default;
  EmbeddingGrid(int cx, int cz);
  int cell_count() const { return cells_x * cells_z; }
  double* cell(int flat) { return data.data() + flat * kDim; }
  const double* cell(int flat) const { return data.data() + flat * kDim; }
};

/// Weights of the layer-wise perceptrons, flattened into one buffer:
/// per layer [w1 (hidden x in), b1, w2 (5 x hidden), b2] with
/// in = 5 + channels. Flat storage keeps the optimizer, the checkpoint
/// format and the finite-difference check trivial.
struct PredictorParams {
  int layers = 0;
  int channels = 0;  // query channels C
  int hidden = 0;
  std::vector<double> data;

  static PredictorParams create(int layers, int channels, int hidden,
                                std::uint64_t seed, double init_scale = 0.5);
  static PredictorParams zeros(int layers, int channels, int hidden);

  int input_dim() const { return EmbeddingGrid::kDim + channels; }
  size_t layer_stride() const;
  size_t size() const { return data.size(); }
  double* w1(int l);
  double* b1(int l);
  double* w2(int l);
  double* b2(int l);
  const double* w1(int l) const;
  const double* b1(int l) const;
  const double* w2(int l) const;
  const double* b2(int l) const;
};

/// Initial embeddings: every cell (0.5, 1.0, 0, 0, 0), i.e. anchors
/// uniformly covering the full height range with unit uncertainties and
/// an undecided segmentation logit.
EmbeddingGrid init_embeddings(const GridSpec& g);

/// One self-recursive refinement step: E_l = E_{l-1} + MLP_l([E_{l-1}; Q]).
/// Residual form makes the zero-parameter predictor the identity.
EmbeddingGrid forward(const EmbeddingGrid& e_prev, const BevQueryGrid& q,
                      const PredictorParams& params, int layer);

/// Physical decode of an embedding grid: heights in meters, sigma = exp of
/// the clamped log-uncertainty, segmentation probability via sigmoid.
struct DecodedGrid {
  int cells_x = 0;
  int cells_z = 0;
  std::vector<double> y, h, sigma_y, sigma_h, seg_prob;
};

DecodedGrid decode(const EmbeddingGrid& e, const GridSpec& g);

/// Joint loss diagnostics. total = height_term + y_term + 0.5 * seg_term.
/// Residual vectors hold (pred - gt) on indicator-1 cells, 0 elsewhere.
struct LossReport {
  double total = 0.0;
  double height_term = 0.0;
  double y_term = 0.0;
  double seg_term = 0.0;
  std::vector<double> y_residual;
  std::vector<double> h_residual;

  double y_mae_occupied(const HeightMap& gt) const;
};

/// Laplacian height/center loss. Indicator-1 cells pay
/// sqrt(2)|pred - gt|/sigma + log sigma for both h and y; indicator-0 cells
/// pay 1/sigma. Each cell weighted by `weights`, mean-reduced over cells.
/// seg_term is left 0 here; the training path adds it via focal_loss.
LossReport height_loss(const DecodedGrid& pred, const HeightMap& gt,
                       const std::vector<double>& weights);

/// Binary focal loss on the segmentation logits, mean-reduced.
double focal_loss(const std::vector<double>& logits,
                  const std::vector<std::uint8_t>& labels, double gamma = 2.0,
                  double alpha = 0.25);

/// Everything one optimization step needs, with queries held fixed: the
/// query grid of each layer, the ground truth, and per-cell loss weights.
struct TrainBatch {
  GridSpec grid;
  std::vector<BevQueryGrid> queries;  // one per predictor layer
  HeightMap gt;
  std::vector<double> weights;
  bool supervise_all_layers = false;

  TrainBatch() : gt(GridSpec{}) {}
  explicit TrainBatch(const GridSpec& g) : grid(g), gt(g) {}
};

/// Total joint loss of the recursive pipeline on one batch.
LossReport pipeline_loss(const PredictorParams& params, const TrainBatch& b);

/// Analytic gradients of the total loss w.r.t. every parameter, computed by
/// backpropagation through the residual recursion. Returns the loss report
/// of the same forward pass. Throws NumericError on non-finite gradients.
LossReport predictor_backward(const PredictorParams& params,
                              const TrainBatch& b, std::vector<double>& grad);

/// Max relative error between analytic and central finite-difference
/// gradients over all parameters.
double grad_check(const PredictorParams& params, const TrainBatch& b,
                  double step = 1e-5);

struct FitConfig {
  int epochs = 300;
  double lr = 0.05;
  double momentum = 0.9;
  // Linear decay: the step size falls to lr * (1 - lr_decay) by the final
  // epoch. 0 keeps it constant.
  double lr_decay = 0.9;
  // Scenes whose gradients are averaged into one update, accumulated in
  // sorted scene order.
  int batch_scenes = 5;
  std::uint64_t seed = 1;
  bool supervise_all_layers = false;
};

struct EpochLog {
  int epoch = 0;
  double total = 0.0;
  double height_term = 0.0;
  double y_term = 0.0;
  double seg_term = 0.0;
  double y_mae_occupied = 0.0;
};

struct FitResult {
  PredictorParams params;
  std::vector<EpochLog> log;
};

/// Rebuilds the batch of one scene under the current parameters (the
/// self-recursive part: queries are resampled from the current heights).
using BatchBuilder =
    std::function<TrainBatch(const PredictorParams&, int scene_index)>;

/// Plain gradient descent with momentum over scenes in sorted index order.
/// Deterministic for a given config. Throws NumericError if the loss stops
/// being finite.
FitResult fit(PredictorParams initial, int n_scenes,
              const BatchBuilder& builder, const FitConfig& config);

}  // namespace heightbev
