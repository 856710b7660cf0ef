#pragma once

#include <optional>
#include <vector>

#include "heightbev/bevgrid.hpp"
#include "heightbev/geometry.hpp"

namespace heightbev {

/// Dense per-camera feature image, row-major [v][u][channel].
/// stride maps image pixels to feature pixels: feature coordinate = pixel /
/// stride.
struct FeatureMap {
  int camera_index = 0;
  int width = 0;
  int height = 0;
  int channels = 0;
  double stride = 1.0;
  std::vector<float> values;

  FeatureMap() = default;
  FeatureMap(int cam, int w, int h, int c, double stride_);
  const float* at(int u, int v) const {
    return values.data() + (static_cast<size_t>(v) * width + u) * channels;
  }
  float* at(int u, int v) {
    return values.data() + (static_cast<size_t>(v) * width + u) * channels;
  }
};

/// Per-cell aggregated feature vectors plus the number of valid reference
/// point samples behind each cell. Cells with hit_count 0 have an all-zero
/// feature.
struct BevQueryGrid {
  int cells_x = 0;
  int cells_z = 0;
  int channels = 0;
  std::vector<float> features;  // cell-major: flat(i,j) * channels
  std::vector<int> hit_count;

  BevQueryGrid() = default;
  BevQueryGrid(int cx, int cz, int c);
  const float* cell(int flat) const {
    return features.data() + static_cast<size_t>(flat) * channels;
  }
  float* cell(int flat) {
    return features.data() + static_cast<size_t>(flat) * channels;
  }
};

/// n anchor heights spanning [y - h/2, y + h/2], endpoints included.
/// n = 1 yields {y}; h = 0 yields n copies of y.
std::vector<double> anchor_heights(double y, double h, int n);

/// 3D reference points of one cell: (cell-center x, anchor, cell-center z)
/// for each anchor. Throws DataError when the cell is out of range.
std::vector<WorldPoint> reference_points(const GridSpec& g, CellIndex cell,
                                         const std::vector<double>& anchors);

/// Bilinear interpolation at image-pixel (u, v), evaluated in feature-pixel
/// coordinates (u/stride, v/stride). Returns nullopt outside
/// [0, W-1] x [0, H-1].
std::optional<std::vector<float>> bilinear_sample(const FeatureMap& fm,
                                                  double u, double v);

/// Raw variant writing `fm.channels` floats into `out`; returns validity.
bool bilinear_sample_into(const FeatureMap& fm, double u, double v,
                          float* out);

/// Height-driven feature aggregation. Per cell: anchors from the height
/// map's (y, h), each reference point projected into every camera,
/// behind-camera and out-of-image samples skipped, all valid samples
/// averaged into the cell feature. Parallel over cells; bit-identical to
/// aggregate_serial.
BevQueryGrid aggregate(const GridSpec& g, const HeightMap& heights,
                       const std::vector<CameraModel>& cams,
                       const std::vector<FeatureMap>& fms, int n_anchors);

BevQueryGrid aggregate_serial(const GridSpec& g, const HeightMap& heights,
                              const std::vector<CameraModel>& cams,
                              const std::vector<FeatureMap>& fms,
                              int n_anchors);

/// Zeroes the feature and hit count of every cell whose segmentation
/// probability sigmoid(logit) falls below tau. Idempotent.
BevQueryGrid apply_query_mask(const BevQueryGrid& q,
                              const std::vector<double>& logits, double tau);

}  // namespace heightbev
