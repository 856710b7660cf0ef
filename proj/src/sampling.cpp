#include "heightbev/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace heightbev {

FeatureMap::FeatureMap(int cam, int w, int h, int c, double stride_)
    : camera_index(cam), width(w), height(h), channels(c), stride(stride_) {
  if (w <= 0 || h <= 0 || c <= 0 || !(stride_ > 0.0))
    throw DataError("FeatureMap: dimensions and stride must be positive");
  values.assign(static_cast<size_t>(w) * h * c, 0.0f);
}

BevQueryGrid::BevQueryGrid(int cx, int cz, int c)
    : cells_x(cx), cells_z(cz), channels(c) {
  if (cx <= 0 || cz <= 0 || c <= 0)
    throw DataError("BevQueryGrid: dimensions must be positive");
  features.assign(static_cast<size_t>(cx) * cz * c, 0.0f);
  hit_count.assign(static_cast<size_t>(cx) * cz, 0);
}

std::vector<double> anchor_heights(double y, double h, int n) {
  if (n < 1) throw DataError("anchor_heights: n must be >= 1");
  if (h < 0.0) throw DataError("anchor_heights: h must be >= 0");
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = y;
    return out;
  }
  const double lo = y - 0.5 * h;
  const double step = h / (n - 1);
  for (int k = 0; k < n; ++k) out[k] = lo + k * step;
  return out;
}

std::vector<WorldPoint> reference_points(const GridSpec& g, CellIndex cell,
                                         const std::vector<double>& anchors) {
  if (cell.i < 0 || cell.i >= g.cells_x || cell.j < 0 || cell.j >= g.cells_z)
    throw DataError("reference_points: cell out of range");
  double x, z;
  g.cell_center(cell.i, cell.j, x, z);
  std::vector<WorldPoint> out;
  out.reserve(anchors.size());
  for (double a : anchors) out.push_back({x, a, z});
  return out;
}

bool bilinear_sample_into(const FeatureMap& fm, double u, double v,
                          float* out) {
  const double uf = u / fm.stride;
  const double vf = v / fm.stride;
  if (uf < 0.0 || uf > fm.width - 1 || vf < 0.0 || vf > fm.height - 1)
    return false;
  int u0 = static_cast<int>(uf);
  int v0 = static_cast<int>(vf);
  u0 = std::min(u0, fm.width - 2 >= 0 ? fm.width - 2 : 0);
  v0 = std::min(v0, fm.height - 2 >= 0 ? fm.height - 2 : 0);
  const int u1 = std::min(u0 + 1, fm.width - 1);
  const int v1 = std::min(v0 + 1, fm.height - 1);
  const double du = uf - u0;
  const double dv = vf - v0;
  const double w00 = (1.0 - du) * (1.0 - dv);
  const double w10 = du * (1.0 - dv);
  const double w01 = (1.0 - du) * dv;
  const double w11 = du * dv;
  const float* p00 = fm.at(u0, v0);
  const float* p10 = fm.at(u1, v0);
  const float* p01 = fm.at(u0, v1);
  const float* p11 = fm.at(u1, v1);
  for (int c = 0; c < fm.channels; ++c)
    out[c] = static_cast<float>(w00 * p00[c] + w10 * p10[c] + w01 * p01[c] +
                                w11 * p11[c]);
  return true;
}

std::optional<std::vector<float>> bilinear_sample(const FeatureMap& fm,
                                                  double u, double v) {
  std::vector<float> out(fm.channels);
  if (!bilinear_sample_into(fm, u, v, out.data())) return std::nullopt;
  return out;
}

namespace {

// Aggregates one cell; pure function of its inputs, so thread scheduling
// cannot change the result.
inline void aggregate_cell(const GridSpec& g, const HeightMap& heights,
                           const std::vector<CameraModel>& cams,
                           const std::vector<FeatureMap>& fms, int n_anchors,
                           int i, int j, std::vector<float>& scratch,
                           std::vector<double>& accum,
                           std::vector<double>& anchors, BevQueryGrid& out) {
  const int f = g.flat(i, j);
  const int channels = out.channels;
  std::fill(accum.begin(), accum.end(), 0.0);
  int hits = 0;
  double cx, cz;
  g.cell_center(i, j, cx, cz);
  // Same values as anchor_heights, written into reused storage.
  anchors.resize(n_anchors);
  if (n_anchors == 1) {
    anchors[0] = heights.y[f];
  } else {
    const double lo = heights.y[f] - 0.5 * heights.h[f];
    const double step = heights.h[f] / (n_anchors - 1);
    for (int k = 0; k < n_anchors; ++k) anchors[k] = lo + k * step;
  }
  for (double a : anchors) {
    const WorldPoint wp{cx, a, cz};
    for (size_t k = 0; k < cams.size(); ++k) {
      const CameraModel& cam = cams[k];
      const WorldPoint pc = cam.pose().to_camera(wp);
      if (!(pc.z > 0.0)) continue;  // behind camera: skipped, not clamped
      const double u = cam.fx() * pc.x / pc.z + cam.u0();
      const double v = cam.fy() * pc.y / pc.z + cam.v0();
      if (!cam.in_image(u, v)) continue;
      if (!bilinear_sample_into(fms[k], u, v, scratch.data())) continue;
      for (int c = 0; c < channels; ++c) accum[c] += scratch[c];
      ++hits;
    }
  }
  out.hit_count[f] = hits;
  float* dst = out.cell(f);
  if (hits == 0) {
    std::fill(dst, dst + channels, 0.0f);
    return;
  }
  const double inv = 1.0 / hits;
  for (int c = 0; c < channels; ++c)
    dst[c] = static_cast<float>(accum[c] * inv);
}

void check_aggregate_args(const GridSpec& g, const HeightMap& heights,
                          const std::vector<CameraModel>& cams,
                          const std::vector<FeatureMap>& fms, int n_anchors) {
  if (n_anchors < 1) throw DataError("aggregate: n_anchors must be >= 1");
  if (!g.same_layout(heights.grid))
    throw DataError("aggregate: height map grid mismatch");
  if (cams.size() != fms.size() || cams.empty())
    throw DataError("aggregate: cameras and feature maps must align 1:1");
  for (size_t k = 1; k < fms.size(); ++k)
    if (fms[k].channels != fms[0].channels)
      throw DataError("aggregate: feature maps disagree on channels");
}

}  // namespace

BevQueryGrid aggregate(const GridSpec& g, const HeightMap& heights,
                       const std::vector<CameraModel>& cams,
                       const std::vector<FeatureMap>& fms, int n_anchors) {
  check_aggregate_args(g, heights, cams, fms, n_anchors);
  BevQueryGrid out(g.cells_x, g.cells_z, fms[0].channels);
#pragma omp parallel
  {
    std::vector<float> scratch(out.channels);
    std::vector<double> accum(out.channels);
    std::vector<double> anchors(n_anchors > 0 ? n_anchors : 1);
#pragma omp for schedule(static)
    for (int j = 0; j < g.cells_z; ++j)
      for (int i = 0; i < g.cells_x; ++i)
        aggregate_cell(g, heights, cams, fms, n_anchors, i, j, scratch, accum,
                       anchors, out);
  }
  return out;
}

BevQueryGrid aggregate_serial(const GridSpec& g, const HeightMap& heights,
                              const std::vector<CameraModel>& cams,
                              const std::vector<FeatureMap>& fms,
                              int n_anchors) {
  check_aggregate_args(g, heights, cams, fms, n_anchors);
  BevQueryGrid out(g.cells_x, g.cells_z, fms[0].channels);
  std::vector<float> scratch(out.channels);
  std::vector<double> accum(out.channels);
  std::vector<double> anchors(n_anchors > 0 ? n_anchors : 1);
  for (int j = 0; j < g.cells_z; ++j)
    for (int i = 0; i < g.cells_x; ++i)
      aggregate_cell(g, heights, cams, fms, n_anchors, i, j, scratch, accum,
                     anchors, out);
  return out;
}

BevQueryGrid apply_query_mask(const BevQueryGrid& q,
                              const std::vector<double>& logits, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw DataError("apply_query_mask: tau must be in (0, 1)");
  if (logits.size() != q.hit_count.size())
    throw DataError("apply_query_mask: logit grid mismatch");
  BevQueryGrid out = q;
  const int n = static_cast<int>(q.hit_count.size());
  for (int f = 0; f < n; ++f) {
    const double p = 1.0 / (1.0 + std::exp(-logits[f]));
    if (p < tau) {
      float* dst = out.cell(f);
      std::fill(dst, dst + out.channels, 0.0f);
      out.hit_count[f] = 0;
    }
  }
  return out;
}

}  // namespace heightbev
