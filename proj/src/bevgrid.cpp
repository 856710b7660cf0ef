#include "heightbev/bevgrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace heightbev {

void GridSpec::validate() const {
  if (cells_x <= 0 || cells_z <= 0)
    throw DataError("GridSpec: cell counts must be positive");
  if (!(cell_size > 0.0)) throw DataError("GridSpec: cell_size must be > 0");
  if (!(y_min < y_max)) throw DataError("GridSpec: y_min must be < y_max");
}

bool GridSpec::same_layout(const GridSpec& o) const {
  return cells_x == o.cells_x && cells_z == o.cells_z &&
         cell_size == o.cell_size && origin_x == o.origin_x &&
         origin_z == o.origin_z && y_min == o.y_min && y_max == o.y_max;
}

bool Box3D::contains_bev(double x, double z) const {
  const double dx = x - center.x;
  const double dz = z - center.z;
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  // Into the box frame: a along width, b along length.
  const double a = dx * c + dz * s;
  const double b = -dx * s + dz * c;
  return std::abs(a) <= 0.5 * width && std::abs(b) <= 0.5 * length;
}

std::array<std::array<double, 2>, 4> Box3D::footprint_corners() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double hw = 0.5 * width;
  const double hl = 0.5 * length;
  std::array<std::array<double, 2>, 4> out{};
  const double local[4][2] = {{hw, hl}, {-hw, hl}, {-hw, -hl}, {hw, -hl}};
  for (int k = 0; k < 4; ++k) {
    const double a = local[k][0];
    const double b = local[k][1];
    out[k] = {center.x + a * c - b * s, center.z + a * s + b * c};
  }
  return out;
}

double Box3D::bev_distance(double x, double z) const {
  return std::hypot(x - center.x, z - center.z);
}

HeightMap::HeightMap(const GridSpec& g) : grid(g) {
  grid.validate();
  const int n = grid.cell_count();
  y.assign(n, grid.sentinel_y());
  h.assign(n, grid.sentinel_h());
  indicator.assign(n, 0);
}

std::optional<CellIndex> world_to_cell(const GridSpec& g, double x, double z) {
  const int i = static_cast<int>(std::floor((x - g.origin_x) / g.cell_size));
  const int j = static_cast<int>(std::floor((z - g.origin_z) / g.cell_size));
  if (i < 0 || i >= g.cells_x || j < 0 || j >= g.cells_z) return std::nullopt;
  return CellIndex{i, j};
}

namespace {

// Writes one cell of the box height map. Pure per-cell computation so the
// parallel and serial variants produce identical bits.
inline void rasterize_cell(const GridSpec& g, const std::vector<Box3D>& boxes,
                           int i, int j, HeightMap& out) {
  double cx, cz;
  g.cell_center(i, j, cx, cz);
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int b = 0; b < static_cast<int>(boxes.size()); ++b) {
    if (!boxes[b].contains_bev(cx, cz)) continue;
    const double d = boxes[b].bev_distance(cx, cz);
    if (d < best_dist) {
      best_dist = d;
      best = b;
    }
  }
  if (best < 0) return;
  const int f = g.flat(i, j);
  out.y[f] = boxes[best].center.y;
  out.h[f] = boxes[best].height;
  out.indicator[f] = 1;
}

}  // namespace

HeightMap heightmap_from_boxes(const GridSpec& g,
                               const std::vector<Box3D>& boxes) {
  HeightMap out(g);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < g.cells_z; ++j)
    for (int i = 0; i < g.cells_x; ++i) rasterize_cell(g, boxes, i, j, out);
  return out;
}

HeightMap heightmap_from_boxes_serial(const GridSpec& g,
                                      const std::vector<Box3D>& boxes) {
  HeightMap out(g);
  for (int j = 0; j < g.cells_z; ++j)
    for (int i = 0; i < g.cells_x; ++i) rasterize_cell(g, boxes, i, j, out);
  return out;
}

HeightMap heightmap_from_lidar(const GridSpec& g, const LidarCloud& cloud,
                               int intervals) {
  if (intervals < 2)
    throw DataError("heightmap_from_lidar: intervals must be >= 2");
  HeightMap out(g);
  const int n = g.cell_count();
  std::vector<std::vector<int>> counts(n);
  std::vector<double> lowest(n, std::numeric_limits<double>::infinity());
  const double bin_w = g.height_range() / intervals;

  for (const WorldPoint& p : cloud.points) {
    if (p.y < g.y_min || p.y > g.y_max) continue;
    const auto cell = world_to_cell(g, p.x, p.z);
    if (!cell) continue;
    const int f = g.flat(cell->i, cell->j);
    if (counts[f].empty()) counts[f].assign(intervals, 0);
    int bin = static_cast<int>((p.y - g.y_min) / bin_w);
    bin = std::clamp(bin, 0, intervals - 1);
    ++counts[f][bin];
    lowest[f] = std::min(lowest[f], p.y);
  }

  for (int f = 0; f < n; ++f) {
    if (counts[f].empty()) continue;
    // Mode interval; ties resolved toward the lower interval.
    int mode = 0;
    for (int b = 1; b < intervals; ++b)
      if (counts[f][b] > counts[f][mode]) mode = b;
    const double yc = g.y_min + (mode + 0.5) * bin_w;
    out.y[f] = yc;
    out.h[f] = std::max(0.0, 2.0 * (yc - lowest[f]));
    out.indicator[f] = 1;
  }
  return out;
}

HeightMap fuse_heightmaps(const HeightMap& from_boxes,
                          const HeightMap& from_lidar) {
  if (!from_boxes.grid.same_layout(from_lidar.grid))
    throw DataError("fuse_heightmaps: grid mismatch");
  HeightMap out(from_boxes.grid);
  const int n = out.cell_count();
  for (int f = 0; f < n; ++f) {
    if (from_boxes.indicator[f]) {
      out.y[f] = from_boxes.y[f];
      out.h[f] = from_boxes.h[f];
      out.indicator[f] = 1;
    } else if (from_lidar.indicator[f]) {
      out.y[f] = from_lidar.y[f];
      out.h[f] = from_lidar.h[f];
      out.indicator[f] = 1;
    }
  }
  return out;
}

std::vector<double> centerness_weights(const GridSpec& g) {
  g.validate();
  std::vector<double> w(g.cell_count(), 1.0);
  double max_dist = 0.0;
  for (int j = 0; j < g.cells_z; ++j) {
    for (int i = 0; i < g.cells_x; ++i) {
      double x, z;
      g.cell_center(i, j, x, z);
      max_dist = std::max(max_dist, std::hypot(x, z));
    }
  }
  if (max_dist == 0.0) return w;
  for (int j = 0; j < g.cells_z; ++j) {
    for (int i = 0; i < g.cells_x; ++i) {
      double x, z;
      g.cell_center(i, j, x, z);
      w[g.flat(i, j)] = 1.0 + std::hypot(x, z) / max_dist;
    }
  }
  return w;
}

}  // namespace heightbev
