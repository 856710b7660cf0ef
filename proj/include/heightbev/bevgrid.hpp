#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "heightbev/errors.hpp"
#include "heightbev/geometry.hpp"

namespace heightbev {

/// BEV grid over the (x, z) plane plus the modeled height range along y.
/// Defaults follow the 200x200 grid of 0.512 m cells spanning +-51.2 m with
/// heights in [-5, 3].
struct GridSpec {
  int cells_x = 200;
  int cells_z = 200;
  double cell_size = 0.512;
  double origin_x = -51.2;  // world x of the low edge of cell i = 0
  double origin_z = -51.2;
  double y_min = -5.0;
  double y_max = 3.0;

  void validate() const;
  int cell_count() const { return cells_x * cells_z; }
  int flat(int i, int j) const { return j * cells_x + i; }
  double height_range() const { return y_max - y_min; }
  double sentinel_y() const { return 0.5 * (y_min + y_max); }
  double sentinel_h() const { return y_max - y_min; }
  /// World (x, z) of the center of cell (i, j).
  void cell_center(int i, int j, double& x, double& z) const {
    x = origin_x + (i + 0.5) * cell_size;
    z = origin_z + (j + 0.5) * cell_size;
  }
  bool same_layout(const GridSpec& o) const;
};

struct CellIndex {
  int i = 0;  // along x
  int j = 0;  // along z
};

/// Oriented 3D box. Size is (width, height, length) with height along the
/// y-axis and yaw rotating the (width, length) footprint about y.
struct Box3D {
  WorldPoint center;
  double width = 1.0;
  double height = 1.0;
  double length = 1.0;
  double yaw = 0.0;
  int class_id = 0;
  double vx = 0.0;
  double vz = 0.0;

  /// True if world (x, z) lies inside the yaw-rotated BEV footprint
  /// (boundary inclusive).
  bool contains_bev(double x, double z) const;
  /// The four BEV footprint corners, counter-clockwise in the box frame.
  std::array<std::array<double, 2>, 4> footprint_corners() const;
  double bev_distance(double x, double z) const;
};

/// Per-cell ground-truth height field: center height y, extent h, and an
/// indicator marking cells covered by any object. Cells with indicator 0
/// carry the sentinel heights (range midpoint, full range) so that sampling
/// from them degrades to fixed full-range anchors.
struct HeightMap {
  GridSpec grid;
  std::vector<double> y;
  std::vector<double> h;
  std::vector<std::uint8_t> indicator;

  explicit HeightMap(const GridSpec& g);
  int cell_count() const { return grid.cell_count(); }
};

struct LidarCloud {
  std::vector<WorldPoint> points;
};

/// Cell index of world (x, z), or nullopt when outside the grid.
std::optional<CellIndex> world_to_cell(const GridSpec& g, double x, double z);

/// Rasterizes boxes into a height map: every cell whose center lies inside
/// a box footprint gets that box's (center.y, height) and indicator 1, so
/// all cells of one object share identical heights. Cells covered by several
/// boxes take the box with the nearest center (ties: lowest box index).
HeightMap heightmap_from_boxes(const GridSpec& g,
                               const std::vector<Box3D>& boxes);
/// Serial reference; bit-identical to heightmap_from_boxes.
HeightMap heightmap_from_boxes_serial(const GridSpec& g,
                                      const std::vector<Box3D>& boxes);

/// Builds a height map from LiDAR points. Per cell with at least one point
/// inside the height range: y is the center of the interval holding the most
/// points (ties: lowest interval), the lowest point formulates y - h/2, and
/// h is clamped to be non-negative.
HeightMap heightmap_from_lidar(const GridSpec& g, const LidarCloud& cloud,
                               int intervals = 16);

/// Cell-wise fusion preferring box heights over LiDAR heights.
/// Throws DataError if the grids do not match.
HeightMap fuse_heightmaps(const HeightMap& from_boxes,
                          const HeightMap& from_lidar);

/// Position-dependent loss weights: w = 1 + dist(cell center, ego)/max_dist,
/// in [1, 2], growing with distance from the ego origin (0, 0).
std::vector<double> centerness_weights(const GridSpec& g);

}  // namespace heightbev
