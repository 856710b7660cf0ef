#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "heightbev/errors.hpp"

namespace heightbev {

/// World-frame point. Convention: y is the height axis, (x, z) spans the
/// BEV plane.
struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Image-frame point with camera-frame depth (meters).
struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Rigid transform world -> camera: p_cam = R * p_world + t.
/// Rotation is row-major.
struct RigidPose {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> translation{0, 0, 0};

  WorldPoint to_camera(const WorldPoint& p) const;
  WorldPoint to_world(const WorldPoint& p_cam) const;
  bool is_orthonormal(double tol = 1e-9) const;
};

/// Pinhole camera: intrinsics plus rigid pose. Intrinsics are validated at
/// construction; fx, fy must be positive and the principal point must lie
/// inside the image.
class CameraModel {
 public:
  CameraModel(double fx, double fy, double u0, double v0, int width,
              int height, RigidPose pose = {});

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double u0() const { return u0_; }
  double v0() const { return v0_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const RigidPose& pose() const { return pose_; }

  bool in_image(double u, double v) const {
    return u >= 0.0 && u < width_ && v >= 0.0 && v < height_;
  }

 private:
  double fx_, fy_, u0_, v0_;
  int width_, height_;
  RigidPose pose_;
};

/// One bound evaluation: a camera, a ground-truth pixel with its depth, and
/// the BEV misplacement tolerance epsilon (Manhattan distance, meters).
struct BoundQuery {
  CameraModel camera;
  double u_gt = 0.0;
  double v_gt = 0.0;
  double gt_depth = 0.0;
  double epsilon = 0.0;

  void validate() const;
};

/// Projects a world point through the camera. u = fx*x/z + u0,
/// v = fy*y/z + v0 in the camera frame; depth is camera-frame z.
/// Throws NumericError if the point lies at or behind the camera plane.
PixelPoint project(const CameraModel& camera, const WorldPoint& p);

/// Inverse of project: pixel plus depth back to the world frame.
/// Throws NumericError if px.depth <= 0.
WorldPoint unproject(const CameraModel& camera, const PixelPoint& px);

/// Closed-form upper bound on the depth error that keeps the feature inside
/// the epsilon-neighbourhood: eps * fx / (|u_gt - u0| + fx).
double depth_error_bound(const BoundQuery& q);

/// Closed-form upper bound on the height error:
/// eps * (|v_gt - v0| / fy) * (fx / (|u_gt - u0| + fx)).
double height_error_bound(const BoundQuery& q);

/// Brute-force oracle for depth_error_bound. Scans `steps` uniformly spaced
/// depth perturbations to bracket the largest one whose unprojected BEV
/// position stays inside the Manhattan epsilon-neighbourhood, then refines
/// the bracket with 20 bisection iterations. Returns the empirical maximum.
double verify_depth_bound(const BoundQuery& q, int steps);

/// Brute-force oracle for height_error_bound. Same scan-then-bisection
/// scheme; membership asks whether the ground-truth pixel is still the exact
/// sampling location of some grid in the epsilon-neighbourhood (the set
/// membership test behind the height-bound derivation).
double verify_height_bound(const BoundQuery& q, int steps);

/// One row of an analytic-vs-empirical comparison sweep.
struct BoundSweepRow {
  double u_gt, v_gt, epsilon;
  double depth_bound, height_bound;
  double empirical_depth, empirical_height;
};

/// Runs both oracles against both bounds over `n` seeded random queries on
/// the given camera. Deterministic for a given seed regardless of thread
/// count: each query derives its own RNG stream from (seed, index).
std::vector<BoundSweepRow> bound_sweep(const CameraModel& camera, double eps,
                                       int n, std::uint64_t seed,
                                       int steps = 10000);

/// Serial reference for bound_sweep; bit-identical results.
std::vector<BoundSweepRow> bound_sweep_serial(const CameraModel& camera,
                                              double eps, int n,
                                              std::uint64_t seed,
                                              int steps = 10000);

}  // namespace heightbev
