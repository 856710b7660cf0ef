#include "heightbev/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace heightbev {

WorldPoint RigidPose::to_camera(const WorldPoint& p) const {
  const auto& r = rotation;
  const auto& t = translation;
  return {r[0] * p.x + r[1] * p.y + r[2] * p.z + t[0],
          r[3] * p.x + r[4] * p.y + r[5] * p.z + t[1],
          r[6] * p.x + r[7] * p.y + r[8] * p.z + t[2]};
}

WorldPoint RigidPose::to_world(const WorldPoint& c) const {
  // Inverse of a rigid transform: p = R^T (p_cam - t).
  const auto& r = rotation;
  const double dx = c.x - translation[0];
  const double dy = c.y - translation[1];
  const double dz = c.z - translation[2];
  return {r[0] * dx + r[3] * dy + r[6] * dz,
          r[1] * dx + r[4] * dy + r[7] * dz,
          r[2] * dx + r[5] * dy + r[8] * dz};
}

bool RigidPose::is_orthonormal(double tol) const {
  const auto& r = rotation;
  // R^T R == I, checked entry-wise.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += r[3 * k + i] * r[3 * k + j];
      const double expect = (i == j) ? 1.0 : 0.0;
      if (std::abs(dot - expect) > tol) return false;
    }
  }
  return true;
}

CameraModel::CameraModel(double fx, double fy, double u0, double v0, int width,
                         int height, RigidPose pose)
    : fx_(fx), fy_(fy), u0_(u0), v0_(v0), width_(width), height_(height),
      pose_(pose) {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw DataError("CameraModel: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw DataError("CameraModel: image size must be positive");
  if (u0 < 0.0 || u0 >= width || v0 < 0.0 || v0 >= height)
    throw DataError("CameraModel: principal point outside the image");
  if (!pose_.is_orthonormal())
    throw DataError("CameraModel: rotation is not orthonormal");
}

void BoundQuery::validate() const {
  if (!(epsilon > 0.0)) throw DataError("BoundQuery: epsilon must be > 0");
  if (!(gt_depth > 0.0)) throw DataError("BoundQuery: gt_depth must be > 0");
}

PixelPoint project(const CameraModel& camera, const WorldPoint& p) {
  const WorldPoint c = camera.pose().to_camera(p);
  if (!(c.z > 0.0)) throw NumericError("project: point behind camera");
  return {camera.fx() * c.x / c.z + camera.u0(),
          camera.fy() * c.y / c.z + camera.v0(), c.z};
}

WorldPoint unproject(const CameraModel& camera, const PixelPoint& px) {
  if (!(px.depth > 0.0)) throw NumericError("unproject: depth must be > 0");
  const WorldPoint c = {(px.u - camera.u0()) * px.depth / camera.fx(),
                        (px.v - camera.v0()) * px.depth / camera.fy(),
                        px.depth};
  return camera.pose().to_world(c);
}

double depth_error_bound(const BoundQuery& q) {
  q.validate();
  const double off = std::abs(q.u_gt - q.camera.u0());
  return q.epsilon * q.camera.fx() / (off + q.camera.fx());
}

double height_error_bound(const BoundQuery& q) {
  q.validate();
  const double off_u = std::abs(q.u_gt - q.camera.u0());
  const double off_v = std::abs(q.v_gt - q.camera.v0());
  return q.epsilon * (off_v / q.camera.fy()) *
         (q.camera.fx() / (off_u + q.camera.fx()));
}

namespace {

// Largest delta with membership(delta) true, assuming membership is monotone
// (true on [0, boundary], false beyond). Scans `steps` points over a bracket
// found by doubling, then bisects 20 iterations inside the last scan cell.
// Returns a point strictly inside the feasible set.
template <typename Membership>
double max_feasible_delta(double eps, int steps, Membership&& inside) {
  if (!inside(0.0)) return 0.0;
  double hi = eps;
  bool bracketed = !inside(hi);
  for (int g = 0; g < 64 && !bracketed; ++g) {
    hi *= 2.0;
    bracketed = !inside(hi);
  }
  if (!bracketed) return hi;  // membership grows with delta; not reachable
  // Coarse scan: last feasible grid point at resolution hi/steps.
  double lo = 0.0;
  const double step = hi / steps;
  for (int i = 1; i <= steps; ++i) {
    const double d = i * step;
    if (inside(d))
      lo = d;
    else {
      hi = d;
      break;
    }
  }
  for (int it = 0; it < 20; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (inside(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace

double verify_depth_bound(const BoundQuery& q, int steps) {
  q.validate();
  if (steps < 1000) throw DataError("verify_depth_bound: steps must be >= 1e3");
  const CameraModel& cam = q.camera;
  const double x_gt = (q.u_gt - cam.u0()) * q.gt_depth / cam.fx();
  const double z_gt = q.gt_depth;
  // Membership: the point unprojected at the perturbed depth stays inside
  // the Manhattan epsilon-ball around (x_gt, z_gt), for both signs.
  auto inside = [&](double delta) {
    for (double sign : {1.0, -1.0}) {
      const double d = q.gt_depth + sign * delta;
      if (!(d > 0.0)) return false;
      const double x = (q.u_gt - cam.u0()) * d / cam.fx();
      const double z = d;
      if (std::abs(x - x_gt) + std::abs(z - z_gt) > q.epsilon) return false;
    }
    return true;
  };
  return max_feasible_delta(q.epsilon, steps, inside);
}

double verify_height_bound(const BoundQuery& q, int steps) {
  q.validate();
  if (steps < 1000)
    throw DataError("verify_height_bound: steps must be >= 1e3");
  const CameraModel& cam = q.camera;
  const double x_gt = (q.u_gt - cam.u0()) * q.gt_depth / cam.fx();
  const double y_gt = (q.v_gt - cam.v0()) * q.gt_depth / cam.fy();
  const double z_gt = q.gt_depth;
  const double dv = q.v_gt - cam.v0();
  // Membership: with height y_gt +- delta at some BEV grid, the grid whose
  // sampling location is exactly (u_gt, v_gt) is forced by the projection
  // equations; it must lie inside the epsilon-neighbourhood.
  auto inside = [&](double delta) {
    if (delta == 0.0) return true;
    if (dv == 0.0) return false;  // v_gt == v0 pins y to y_gt exactly
    for (double sign : {1.0, -1.0}) {
      const double y = y_gt + sign * delta;
      const double z = cam.fy() * y / dv;
      if (!(z > 0.0)) return false;
      const double x = (q.u_gt - cam.u0()) * z / cam.fx();
      if (std::abs(x - x_gt) + std::abs(z - z_gt) > q.epsilon) return false;
    }
    return true;
  };
  return max_feasible_delta(q.epsilon, steps, inside);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

BoundSweepRow sweep_one(const CameraModel& camera, double eps, std::uint64_t seed,
                        int index, int steps) {
  // Independent per-query stream: deterministic for (seed, index).
  std::mt19937_64 rng(splitmix64(seed ^ (0x9E3779B97F4A7C15ull * (index + 1))));
  std::uniform_real_distribution<double> uu(0.0, camera.width() - 1.0);
  std::uniform_real_distribution<double> uv(0.0, camera.height() - 1.0);
  std::uniform_real_distribution<double> ud(4.0, 40.0);
  BoundQuery q{camera, uu(rng), uv(rng), ud(rng), eps};
  BoundSweepRow row;
  row.u_gt = q.u_gt;
  row.v_gt = q.v_gt;
  row.epsilon = eps;
  row.depth_bound = depth_error_bound(q);
  row.height_bound = height_error_bound(q);
  row.empirical_depth = verify_depth_bound(q, steps);
  row.empirical_height = verify_height_bound(q, steps);
  return row;
}

}  // namespace

std::vector<BoundSweepRow> bound_sweep(const CameraModel& camera, double eps,
                                       int n, std::uint64_t seed, int steps) {
  std::vector<BoundSweepRow> rows(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < n; ++i) rows[i] = sweep_one(camera, eps, seed, i, steps);
  return rows;
}

std::vector<BoundSweepRow> bound_sweep_serial(const CameraModel& camera,
                                              double eps, int n,
                                              std::uint64_t seed, int steps) {
  std::vector<BoundSweepRow> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = sweep_one(camera, eps, seed, i, steps);
  return rows;
}

}  // namespace heightbev
