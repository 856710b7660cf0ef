#include "heightbev/synthscene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace heightbev {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

const std::vector<ClassPrior>& class_priors() {
  static const std::vector<ClassPrior> priors = {
      {1.7, 2.1, 3.6, 4.4, 1.4, 1.7},  // compact car
      {2.1, 2.5, 4.8, 5.6, 1.9, 2.4},  // van
      {1.0, 1.4, 2.0, 2.8, 0.9, 1.2},  // cart
  };
  return priors;
}

std::vector<CameraModel> make_ring_cameras(const GenerateOptions& opts) {
  std::vector<CameraModel> cams;
  cams.reserve(opts.n_cameras);
  for (int k = 0; k < opts.n_cameras; ++k) {
    const double theta = 2.0 * kPi * k / opts.n_cameras;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    RigidPose pose;
    // Rows are the camera axes in world coordinates: right, down, forward.
    pose.rotation = {-c, 0, s, 0, -1, 0, s, 0, c};
    pose.translation = {0, opts.camera_height, 0};
    const double f =
        (k == opts.n_cameras / 2) ? opts.backward_focal : opts.focal;
    cams.emplace_back(f, f, opts.image_width / 2.0, opts.image_height / 2.0,
                      opts.image_width, opts.image_height, pose);
  }
  return cams;
}

std::vector<float> box_signature(std::uint64_t scene_seed, int box_index,
                                 int channels) {
  std::mt19937_64 rng(
      splitmix64(scene_seed ^ (0xD1B54A32D192ED03ull * (box_index + 1))));
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<float> sig(channels > 1 ? channels - 1 : 0);
  for (auto& v : sig) v = static_cast<float>(u(rng));
  return sig;
}

namespace {

// Separating-axis test for two BEV footprints.
bool footprints_overlap(const Box3D& a, const Box3D& b) {
  const auto ca = a.footprint_corners();
  const auto cb = b.footprint_corners();
  auto separated = [](const std::array<std::array<double, 2>, 4>& p,
                      const std::array<std::array<double, 2>, 4>& q,
                      double ax, double az) {
    double pmin = std::numeric_limits<double>::infinity(), pmax = -pmin;
    double qmin = pmin, qmax = -pmin;
    for (int k = 0; k < 4; ++k) {
      const double dp = p[k][0] * ax + p[k][1] * az;
      const double dq = q[k][0] * ax + q[k][1] * az;
      pmin = std::min(pmin, dp);
      pmax = std::max(pmax, dp);
      qmin = std::min(qmin, dq);
      qmax = std::max(qmax, dq);
    }
    return pmax < qmin || qmax < pmin;
  };
  for (const Box3D* box : {&a, &b}) {
    const double c = std::cos(box->yaw);
    const double s = std::sin(box->yaw);
    if (separated(ca, cb, c, s)) return false;   // width axis
    if (separated(ca, cb, -s, c)) return false;  // length axis
  }
  return true;
}

bool inside_grid(const GridSpec& g, const Box3D& box, double margin) {
  for (const auto& corner : box.footprint_corners()) {
    if (corner[0] < g.origin_x + margin ||
        corner[0] > g.origin_x + g.cells_x * g.cell_size - margin ||
        corner[1] < g.origin_z + margin ||
        corner[1] > g.origin_z + g.cells_z * g.cell_size - margin)
      return false;
  }
  return true;
}

}  // namespace

Scene generate(std::uint64_t seed, int n_boxes, const GridSpec& g,
               const GenerateOptions& opts) {
  if (n_boxes < 0) throw DataError("generate: n_boxes must be >= 0");
  g.validate();
  Scene scene;
  scene.seed = seed;
  scene.ground_y = opts.ground_y;
  scene.background_noise = opts.background_noise;
  scene.channels = opts.channels;
  scene.feature_stride = opts.feature_stride;
  scene.cameras = make_ring_cameras(opts);

  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double x_lo = g.origin_x + opts.margin;
  const double x_hi = g.origin_x + g.cells_x * g.cell_size - opts.margin;
  const double z_lo = g.origin_z + opts.margin;
  const double z_hi = g.origin_z + g.cells_z * g.cell_size - opts.margin;
  const auto& priors = class_priors();

  for (int b = 0; b < n_boxes; ++b) {
    // Class and shape are drawn once per box so placement rejections do not
    // skew the class mix toward small footprints.
    Box3D proto;
    proto.class_id = static_cast<int>(u01(rng) * priors.size());
    proto.class_id = std::min<int>(proto.class_id, priors.size() - 1);
    const ClassPrior& pr = priors[proto.class_id];
    proto.width = pr.w_lo + u01(rng) * (pr.w_hi - pr.w_lo);
    proto.length = pr.l_lo + u01(rng) * (pr.l_hi - pr.l_lo);
    proto.height = pr.h_lo + u01(rng) * (pr.h_hi - pr.h_lo);
    proto.center.y = -2.0 + u01(rng) * 3.0;  // center heights in [-2, 1]
    proto.vx = -0.6 + u01(rng) * 1.2;
    proto.vz = -0.6 + u01(rng) * 1.2;
    bool placed = false;
    for (int attempt = 0; attempt < opts.max_retries && !placed; ++attempt) {
      Box3D box = proto;
      box.center.x = x_lo + u01(rng) * (x_hi - x_lo);
      box.center.z = z_lo + u01(rng) * (z_hi - z_lo);
      box.yaw = -kPi / 2 + u01(rng) * kPi;  // axis-recoverable orientations
      const double clearance =
          opts.min_ego_distance + 0.5 * std::hypot(box.width, box.length);
      if (std::hypot(box.center.x, box.center.z) < clearance) continue;
      if (!inside_grid(g, box, opts.margin)) continue;
      bool collides = false;
      for (const Box3D& other : scene.boxes)
        if (footprints_overlap(box, other)) {
          collides = true;
          break;
        }
      if (collides) continue;
      scene.boxes.push_back(box);
      placed = true;
    }
    if (!placed)
      throw DataError("generate: box placement failed after retries");
  }
  return scene;
}

namespace {

struct SplatBox {
  // Hull and blob geometry in feature-pixel coordinates.
  std::vector<std::array<double, 2>> hull;  // counter-clockwise
  double uc, vc;    // projected box center
  double ut, vt;    // projected top-face center
  double sigma_u, sigma_v;
  double depth;
  int box_index;
  int u_lo, u_hi, v_lo, v_hi;  // pixel bounds of the hull
};

bool inside_hull(const std::vector<std::array<double, 2>>& hull, double u,
                 double v) {
  const int n = static_cast<int>(hull.size());
  for (int k = 0; k < n; ++k) {
    const auto& p = hull[k];
    const auto& q = hull[(k + 1) % n];
    const double cross =
        (q[0] - p[0]) * (v - p[1]) - (q[1] - p[1]) * (u - p[0]);
    if (cross < 0.0) return false;
  }
  return true;
}

std::vector<std::array<double, 2>> convex_hull(
    std::vector<std::array<double, 2>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const int n = static_cast<int>(pts.size());
  if (n < 3) return pts;
  std::vector<std::array<double, 2>> hull(2 * n);
  int k = 0;
  auto cross = [](const std::array<double, 2>& o,
                  const std::array<double, 2>& a,
                  const std::array<double, 2>& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  const int lower = k + 1;
  for (int i = n - 2; i >= 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

std::vector<SplatBox> project_boxes(const Scene& scene,
                                    const CameraModel& cam,
                                    const FeatureMap& fm) {
  std::vector<SplatBox> out;
  for (int b = 0; b < static_cast<int>(scene.boxes.size()); ++b) {
    const Box3D& box = scene.boxes[b];
    const auto corners_bev = box.footprint_corners();
    std::vector<std::array<double, 2>> pts;
    pts.reserve(8);
    bool ok = true;
    for (int k = 0; k < 8 && ok; ++k) {
      const auto& c2 = corners_bev[k % 4];
      const double y =
          box.center.y + ((k < 4) ? -0.5 : 0.5) * box.height;
      const WorldPoint pc = cam.pose().to_camera({c2[0], y, c2[1]});
      if (pc.z <= 0.05) {
        ok = false;  // partially behind this camera: skip the whole box
        break;
      }
      pts.push_back({(cam.fx() * pc.x / pc.z + cam.u0()) / fm.stride,
                     (cam.fy() * pc.y / pc.z + cam.v0()) / fm.stride});
    }
    if (!ok) continue;
    SplatBox sb;
    sb.hull = convex_hull(pts);
    if (sb.hull.size() < 3) continue;
    const WorldPoint cc = cam.pose().to_camera(box.center);
    sb.depth = cc.z;
    sb.uc = (cam.fx() * cc.x / cc.z + cam.u0()) / fm.stride;
    sb.vc = (cam.fy() * cc.y / cc.z + cam.v0()) / fm.stride;
    const WorldPoint tc = cam.pose().to_camera(
        {box.center.x, box.center.y + 0.5 * box.height, box.center.z});
    sb.ut = (cam.fx() * tc.x / tc.z + cam.u0()) / fm.stride;
    sb.vt = (cam.fy() * tc.y / tc.z + cam.v0()) / fm.stride;
    double u_min = 1e18, u_max = -1e18, v_min = 1e18, v_max = -1e18;
    for (const auto& p : sb.hull) {
      u_min = std::min(u_min, p[0]);
      u_max = std::max(u_max, p[0]);
      v_min = std::min(v_min, p[1]);
      v_max = std::max(v_max, p[1]);
    }
    // Blob width is metric (about half a meter on the object), capped by
    // the hull so nearby objects keep a localized appearance peak.
    const double cap_u = std::max(0.6, 0.45 * (u_max - u_min));
    const double cap_v = std::max(0.6, 0.45 * (v_max - v_min));
    sb.sigma_u = std::clamp(0.5 * cam.fx() / (cc.z * fm.stride), 0.6, cap_u);
    sb.sigma_v = std::clamp(0.5 * cam.fy() / (cc.z * fm.stride), 0.6, cap_v);
    sb.u_lo = std::max(0, static_cast<int>(std::floor(u_min)));
    sb.u_hi = std::min(fm.width - 1, static_cast<int>(std::ceil(u_max)));
    sb.v_lo = std::max(0, static_cast<int>(std::floor(v_min)));
    sb.v_hi = std::min(fm.height - 1, static_cast<int>(std::ceil(v_max)));
    sb.box_index = b;
    out.push_back(std::move(sb));
  }
  std::sort(out.begin(), out.end(),
            [](const SplatBox& a, const SplatBox& b) {
              return a.depth < b.depth;
            });
  return out;
}

void render_row(const Scene& scene, const std::vector<SplatBox>& boxes,
                const std::vector<std::vector<float>>& sigs, int cam_index,
                int row, FeatureMap& fm) {
  std::mt19937_64 rng(splitmix64(scene.seed ^
                                 (0xA24BAED4963EE407ull * (cam_index + 1)) ^
                                 (0x9FB21C651E98DF25ull * (row + 1))));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double noise = scene.background_noise;
  for (int u = 0; u < fm.width; ++u) {
    float* px = fm.at(u, row);
    const SplatBox* owner = nullptr;
    for (const SplatBox& sb : boxes) {  // nearest first
      if (row < sb.v_lo || row > sb.v_hi || u < sb.u_lo || u > sb.u_hi)
        continue;
      if (!inside_hull(sb.hull, u, row)) continue;
      owner = &sb;
      break;
    }
    if (owner) {
      const double du = (u - owner->uc) / owner->sigma_u;
      const double dv = (row - owner->vc) / owner->sigma_v;
      px[0] = static_cast<float>(std::exp(-0.5 * (du * du + dv * dv)));
      const double dut = (u - owner->ut) / owner->sigma_u;
      const double dvt = (row - owner->vt) / owner->sigma_v;
      const double wt = std::exp(-0.5 * (dut * dut + dvt * dvt));
      const auto& sig = sigs[owner->box_index];
      for (int c = 1; c < fm.channels; ++c)
        px[c] = static_cast<float>(sig[c - 1] * wt);
    } else if (noise > 0.0) {
      for (int c = 0; c < fm.channels; ++c)
        px[c] = static_cast<float>(noise * u01(rng));
    }
  }
}

RenderedViews render_impl(const Scene& scene, bool parallel) {
  if (scene.channels < 2)
    throw DataError("render: at least 2 feature channels required");
  RenderedViews out;
  std::vector<std::vector<float>> sigs;
  for (int b = 0; b < static_cast<int>(scene.boxes.size()); ++b)
    sigs.push_back(box_signature(scene.seed, b, scene.channels));
  for (int k = 0; k < static_cast<int>(scene.cameras.size()); ++k) {
    const CameraModel& cam = scene.cameras[k];
    const int wf = static_cast<int>(cam.width() / scene.feature_stride);
    const int hf = static_cast<int>(cam.height() / scene.feature_stride);
    FeatureMap fm(k, wf, hf, scene.channels, scene.feature_stride);
    const auto boxes = project_boxes(scene, cam, fm);
    if (parallel) {
#pragma omp parallel for schedule(static)
      for (int row = 0; row < hf; ++row)
        render_row(scene, boxes, sigs, k, row, fm);
    } else {
      for (int row = 0; row < hf; ++row)
        render_row(scene, boxes, sigs, k, row, fm);
    }
    out.views.push_back(std::move(fm));
  }
  return out;
}

}  // namespace

RenderedViews render(const Scene& scene) { return render_impl(scene, true); }

RenderedViews render_serial(const Scene& scene) {
  return render_impl(scene, false);
}

namespace {

// Ray vs oriented box via the slab method in the box frame. Returns the
// smallest positive hit parameter, or infinity.
double ray_box_hit(const WorldPoint& origin, const WorldPoint& dir,
                   const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double ox = origin.x - box.center.x;
  const double oz = origin.z - box.center.z;
  const double lo[3] = {-0.5 * box.width, -0.5 * box.height,
                        -0.5 * box.length};
  const double hi[3] = {0.5 * box.width, 0.5 * box.height, 0.5 * box.length};
  const double o[3] = {ox * c + oz * s, origin.y - box.center.y,
                       -ox * s + oz * c};
  const double d[3] = {dir.x * c + dir.z * s, dir.y, -dir.x * s + dir.z * c};
  double t_enter = 0.0;
  double t_exit = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-12) {
      if (o[k] < lo[k] || o[k] > hi[k])
        return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (lo[k] - o[k]) / d[k];
    double t1 = (hi[k] - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) return std::numeric_limits<double>::infinity();
  }
  return t_enter > 1e-9 ? t_enter : std::numeric_limits<double>::infinity();
}

}  // namespace

LidarCloud lidar_like(const Scene& scene, int rays, std::uint64_t seed) {
  if (rays <= 0) throw DataError("lidar_like: rays must be > 0");
  static const double kTilts[] = {-0.40, -0.30, -0.22, -0.15, -0.09, -0.04};
  const int n_tilts = 6;
  const int n_az = std::max(1, rays / n_tilts);
  const WorldPoint origin{0.0, 0.3, 0.0};  // sensor slightly above the rig
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  LidarCloud cloud;
  for (int t = 0; t < n_tilts; ++t) {
    const double tilt = kTilts[t];
    const double cy = std::sin(tilt);
    const double ch = std::cos(tilt);
    for (int i = 0; i < n_az; ++i) {
      const double phi = 2.0 * kPi * (i + u01(rng)) / n_az;
      const WorldPoint dir{std::sin(phi) * ch, cy, std::cos(phi) * ch};
      double t_best = std::numeric_limits<double>::infinity();
      for (const Box3D& box : scene.boxes)
        t_best = std::min(t_best, ray_box_hit(origin, dir, box));
      if (dir.y < 0.0) {
        const double t_ground = (scene.ground_y - origin.y) / dir.y;
        if (t_ground > 1e-9) t_best = std::min(t_best, t_ground);
      }
      if (!std::isfinite(t_best)) continue;
      cloud.points.push_back({origin.x + t_best * dir.x,
                              origin.y + t_best * dir.y,
                              origin.z + t_best * dir.z});
    }
  }
  return cloud;
}

}  // namespace heightbev
