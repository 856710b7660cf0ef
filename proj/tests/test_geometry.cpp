#include <cmath>
#include <random>

#include "doctest.h"
#include "heightbev/geometry.hpp"

using namespace heightbev;

namespace {

CameraModel unit_camera() { return CameraModel(1000, 1000, 500, 500, 1000, 1000); }

}  // namespace

TEST_CASE("projection of a principal-axis point") {
  const CameraModel cam = unit_camera();
  const PixelPoint px = project(cam, {0, 0, 10});
  CHECK(px.u == doctest::Approx(500.0));
  CHECK(px.v == doctest::Approx(500.0));
  CHECK(px.depth == doctest::Approx(10.0));
}

TEST_CASE("projection arithmetic off axis") {
  const CameraModel cam = unit_camera();
  const PixelPoint px = project(cam, {1, 0, 10});
  CHECK(px.u == doctest::Approx(600.0));
  CHECK(px.v == doctest::Approx(500.0));
}

TEST_CASE("unprojection inverts the trivial cases") {
  const CameraModel cam = unit_camera();
  const WorldPoint a = unproject(cam, {500, 500, 10});
  CHECK(a.x == doctest::Approx(0.0));
  CHECK(a.y == doctest::Approx(0.0));
  CHECK(a.z == doctest::Approx(10.0));
  const WorldPoint b = unproject(cam, {600, 500, 10});
  CHECK(b.x == doctest::Approx(1.0));
}

TEST_CASE("project/unproject round trip over random points") {
  // Non-trivial pose so the inverse transform is exercised too.
  RigidPose pose;
  const double a = 0.35;
  pose.rotation = {std::cos(a), 0, std::sin(a), 0, 1, 0,
                   -std::sin(a), 0, std::cos(a)};
  pose.translation = {0.4, -1.2, 2.0};
  const CameraModel cam(800, 820, 410, 300, 800, 600, pose);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_real_distribution<double> uz(3.0, 60.0);
  int tested = 0;
  for (int k = 0; k < 10000; ++k) {
    // Build a camera-frame point with positive depth, then move it to the
    // world frame so project() is guaranteed to accept it.
    const WorldPoint cam_pt{u(rng), u(rng), uz(rng)};
    const WorldPoint world = pose.to_world(cam_pt);
    const PixelPoint px = project(cam, world);
    const WorldPoint back = unproject(cam, px);
    CHECK(std::abs(back.x - world.x) < 1e-9);
    CHECK(std::abs(back.y - world.y) < 1e-9);
    CHECK(std::abs(back.z - world.z) < 1e-9);
    ++tested;
  }
  CHECK(tested == 10000);
}

TEST_CASE("project rejects points behind the camera") {
  const CameraModel cam = unit_camera();
  CHECK_THROWS_AS(project(cam, {0, 0, -1}), NumericError);
  CHECK_THROWS_AS(unproject(cam, {500, 500, 0}), NumericError);
}

TEST_CASE("camera construction validates intrinsics") {
  CHECK_THROWS_AS(CameraModel(0, 1000, 500, 500, 1000, 1000), DataError);
  CHECK_THROWS_AS(CameraModel(1000, -5, 500, 500, 1000, 1000), DataError);
  CHECK_THROWS_AS(CameraModel(1000, 1000, 1500, 500, 1000, 1000), DataError);
  RigidPose skewed;
  skewed.rotation = {1, 0.5, 0, 0, 1, 0, 0, 0, 1};
  CHECK_THROWS_AS(CameraModel(1000, 1000, 500, 500, 1000, 1000, skewed),
                  DataError);
}

TEST_CASE("depth bound: on-axis query collapses to eps") {
  BoundQuery q{unit_camera(), 500, 500, 10, 0.512};
  CHECK(depth_error_bound(q) == doctest::Approx(0.512));
}

TEST_CASE("depth bound: direct arithmetic") {
  // |u - u0| = 1000 = fx, eps = 0.512 -> 0.256.
  BoundQuery q{CameraModel(1000, 1000, 500, 500, 2000, 1000), 1500, 500, 10,
               0.512};
  CHECK(depth_error_bound(q) == doctest::Approx(0.256));
}

TEST_CASE("height bound: zero vertical offset gives zero") {
  BoundQuery q{unit_camera(), 700, 500, 10, 0.512};
  CHECK(height_error_bound(q) == doctest::Approx(0.0));
}

TEST_CASE("height bound: direct arithmetic") {
  // u = u0, |v - v0| = 500, fy = 1000 -> eps/2.
  BoundQuery q{unit_camera(), 500, 0, 10, 0.512};
  CHECK(height_error_bound(q) == doctest::Approx(0.256));
}

TEST_CASE("bounds share the fx/(|du|+fx) factor exactly") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uu(0.0, 999.0);
  std::uniform_real_distribution<double> ud(2.0, 50.0);
  const CameraModel cam = unit_camera();
  for (int k = 0; k < 200; ++k) {
    BoundQuery q{cam, uu(rng), uu(rng), ud(rng), 0.4};
    const double ratio = std::abs(q.v_gt - cam.v0()) / cam.fy();
    const double lhs = height_error_bound(q);
    const double rhs = depth_error_bound(q) * ratio;
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("depth bound strictly decreases with |u - u0|") {
  const CameraModel cam = unit_camera();
  double prev = 1e18;
  for (double du = 0.0; du <= 480.0; du += 40.0) {
    BoundQuery q{cam, 500 + du, 500, 10, 0.512};
    const double bound = depth_error_bound(q);
    if (du == 0.0)
      CHECK(bound == doctest::Approx(0.512));
    else
      CHECK(bound < prev);
    prev = bound;
  }
}

TEST_CASE("empirical depth bound: on-axis recovers eps") {
  BoundQuery q{unit_camera(), 500, 500, 10, 0.512};
  CHECK(verify_depth_bound(q, 1000) == doctest::Approx(0.512).epsilon(1e-3));
}

TEST_CASE("empirical depth bound approximates the analytic value") {
  BoundQuery q{CameraModel(1000, 1000, 500, 500, 2000, 1000), 1500, 500, 10,
               0.512};
  const double emp = verify_depth_bound(q, 10000);
  CHECK(emp == doctest::Approx(0.256).epsilon(0.01));
  CHECK(emp <= 0.256);
}

TEST_CASE("empirical height bound: v at v0 yields zero") {
  BoundQuery q{unit_camera(), 700, 500, 10, 0.512};
  CHECK(verify_height_bound(q, 1000) == doctest::Approx(0.0));
}

TEST_CASE("empirical height bound approximates the analytic value") {
  BoundQuery q{unit_camera(), 500, 0, 10, 0.512};
  const double emp = verify_height_bound(q, 10000);
  CHECK(emp == doctest::Approx(0.256).epsilon(0.01));
  CHECK(emp <= 0.256);
}

TEST_CASE("oracle agreement over a seeded random sweep") {
  const CameraModel cam(600, 620, 320, 240, 640, 480);
  const auto rows = bound_sweep(cam, 0.4, 200, 17, 10000);
  for (const auto& r : rows) {
    CHECK(r.empirical_depth <= r.depth_bound * (1.0 + 1e-9));
    CHECK(r.empirical_depth >= 0.99 * r.depth_bound);
    CHECK(r.empirical_height <= r.height_bound * (1.0 + 1e-9));
    if (r.height_bound > 1e-9)
      CHECK(r.empirical_height >= 0.99 * r.height_bound);
  }
}

TEST_CASE("parallel and serial sweeps are bit-identical") {
  const CameraModel cam(600, 620, 320, 240, 640, 480);
  const auto par = bound_sweep(cam, 0.4, 64, 3, 1000);
  const auto ser = bound_sweep_serial(cam, 0.4, 64, 3, 1000);
  REQUIRE(par.size() == ser.size());
  for (size_t k = 0; k < par.size(); ++k) {
    CHECK(par[k].u_gt == ser[k].u_gt);
    CHECK(par[k].empirical_depth == ser[k].empirical_depth);
    CHECK(par[k].empirical_height == ser[k].empirical_height);
  }
}

TEST_CASE("oracle steps precondition") {
  BoundQuery q{unit_camera(), 500, 500, 10, 0.5};
  CHECK_THROWS_AS(verify_depth_bound(q, 10), DataError);
  CHECK_THROWS_AS(verify_height_bound(q, 10), DataError);
}
