// Timing comparison between the OpenMP kernels and their serial reference
// implementations. Results must be bit-identical; only the wall time may
// differ.
#include <chrono>
#include <cstdio>
#include <string>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "heightbev/geometry.hpp"
#include "heightbev/pipeline.hpp"
#include "heightbev/sampling.hpp"
#include "heightbev/synthscene.hpp"

using namespace heightbev;

namespace {

template <typename F>
double time_ms(F&& fn, int reps) {
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() /
         reps;
}

void report(const std::string& name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-24s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   %s\n",
              name.c_str(), serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
#if defined(_OPENMP)
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (compiled without OpenMP)\n");
#endif

  GridSpec g;
  g.cells_x = 96;
  g.cells_z = 96;
  g.cell_size = 0.512;
  g.origin_x = g.origin_z = -24.576;

  GenerateOptions opts;
  opts.image_width = 400;
  opts.image_height = 250;
  opts.background_noise = 0.4;
  opts.margin = 0.8;
  const Scene scene = generate(3, 8, g, opts);

  // render
  RenderedViews views_s, views_p;
  const double rs = time_ms([&] { views_s = render_serial(scene); }, 3);
  const double rp = time_ms([&] { views_p = render(scene); }, 3);
  bool render_same = views_s.views.size() == views_p.views.size();
  for (size_t k = 0; render_same && k < views_s.views.size(); ++k)
    render_same = views_s.views[k].values == views_p.views[k].values;
  report("render", rs, rp, render_same);

  // box rasterization
  HeightMap hm_s(g), hm_p(g);
  const double bs =
      time_ms([&] { hm_s = heightmap_from_boxes_serial(g, scene.boxes); }, 20);
  const double bp =
      time_ms([&] { hm_p = heightmap_from_boxes(g, scene.boxes); }, 20);
  report("heightmap_from_boxes", bs, bp,
         hm_s.y == hm_p.y && hm_s.indicator == hm_p.indicator);

  // aggregation
  const HeightMap gt = heightmap_from_boxes(g, scene.boxes);
  BevQueryGrid q_s, q_p;
  const double as = time_ms(
      [&] {
        q_s = aggregate_serial(g, gt, scene.cameras, views_p.views, 4);
      },
      5);
  const double ap = time_ms(
      [&] { q_p = aggregate(g, gt, scene.cameras, views_p.views, 4); }, 5);
  report("aggregate", as, ap,
         q_s.features == q_p.features && q_s.hit_count == q_p.hit_count);

  // bound verification sweep
  const CameraModel cam(600, 620, 320, 240, 640, 480);
  std::vector<BoundSweepRow> rows_s, rows_p;
  const double ss =
      time_ms([&] { rows_s = bound_sweep_serial(cam, 0.4, 256, 1, 10000); }, 1);
  const double sp =
      time_ms([&] { rows_p = bound_sweep(cam, 0.4, 256, 1, 10000); }, 1);
  bool sweep_same = rows_s.size() == rows_p.size();
  for (size_t k = 0; sweep_same && k < rows_s.size(); ++k)
    sweep_same = rows_s[k].empirical_depth == rows_p[k].empirical_depth &&
                 rows_s[k].empirical_height == rows_p[k].empirical_height;
  report("bound_sweep", ss, sp, sweep_same);

  return 0;
}
