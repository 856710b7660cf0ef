#include "heightbev/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace heightbev {

PreparedScene prepare_scene(const Scene& scene, const GridSpec& g) {
  PreparedScene ps;
  ps.scene = scene;
  ps.views = render(scene);
  ps.gt = heightmap_from_boxes(g, scene.boxes);
  ps.weights = centerness_weights(g);
  return ps;
}

std::vector<PreparedScene> prepare_scenes(const std::vector<Scene>& scenes,
                                          const GridSpec& g) {
  std::vector<PreparedScene> out;
  out.reserve(scenes.size());
  for (const Scene& s : scenes) out.push_back(prepare_scene(s, g));
  return out;
}

namespace {

// Heights for sampling, taken from a decoded embedding grid.
HeightMap sampling_heights(const DecodedGrid& dec, const GridSpec& g) {
  HeightMap hm(g);
  const int n = g.cell_count();
  for (int f = 0; f < n; ++f) {
    hm.y[f] = dec.y[f];
    hm.h[f] = dec.h[f];
  }
  return hm;
}

}  // namespace

RecursiveTrace run_recursive(const PreparedScene& ps,
                             const PredictorParams& params, const GridSpec& g,
                             int n_anchors,
                             const BevQueryGrid* cached_first) {
  RecursiveTrace trace;
  EmbeddingGrid e = init_embeddings(g);
  trace.embeddings.push_back(e);
  for (int l = 0; l < params.layers; ++l) {
    if (l == 0 && cached_first) {
      trace.queries.push_back(*cached_first);
    } else {
      const DecodedGrid dec = decode(e, g);
      trace.queries.push_back(aggregate(g, sampling_heights(dec, g),
                                        ps.scene.cameras, ps.views.views,
                                        n_anchors));
    }
    e = forward(e, trace.queries.back(), params, l);
    trace.embeddings.push_back(e);
  }
  return trace;
}

TrainBatch make_batch(const PreparedScene& ps, const PredictorParams& params,
                      const GridSpec& g, int n_anchors,
                      const BevQueryGrid* cached_first) {
  RecursiveTrace trace =
      run_recursive(ps, params, g, n_anchors, cached_first);
  TrainBatch batch(g);
  batch.queries = std::move(trace.queries);
  batch.gt = ps.gt;
  batch.weights = ps.weights;
  return batch;
}

namespace {

struct Component {
  std::vector<int> cells;  // flat indices
};

// Hysteresis components: seeds above the core threshold grow through cells
// above the (lower) grow threshold. Weak correlated clutter never produces
// a core cell, so it cannot form or bridge components.
std::vector<Component> connected_components(const BevQueryGrid& q,
                                            const GridSpec& g,
                                            const ReadoutConfig& rc) {
  const int n = g.cell_count();
  std::vector<char> core(n, 0), grow(n, 0);
  for (int f = 0; f < n; ++f) {
    const bool hit = q.hit_count[f] > 0;
    core[f] = hit && q.cell(f)[0] >= rc.core_threshold;
    grow[f] = hit && q.cell(f)[0] >= rc.grow_threshold;
  }
  std::vector<char> visited(n, 0);
  std::vector<Component> comps;
  for (int start = 0; start < n; ++start) {
    if (!core[start] || visited[start]) continue;
    Component comp;
    std::deque<int> frontier{start};
    visited[start] = 1;
    while (!frontier.empty()) {
      const int f = frontier.front();
      frontier.pop_front();
      comp.cells.push_back(f);
      const int i = f % g.cells_x;
      const int j = f / g.cells_x;
      const int neighbors[4][2] = {
          {i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (const auto& nb : neighbors) {
        if (nb[0] < 0 || nb[0] >= g.cells_x || nb[1] < 0 ||
            nb[1] >= g.cells_z)
          continue;
        const int fn = g.flat(nb[0], nb[1]);
        if (grow[fn] && !visited[fn]) {
          visited[fn] = 1;
          frontier.push_back(fn);
        }
      }
    }
    comps.push_back(std::move(comp));
  }
  return comps;
}

int classify_by_size(double w, double l, double h) {
  const auto& priors = class_priors();
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int c = 0; c < static_cast<int>(priors.size()); ++c) {
    const double mw = 0.5 * (priors[c].w_lo + priors[c].w_hi);
    const double ml = 0.5 * (priors[c].l_lo + priors[c].l_hi);
    const double mh = 0.5 * (priors[c].h_lo + priors[c].h_hi);
    const double d = (w - mw) * (w - mw) / (mw * mw) +
                     (l - ml) * (l - ml) / (ml * ml) +
                     (h - mh) * (h - mh) / (mh * mh);
    if (d < best_dist) {
      best_dist = d;
      best = c;
    }
  }
  return best;
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

std::vector<Detection> readout(const BevQueryGrid& q, const DecodedGrid& dec,
                               const GridSpec& g, const ReadoutConfig& rc) {
  if (q.cells_x != g.cells_x || q.cells_z != g.cells_z)
    throw DataError("readout: query grid mismatch");
  std::vector<Detection> dets;
  for (Component comp : connected_components(q, g, rc)) {
    double peak = 0.0;
    for (int f : comp.cells) peak = std::max<double>(peak, q.cell(f)[0]);
    std::erase_if(comp.cells, [&](int f) {
      return q.cell(f)[0] < rc.trim_fraction * peak;
    });
    if (static_cast<int>(comp.cells.size()) < rc.min_cells) continue;
    double wsum = 0.0, mx = 0.0, mz = 0.0, my = 0.0, mh = 0.0, score = 0.0;
    for (int f : comp.cells) {
      const double w = q.cell(f)[0];
      double x, z;
      g.cell_center(f % g.cells_x, f / g.cells_x, x, z);
      wsum += w;
      mx += w * x;
      mz += w * z;
      my += w * dec.y[f];
      mh += w * dec.h[f];
      score += w;
    }
    mx /= wsum;
    mz /= wsum;
    my /= wsum;
    mh /= wsum;
    score /= comp.cells.size();
    // Weighted second moments give the footprint axes and extents.
    double sxx = 0.0, szz = 0.0, sxz = 0.0;
    for (int f : comp.cells) {
      const double w = q.cell(f)[0];
      double x, z;
      g.cell_center(f % g.cells_x, f / g.cells_x, x, z);
      sxx += w * (x - mx) * (x - mx);
      szz += w * (z - mz) * (z - mz);
      sxz += w * (x - mx) * (z - mz);
    }
    sxx /= wsum;
    szz /= wsum;
    sxz /= wsum;
    // Cell quantization floor on the variances.
    const double q2 = g.cell_size * g.cell_size / 12.0;
    sxx += q2;
    szz += q2;
    const double tr = sxx + szz;
    const double det = sxx * szz - sxz * sxz;
    const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    const double l_major = 0.5 * tr + disc;
    const double l_minor = std::max(0.5 * tr - disc, q2);
    // Major-axis eigenvector.
    double ex, ez;
    if (std::abs(sxz) > 1e-12) {
      ex = l_major - szz;
      ez = sxz;
    } else if (sxx >= szz) {
      ex = 1.0;
      ez = 0.0;
    } else {
      ex = 0.0;
      ez = 1.0;
    }
    const double norm = std::hypot(ex, ez);
    ex /= norm;
    ez /= norm;
    Detection d;
    d.box.length = std::sqrt(12.0 * l_major);
    d.box.width = std::sqrt(12.0 * l_minor);
    d.box.height = mh;
    d.box.center = {mx, my, mz};
    // The length axis maps to (-sin yaw, cos yaw); wrap into [-pi/2, pi/2).
    double yaw = std::atan2(-ex, ez);
    if (yaw >= kPi / 2) yaw -= kPi;
    if (yaw < -kPi / 2) yaw += kPi;
    d.box.yaw = yaw;
    d.box.class_id = classify_by_size(d.box.width, d.box.length, d.box.height);
    d.score = std::clamp(score, 0.0, 1.0);
    dets.push_back(d);
  }
  return dets;
}

namespace {

std::vector<double> mask_logits(const EvalConfig& cfg, const PreparedScene& ps,
                                const EmbeddingGrid* final_embeddings,
                                const GridSpec& g) {
  const int n = g.cell_count();
  std::vector<double> logits(n, 20.0);
  switch (cfg.mode) {
    case HeightsMode::kPredicted:
      for (int f = 0; f < n; ++f) logits[f] = final_embeddings->cell(f)[4];
      break;
    case HeightsMode::kGroundTruth:
      for (int f = 0; f < n; ++f)
        logits[f] = ps.gt.indicator[f] ? 20.0 : -20.0;
      break;
    case HeightsMode::kFixedAnchors:
      break;  // no segmentation source; mask stays open
  }
  return logits;
}

}  // namespace

SceneDetections eval_scene(const PreparedScene& ps,
                           const PredictorParams* params,
                           const EvalConfig& cfg, const ReadoutConfig& rc) {
  const GridSpec& g = cfg.grid;
  DecodedGrid dec;
  const EmbeddingGrid* final_e = nullptr;
  RecursiveTrace trace;
  switch (cfg.mode) {
    case HeightsMode::kPredicted: {
      if (!params)
        throw DataError("eval_scene: predicted mode requires parameters");
      trace = run_recursive(ps, *params, g, cfg.n_anchors);
      final_e = &trace.embeddings.back();
      dec = decode(*final_e, g);
      break;
    }
    case HeightsMode::kGroundTruth: {
      dec.cells_x = g.cells_x;
      dec.cells_z = g.cells_z;
      const int n = g.cell_count();
      dec.y = ps.gt.y;
      dec.h = ps.gt.h;
      dec.sigma_y.assign(n, 1.0);
      dec.sigma_h.assign(n, 1.0);
      dec.seg_prob.resize(n);
      for (int f = 0; f < n; ++f) dec.seg_prob[f] = ps.gt.indicator[f];
      break;
    }
    case HeightsMode::kFixedAnchors: {
      const HeightMap sentinel(g);
      dec.cells_x = g.cells_x;
      dec.cells_z = g.cells_z;
      dec.y = sentinel.y;
      dec.h = sentinel.h;
      dec.sigma_y.assign(g.cell_count(), 1.0);
      dec.sigma_h.assign(g.cell_count(), 1.0);
      dec.seg_prob.assign(g.cell_count(), 1.0);
      break;
    }
  }
  BevQueryGrid q = aggregate(g, sampling_heights(dec, g), ps.scene.cameras,
                             ps.views.views, cfg.n_anchors);
  if (cfg.apply_mask) {
    const auto logits = mask_logits(cfg, ps, final_e, g);
    q = apply_query_mask(q, logits, cfg.mask_tau);
  }
  SceneDetections sd;
  sd.preds = readout(q, dec, g, rc);
  sd.gts = ps.scene.boxes;
  return sd;
}

EvalResult eval_scenes(const std::vector<PreparedScene>& scenes,
                       const PredictorParams* params, const EvalConfig& cfg,
                       const ReadoutConfig& rc) {
  std::vector<SceneDetections> all;
  all.reserve(scenes.size());
  for (const PreparedScene& ps : scenes)
    all.push_back(eval_scene(ps, params, cfg, rc));
  return evaluate(all);
}

FitResult train_on_scenes(const std::vector<PreparedScene>& scenes,
                          const TrainOptions& opts) {
  if (scenes.empty()) throw DataError("train_on_scenes: no scenes");
  const int channels = scenes[0].views.views.at(0).channels;
  PredictorParams initial = PredictorParams::create(
      opts.layers, channels, opts.hidden, opts.fit.seed);
  // The first-layer queries never change: E_0 is constant.
  std::vector<BevQueryGrid> first_layer;
  first_layer.reserve(scenes.size());
  const HeightMap sentinel(opts.grid);
  for (const PreparedScene& ps : scenes)
    first_layer.push_back(aggregate(opts.grid, sentinel, ps.scene.cameras,
                                    ps.views.views, opts.n_anchors));
  BatchBuilder builder = [&](const PredictorParams& params, int idx) {
    return make_batch(scenes[idx], params, opts.grid, opts.n_anchors,
                      &first_layer[idx]);
  };
  return fit(std::move(initial), static_cast<int>(scenes.size()), builder,
             opts.fit);
}

std::vector<HeightErrorSample> height_error_profile(
    const std::vector<PreparedScene>& scenes, const PredictorParams& params,
    const GridSpec& g, int n_anchors) {
  std::vector<HeightErrorSample> samples;
  for (const PreparedScene& ps : scenes) {
    const RecursiveTrace trace = run_recursive(ps, params, g, n_anchors);
    const DecodedGrid dec = decode(trace.embeddings.back(), g);
    for (int j = 0; j < g.cells_z; ++j)
      for (int i = 0; i < g.cells_x; ++i) {
        const int f = g.flat(i, j);
        if (!ps.gt.indicator[f]) continue;
        double x, z;
        g.cell_center(i, j, x, z);
        samples.push_back(
            {std::abs(dec.y[f] - ps.gt.y[f]), std::hypot(x, z)});
      }
  }
  return samples;
}

GridSpec DatasetSpec::desk_grid() {
  GridSpec g;
  g.cells_x = 40;
  g.cells_z = 40;
  g.cell_size = 0.512;
  g.origin_x = -10.24;
  g.origin_z = -10.24;
  g.y_min = -5.0;
  g.y_max = 3.0;
  return g;
}

std::vector<Scene> make_dataset(const DatasetSpec& spec) {
  GenerateOptions opts;
  opts.background_noise = spec.background_noise;
  opts.margin = 0.8;
  std::vector<Scene> scenes;
  scenes.reserve(spec.n_scenes);
  std::uint64_t seed = spec.seed;
  for (int s = 0; s < spec.n_scenes; ++s)
    scenes.push_back(generate(seed + s, spec.n_boxes, spec.grid, opts));
  return scenes;
}

}  // namespace heightbev
