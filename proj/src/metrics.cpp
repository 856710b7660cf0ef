#include "heightbev/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace heightbev {

namespace {

double bev_dist(const Box3D& a, const Box3D& b) {
  return std::hypot(a.center.x - b.center.x, a.center.z - b.center.z);
}

std::vector<int> score_order(const std::vector<Detection>& preds) {
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return preds[a].score > preds[b].score;
  });
  return order;
}

}  // namespace

std::vector<MatchPair> match(const std::vector<Detection>& preds,
                             const std::vector<Box3D>& gts,
                             double dist_threshold) {
  std::vector<MatchPair> pairs;
  std::vector<bool> taken(gts.size(), false);
  for (int p : score_order(preds)) {
    int best = -1;
    double best_dist = dist_threshold;
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
      if (taken[g] || gts[g].class_id != preds[p].box.class_id) continue;
      const double d = bev_dist(preds[p].box, gts[g]);
      if (d <= best_dist) {
        best_dist = d;
        best = g;
      }
    }
    if (best >= 0) {
      taken[best] = true;
      pairs.push_back({p, best, best_dist});
    }
  }
  return pairs;
}

namespace {

double aligned_size_iou(const Box3D& a, const Box3D& b) {
  const double iw = std::min(a.width, b.width);
  const double ih = std::min(a.height, b.height);
  const double il = std::min(a.length, b.length);
  const double inter = iw * ih * il;
  const double va = a.width * a.height * a.length;
  const double vb = b.width * b.height * b.length;
  return inter / (va + vb - inter);
}

double wrap_yaw(double d) {
  d = std::fmod(std::abs(d), 2.0 * M_PI);
  return d > M_PI ? 2.0 * M_PI - d : d;
}

}  // namespace

TpErrors tp_errors(const std::vector<Detection>& preds,
                   const std::vector<Box3D>& gts,
                   const std::vector<MatchPair>& pairs) {
  if (pairs.empty()) throw DataError("tp_errors: no matches");
  TpErrors e;
  int correct = 0;
  for (const MatchPair& m : pairs) {
    const Box3D& p = preds[m.pred].box;
    const Box3D& g = gts[m.gt];
    e.ate += bev_dist(p, g);
    e.ase += 1.0 - aligned_size_iou(p, g);
    e.aoe += wrap_yaw(p.yaw - g.yaw);
    e.ave += std::hypot(p.vx - g.vx, p.vz - g.vz);
    if (p.class_id == g.class_id) ++correct;
  }
  const double n = static_cast<double>(pairs.size());
  e.ate /= n;
  e.ase /= n;
  e.aoe /= n;
  e.ave /= n;
  e.aae = 1.0 - correct / n;
  return e;
}

namespace {

// AP of one class at one distance threshold, predictions pooled over scenes
// in global score order, matching confined to each prediction's scene.
double class_ap(const std::vector<SceneDetections>& scenes, int class_id,
                double dist_threshold) {
  struct Entry {
    double score;
    int scene;
    int pred;
  };
  std::vector<Entry> entries;
  int n_gt = 0;
  for (int s = 0; s < static_cast<int>(scenes.size()); ++s) {
    for (int p = 0; p < static_cast<int>(scenes[s].preds.size()); ++p)
      if (scenes[s].preds[p].box.class_id == class_id)
        entries.push_back({scenes[s].preds[p].score, s, p});
    for (const Box3D& g : scenes[s].gts)
      if (g.class_id == class_id) ++n_gt;
  }
  if (n_gt == 0) return -1.0;  // class absent: excluded from the average
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) {
                     return a.score > b.score;
                   });
  std::vector<std::vector<bool>> taken(scenes.size());
  for (int s = 0; s < static_cast<int>(scenes.size()); ++s)
    taken[s].assign(scenes[s].gts.size(), false);

  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const Entry& en : entries) {
    const auto& gts = scenes[en.scene].gts;
    const Box3D& pb = scenes[en.scene].preds[en.pred].box;
    int best = -1;
    double best_dist = dist_threshold;
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
      if (taken[en.scene][g] || gts[g].class_id != class_id) continue;
      const double d =
          std::hypot(pb.center.x - gts[g].center.x,
                     pb.center.z - gts[g].center.z);
      if (d <= best_dist) {
        best_dist = d;
        best = g;
      }
    }
    if (best >= 0) {
      taken[en.scene][best] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }
  if (precision.empty()) return 0.0;
  // Interpolated precision: running max from the right.
  for (int k = static_cast<int>(precision.size()) - 2; k >= 0; --k)
    precision[k] = std::max(precision[k], precision[k + 1]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

}  // namespace

double average_precision(const std::vector<SceneDetections>& scenes,
                         double dist_threshold) {
  std::set<int> classes;
  for (const auto& s : scenes)
    for (const Box3D& g : s.gts) classes.insert(g.class_id);
  if (classes.empty()) return 0.0;
  double sum = 0.0;
  int count = 0;
  for (int c : classes) {
    const double ap = class_ap(scenes, c, dist_threshold);
    if (ap >= 0.0) {
      sum += ap;
      ++count;
    }
  }
  return count ? sum / count : 0.0;
}

double map_over(const std::vector<SceneDetections>& scenes,
                const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw DataError("map_over: no thresholds");
  double sum = 0.0;
  for (double t : thresholds) sum += average_precision(scenes, t);
  return sum / thresholds.size();
}

double nds(const EvalResult& r) {
  const double tp_terms = (1.0 - std::min(1.0, r.mate)) +
                          (1.0 - std::min(1.0, r.mase)) +
                          (1.0 - std::min(1.0, r.maoe)) +
                          (1.0 - std::min(1.0, r.mave)) +
                          (1.0 - std::min(1.0, r.maae));
  return 0.1 * (5.0 * r.map + tp_terms);
}

EvalResult evaluate(const std::vector<SceneDetections>& scenes,
                    double tp_match_dist) {
  EvalResult r;
  r.map = map_over(scenes);
  TpErrors sum;
  int total_pairs = 0;
  for (const auto& s : scenes) {
    const auto pairs = match(s.preds, s.gts, tp_match_dist);
    if (pairs.empty()) continue;
    const TpErrors e = tp_errors(s.preds, s.gts, pairs);
    const double n = static_cast<double>(pairs.size());
    sum.ate += e.ate * n;
    sum.ase += e.ase * n;
    sum.aoe += e.aoe * n;
    sum.ave += e.ave * n;
    sum.aae += e.aae * n;
    total_pairs += pairs.size();
  }
  if (total_pairs > 0) {
    r.mate = sum.ate / total_pairs;
    r.mase = sum.ase / total_pairs;
    r.maoe = sum.aoe / total_pairs;
    r.mave = sum.ave / total_pairs;
    r.maae = sum.aae / total_pairs;
  } else {
    // Nothing matched anywhere: worst-case TP errors.
    r.mate = r.mase = r.maoe = r.mave = r.maae = 1.0;
  }
  r.nds = nds(r);
  return r;
}

}  // namespace heightbev
