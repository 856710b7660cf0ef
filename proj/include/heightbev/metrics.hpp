#pragma once

#include <vector>

#include "heightbev/bevgrid.hpp"

namespace heightbev {

struct Detection {
  Box3D box;
  double score = 0.0;  // in [0, 1]
};

struct MatchPair {
  int pred = -1;
  int gt = -1;
  double dist = 0.0;
};

/// Greedy score-descending assignment: every prediction takes the nearest
/// unmatched ground-truth box of its own class within BEV center distance
/// <= dist_threshold.
std::vector<MatchPair> match(const std::vector<Detection>& preds,
                             const std::vector<Box3D>& gts,
                             double dist_threshold);

struct TpErrors {
  double ate = 0.0;  // mean BEV center distance (m)
  double ase = 0.0;  // 1 - IoU of aligned size boxes
  double aoe = 0.0;  // mean |yaw difference| wrapped to [0, pi]
  double ave = 0.0;  // mean velocity L2 error (m/s)
  double aae = 0.0;  // 1 - classification accuracy over matches
};

/// True-positive error statistics over matched pairs.
/// Throws DataError when the pairing is empty.
TpErrors tp_errors(const std::vector<Detection>& preds,
                   const std::vector<Box3D>& gts,
                   const std::vector<MatchPair>& pairs);

/// Predictions and ground truth of one scene; matching never crosses
/// scenes.
struct SceneDetections {
  std::vector<Detection> preds;
  std::vector<Box3D> gts;
};

/// Average precision at one distance threshold, averaged with equal weight
/// over the classes present in the ground truth. Precision is interpolated
/// over the full score sweep.
double average_precision(const std::vector<SceneDetections>& scenes,
                         double dist_threshold);

inline const std::vector<double>& map_thresholds() {
  static const std::vector<double> t = {0.5, 1.0, 2.0, 4.0};
  return t;
}

/// mAP over the standard distance thresholds {0.5, 1, 2, 4} m.
double map_over(const std::vector<SceneDetections>& scenes,
                const std::vector<double>& thresholds = map_thresholds());

struct EvalResult {
  double map = 0.0;
  double mate = 0.0;
  double mase = 0.0;
  double maoe = 0.0;
  double mave = 0.0;
  double maae = 0.0;
  double nds = 0.0;
};

/// NDS = (1/10) [5 mAP + sum over TP metrics of (1 - min(1, mTP))].
double nds(const EvalResult& r);

/// Full evaluation: mAP over thresholds, TP sub-metrics over matches at
/// `tp_match_dist`, NDS composition. Scenes without any match contribute
/// worst-case (1.0) TP errors.
EvalResult evaluate(const std::vector<SceneDetections>& scenes,
                    double tp_match_dist = 2.0);

}  // namespace heightbev
