#include <cmath>
#include <random>

#include "doctest.h"
#include "heightbev/metrics.hpp"

using namespace heightbev;

namespace {

Box3D make_box(double x, double z, int class_id = 0, double yaw = 0.0) {
  Box3D b;
  b.center = {x, -1.0, z};
  b.width = 1.8;
  b.height = 1.5;
  b.length = 4.2;
  b.yaw = yaw;
  b.class_id = class_id;
  return b;
}

Detection det(const Box3D& b, double score) { return {b, score}; }

}  // namespace

TEST_CASE("match: identical sets pair perfectly") {
  std::vector<Box3D> gts = {make_box(0, 0), make_box(5, 5), make_box(-3, 4)};
  std::vector<Detection> preds;
  for (const auto& g : gts) preds.push_back(det(g, 0.9));
  const auto pairs = match(preds, gts, 2.0);
  CHECK(pairs.size() == 3);
  for (const auto& p : pairs) CHECK(p.dist == doctest::Approx(0.0));
}

TEST_CASE("match: empty predictions produce no pairs") {
  std::vector<Box3D> gts = {make_box(0, 0)};
  CHECK(match({}, gts, 2.0).empty());
}

TEST_CASE("match: class mismatch and distance gate") {
  std::vector<Box3D> gts = {make_box(0, 0, 1)};
  std::vector<Detection> preds = {det(make_box(0.1, 0, 0), 0.9),
                                  det(make_box(5, 5, 1), 0.8)};
  CHECK(match(preds, gts, 2.0).empty());
  preds.push_back(det(make_box(0.5, 0, 1), 0.7));
  const auto pairs = match(preds, gts, 2.0);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].pred == 2);
}

TEST_CASE("greedy matching equals exhaustive assignment on small scenes") {
  // The greedy matcher maximizes matched count on these scenes; verify
  // against brute-force enumeration of all injective assignments.
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<Box3D> gts;
    std::vector<Detection> preds;
    const int n = 1 + trial % 5;
    for (int k = 0; k < n; ++k) {
      gts.push_back(make_box(u(rng), u(rng)));
      Detection d = det(make_box(u(rng), u(rng)), 0.5 + 0.01 * k);
      preds.push_back(d);
    }
    const auto pairs = match(preds, gts, 2.0);
    // Exhaustive: maximum matching count within the threshold.
    int best = 0;
    std::vector<int> perm(gts.size());
    for (size_t k = 0; k < perm.size(); ++k) perm[k] = static_cast<int>(k);
    std::sort(perm.begin(), perm.end());
    do {
      int count = 0;
      for (size_t p = 0; p < preds.size() && p < perm.size(); ++p) {
        const double d =
            std::hypot(preds[p].box.center.x - gts[perm[p]].center.x,
                       preds[p].box.center.z - gts[perm[p]].center.z);
        if (d <= 2.0) ++count;
      }
      best = std::max(best, count);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(static_cast<int>(pairs.size()) == best);
  }
}

TEST_CASE("tp_errors: exact predictions give the zero vector") {
  std::vector<Box3D> gts = {make_box(0, 0), make_box(4, 2)};
  std::vector<Detection> preds = {det(gts[0], 1.0), det(gts[1], 1.0)};
  const auto pairs = match(preds, gts, 2.0);
  const TpErrors e = tp_errors(preds, gts, pairs);
  CHECK(e.ate == doctest::Approx(0.0));
  CHECK(e.ase == doctest::Approx(0.0));
  CHECK(e.aoe == doctest::Approx(0.0));
  CHECK(e.ave == doctest::Approx(0.0));
  CHECK(e.aae == doctest::Approx(0.0));
}

TEST_CASE("tp_errors: yaw off by pi wraps to pi") {
  std::vector<Box3D> gts = {make_box(0, 0)};
  Box3D flipped = gts[0];
  flipped.yaw = M_PI;
  const std::vector<Detection> preds = {det(flipped, 1.0)};
  const auto pairs = match(preds, gts, 2.0);
  const TpErrors e = tp_errors(preds, gts, pairs);
  CHECK(e.aoe == doctest::Approx(M_PI));
}

TEST_CASE("tp_errors: doubling one size axis halves the IoU") {
  std::vector<Box3D> gts = {make_box(0, 0)};
  Box3D wide = gts[0];
  wide.width *= 2.0;
  const std::vector<Detection> preds = {det(wide, 1.0)};
  const auto pairs = match(preds, gts, 2.0);
  const TpErrors e = tp_errors(preds, gts, pairs);
  CHECK(e.ase == doctest::Approx(0.5));
}

TEST_CASE("tp_errors demands at least one match") {
  CHECK_THROWS_AS(tp_errors({}, {}, {}), DataError);
}

TEST_CASE("average precision: perfect and empty detectors") {
  SceneDetections sd;
  sd.gts = {make_box(0, 0), make_box(5, 5, 1)};
  sd.preds = {det(sd.gts[0], 0.9), det(sd.gts[1], 0.8)};
  CHECK(average_precision({sd}, 2.0) == doctest::Approx(1.0));
  SceneDetections none;
  none.gts = sd.gts;
  CHECK(average_precision({none}, 2.0) == doctest::Approx(0.0));
}

TEST_CASE("average precision matches a brute-force PR integration") {
  // Ten ground-truth objects, a mix of good and bad predictions.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  SceneDetections sd;
  for (int k = 0; k < 10; ++k) sd.gts.push_back(make_box(u(rng), u(rng)));
  std::vector<double> scores;
  for (int k = 0; k < 10; ++k) {
    const bool good = k % 3 != 0;
    Box3D pb = sd.gts[k];
    if (!good) pb.center.x += 30.0;  // far off: a false positive
    const double score = 0.95 - 0.07 * k;
    sd.preds.push_back(det(pb, score));
    scores.push_back(score);
  }
  const double ap = average_precision({sd}, 2.0);

  // Oracle: evaluate precision/recall at every score cutoff directly, then
  // integrate the staircase with right-interpolated precision.
  std::sort(scores.begin(), scores.end());
  std::vector<std::pair<double, double>> pr;  // recall, precision
  for (double cut : scores) {
    std::vector<Detection> kept;
    for (const auto& d : sd.preds)
      if (d.score >= cut) kept.push_back(d);
    const auto pairs = match(kept, sd.gts, 2.0);
    const double recall = pairs.size() / 10.0;
    const double precision =
        kept.empty() ? 0.0 : static_cast<double>(pairs.size()) / kept.size();
    pr.push_back({recall, precision});
  }
  std::sort(pr.begin(), pr.end());
  double oracle = 0.0, prev_r = 0.0;
  for (size_t k = 0; k < pr.size(); ++k) {
    double best_p = 0.0;
    for (size_t m = k; m < pr.size(); ++m) best_p = std::max(best_p, pr[m].second);
    oracle += (pr[k].first - prev_r) * best_p;
    prev_r = pr[k].first;
  }
  CHECK(ap == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("AP is invariant under monotone score rescaling") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-15.0, 15.0);
  SceneDetections a;
  for (int k = 0; k < 8; ++k) {
    a.gts.push_back(make_box(u(rng), u(rng)));
    Box3D pb = a.gts.back();
    if (k % 4 == 0) pb.center.z += 25.0;
    a.preds.push_back(det(pb, 0.1 + 0.1 * k));
  }
  SceneDetections b = a;
  for (auto& d : b.preds) d.score = std::tanh(3.0 * d.score);  // monotone
  CHECK(average_precision({a}, 2.0) ==
        doctest::Approx(average_precision({b}, 2.0)));
}

TEST_CASE("NDS: trivial compositions") {
  EvalResult best;
  best.map = 1.0;
  CHECK(nds(best) == doctest::Approx(1.0));
  EvalResult worst;
  worst.map = 0.0;
  worst.mate = worst.mase = worst.maoe = worst.mave = worst.maae = 1.5;
  CHECK(nds(worst) == doctest::Approx(0.0));
  EvalResult mid;
  mid.map = 0.5;
  mid.mate = mid.mase = mid.maoe = mid.mave = mid.maae = 0.5;
  CHECK(nds(mid) == doctest::Approx(0.5));
}

TEST_CASE("NDS: clipping above one and monotonicity") {
  EvalResult r;
  r.map = 0.4;
  r.mate = 2.0;
  const double base = nds(r);
  r.mate = 7.0;  // clipped: no further harm
  CHECK(nds(r) == doctest::Approx(base));
  r.map = 0.6;
  CHECK(nds(r) > base);
  r.map = 0.4;
  r.mase = 0.9;
  CHECK(nds(r) < base);
}

TEST_CASE("self-evaluation of ground truth scores a perfect NDS") {
  std::mt19937_64 rng(27);
  std::uniform_real_distribution<double> u(-18.0, 18.0);
  std::vector<SceneDetections> scenes(4);
  for (auto& sd : scenes) {
    for (int k = 0; k < 5; ++k) {
      sd.gts.push_back(make_box(u(rng), u(rng), k % 3, 0.3 * k));
      sd.preds.push_back(det(sd.gts.back(), 1.0));
    }
  }
  const EvalResult r = evaluate(scenes);
  CHECK(r.map == doctest::Approx(1.0));
  CHECK(r.nds == doctest::Approx(1.0));
  // EvalResult reproduces Eq. 9 from its own fields.
  CHECK(r.nds == doctest::Approx(nds(r)));
}
