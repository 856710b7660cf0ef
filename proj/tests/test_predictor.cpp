#include <cmath>
#include <random>

#include "doctest.h"
#include "heightbev/predictor.hpp"

using namespace heightbev;

namespace {

GridSpec micro_grid(int cells = 6) {
  GridSpec g;
  g.cells_x = cells;
  g.cells_z = cells;
  g.cell_size = 1.0;
  g.origin_x = -cells / 2.0;
  g.origin_z = -cells / 2.0;
  return g;
}

BevQueryGrid random_queries(int cells, int channels, std::uint64_t seed) {
  BevQueryGrid q(cells, cells, channels);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : q.features) v = u(rng);
  for (auto& hc : q.hit_count) hc = 4;
  return q;
}

HeightMap random_gt(const GridSpec& g, std::uint64_t seed) {
  HeightMap gt(g);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uy(-2.0, 1.0);
  std::uniform_real_distribution<double> uh(0.5, 3.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int f = 0; f < g.cell_count(); ++f) {
    if (u01(rng) < 0.4) {
      gt.indicator[f] = 1;
      gt.y[f] = uy(rng);
      gt.h[f] = uh(rng);
    }
  }
  return gt;
}

TrainBatch random_batch(const GridSpec& g, const PredictorParams& p,
                        std::uint64_t seed) {
  TrainBatch b(g);
  for (int l = 0; l < p.layers; ++l)
    b.queries.push_back(
        random_queries(g.cells_x, p.channels, seed + 100 * l));
  b.gt = random_gt(g, seed + 1);
  b.weights = centerness_weights(g);
  return b;
}

}  // namespace

TEST_CASE("initial embeddings decode to the full height range") {
  GridSpec g;  // default range (-5, 3)
  const EmbeddingGrid e = init_embeddings(g);
  const double* c = e.cell(0);
  CHECK(c[0] == 0.5);
  CHECK(c[1] == 1.0);
  CHECK(c[2] == 0.0);
  const DecodedGrid d = decode(e, g);
  CHECK(d.y[0] == doctest::Approx(-1.0));
  CHECK(d.h[0] == doctest::Approx(8.0));
  CHECK(d.sigma_y[0] == doctest::Approx(1.0));
  CHECK(d.sigma_h[0] == doctest::Approx(1.0));
  CHECK(d.seg_prob[0] == doctest::Approx(0.5));
}

TEST_CASE("decode clamps and maps endpoints") {
  GridSpec g = micro_grid();
  EmbeddingGrid e(g.cells_x, g.cells_z);
  double* c0 = e.cell(0);
  c0[0] = 0.0;   // y_norm at the lower endpoint
  double* c1 = e.cell(1);
  c1[0] = 1.5;   // decodes as clamped to 1
  const DecodedGrid d = decode(e, g);
  CHECK(d.y[0] == doctest::Approx(g.y_min));
  CHECK(d.y[1] == doctest::Approx(g.y_max));
}

TEST_CASE("decode is monotone per channel inside the clamp region") {
  GridSpec g = micro_grid();
  EmbeddingGrid e(g.cells_x, g.cells_z);
  double prev_y = -1e18, prev_h = -1e18, prev_s = -1e18, prev_p = -1e18;
  for (double t = 0.05; t < 1.0; t += 0.1) {
    double* c = e.cell(0);
    c[0] = t;
    c[1] = t;
    c[2] = -5.0 + 10.0 * t;
    c[4] = -4.0 + 8.0 * t;
    const DecodedGrid d = decode(e, g);
    CHECK(d.y[0] > prev_y);
    CHECK(d.h[0] > prev_h);
    CHECK(d.sigma_y[0] > prev_s);
    CHECK(d.seg_prob[0] > prev_p);
    prev_y = d.y[0];
    prev_h = d.h[0];
    prev_s = d.sigma_y[0];
    prev_p = d.seg_prob[0];
  }
}

TEST_CASE("zero parameters make forward the identity") {
  GridSpec g = micro_grid();
  const PredictorParams p = PredictorParams::zeros(2, 8, 16);
  const EmbeddingGrid e0 = init_embeddings(g);
  const BevQueryGrid q = random_queries(g.cells_x, 8, 3);
  const EmbeddingGrid e1 = forward(e0, q, p, 0);
  CHECK(e1.data == e0.data);
}

namespace {

// Independent re-implementation of one predictor layer used as the
// unrolling oracle.
std::vector<double> manual_layer(const PredictorParams& p, int layer,
                                 const std::vector<double>& e_in,
                                 const BevQueryGrid& q, int cells) {
  std::vector<double> out(e_in.size());
  const int in = p.input_dim();
  for (int f = 0; f < cells; ++f) {
    std::vector<double> x(in);
    for (int k = 0; k < 5; ++k) x[k] = e_in[f * 5 + k];
    for (int k = 0; k < p.channels; ++k) x[5 + k] = q.cell(f)[k];
    std::vector<double> a(p.hidden);
    for (int hidx = 0; hidx < p.hidden; ++hidx) {
      double z = p.b1(layer)[hidx];
      for (int k = 0; k < in; ++k) z += p.w1(layer)[hidx * in + k] * x[k];
      a[hidx] = std::tanh(z);
    }
    for (int o = 0; o < 5; ++o) {
      double d = p.b2(layer)[o];
      for (int hidx = 0; hidx < p.hidden; ++hidx)
        d += p.w2(layer)[o * p.hidden + hidx] * a[hidx];
      out[f * 5 + o] = e_in[f * 5 + o] + d;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("three forward applications equal the manually unrolled recursion") {
  GridSpec g = micro_grid(4);
  const PredictorParams p = PredictorParams::create(3, 6, 12, 42);
  std::vector<BevQueryGrid> qs;
  for (int l = 0; l < 3; ++l) qs.push_back(random_queries(4, 6, 7 + l));

  EmbeddingGrid e = init_embeddings(g);
  std::vector<double> manual = e.data;
  for (int l = 0; l < 3; ++l) {
    e = forward(e, qs[l], p, l);
    manual = manual_layer(p, l, manual, qs[l], g.cell_count());
  }
  REQUIRE(e.data.size() == manual.size());
  for (size_t k = 0; k < manual.size(); ++k)
    CHECK(e.data[k] == doctest::Approx(manual[k]).epsilon(1e-12));
}

TEST_CASE("forward is local: one cell's query touches only that cell") {
  GridSpec g = micro_grid(5);
  const PredictorParams p = PredictorParams::create(1, 4, 8, 9);
  const EmbeddingGrid e0 = init_embeddings(g);
  BevQueryGrid q = random_queries(5, 4, 21);
  const EmbeddingGrid base = forward(e0, q, p, 0);
  q.cell(7)[2] += 0.5f;
  const EmbeddingGrid bumped = forward(e0, q, p, 0);
  for (int f = 0; f < g.cell_count(); ++f) {
    bool changed = false;
    for (int k = 0; k < 5; ++k)
      if (base.cell(f)[k] != bumped.cell(f)[k]) changed = true;
    CHECK(changed == (f == 7));
  }
}

TEST_CASE("forward validates shapes") {
  GridSpec g = micro_grid();
  const PredictorParams p = PredictorParams::create(1, 4, 8, 1);
  const EmbeddingGrid e0 = init_embeddings(g);
  CHECK_THROWS_AS(forward(e0, random_queries(5, 4, 1), p, 0), DataError);
  CHECK_THROWS_AS(forward(e0, random_queries(6, 3, 1), p, 0), DataError);
  CHECK_THROWS_AS(forward(e0, random_queries(6, 4, 1), p, 1), DataError);
}

TEST_CASE("height loss: exact fit with unit sigma costs nothing") {
  GridSpec g = micro_grid(2);
  HeightMap gt(g);
  gt.indicator[0] = 1;
  gt.y[0] = -1.0;
  gt.h[0] = 1.5;
  DecodedGrid pred;
  pred.cells_x = pred.cells_z = 2;
  pred.y = {-1.0, 0, 0, 0};
  pred.h = {1.5, 0, 0, 0};
  pred.sigma_y = {1.0, 1e9, 1e9, 1e9};
  pred.sigma_h = {1.0, 1e9, 1e9, 1e9};
  pred.seg_prob.assign(4, 0.5);
  std::vector<double> w(4, 1.0);
  const LossReport r = height_loss(pred, gt, w);
  // Cell 0 contributes 0; background cells contribute ~0 through 1/sigma.
  CHECK(r.y_term == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(r.height_term == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("height loss: direct arithmetic of the occupied branch") {
  GridSpec g = micro_grid(1);
  HeightMap gt(g);
  gt.indicator[0] = 1;
  gt.y[0] = 0.0;
  gt.h[0] = 1.0;
  DecodedGrid pred;
  pred.cells_x = pred.cells_z = 1;
  pred.y = {0.0};
  pred.h = {2.0};  // |h - h_gt| = 1
  pred.sigma_y = {1.0};
  pred.sigma_h = {std::sqrt(2.0)};
  pred.seg_prob = {0.5};
  const LossReport r = height_loss(pred, gt, {1.0});
  CHECK(r.height_term == doctest::Approx(1.0 + 0.5 * std::log(2.0)));
  CHECK(r.height_term == doctest::Approx(1.34657).epsilon(1e-4));
}

TEST_CASE("height loss: background branch pushes sigma up") {
  GridSpec g = micro_grid(1);
  HeightMap gt(g);  // indicator 0
  DecodedGrid pred;
  pred.cells_x = pred.cells_z = 1;
  pred.y = {0.0};
  pred.h = {1.0};
  pred.sigma_y = {1e9};
  pred.sigma_h = {2.0};
  pred.seg_prob = {0.5};
  const LossReport r = height_loss(pred, gt, {1.0});
  CHECK(r.height_term == doctest::Approx(0.5));
}

TEST_CASE("occupied loss term is minimized at sigma = sqrt(2)|residual|") {
  const double residual = 0.8;
  double best_sigma = 0.0, best_val = 1e18;
  for (double s = 0.05; s <= 5.0; s += 0.001) {
    const double val = std::sqrt(2.0) * residual / s + std::log(s);
    if (val < best_val) {
      best_val = val;
      best_sigma = s;
    }
  }
  CHECK(best_sigma ==
        doctest::Approx(std::sqrt(2.0) * residual).epsilon(0.01));
}

TEST_CASE("focal loss: trivial values") {
  CHECK(focal_loss({1e4}, {1}) == doctest::Approx(0.0));
  // gamma = 0, alpha = 0.5 halves the plain cross entropy.
  const double z = 0.7;
  const double bce = -std::log(1.0 / (1.0 + std::exp(-z)));
  CHECK(focal_loss({z}, {1}, 0.0, 0.5) == doctest::Approx(0.5 * bce));
}

TEST_CASE("focal loss decreases as the correct-class probability rises") {
  double prev = 1e18;
  for (double z = -4.0; z <= 4.0; z += 0.25) {
    const double val = focal_loss({z}, {1});
    CHECK(val < prev);
    prev = val;
  }
}

TEST_CASE("gradient check on seeded random batches") {
  GridSpec g = micro_grid(4);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const PredictorParams p = PredictorParams::create(2, 6, 10, seed);
    const TrainBatch b = random_batch(g, p, seed * 31 + 5);
    CHECK(grad_check(p, b, 1e-5) < 1e-4);
  }
}

TEST_CASE("gradient check with all layers supervised") {
  GridSpec g = micro_grid(3);
  const PredictorParams p = PredictorParams::create(3, 4, 8, 12);
  TrainBatch b = random_batch(g, p, 77);
  b.supervise_all_layers = true;
  CHECK(grad_check(p, b, 1e-5) < 1e-4);
}

TEST_CASE("zero residual with unit sigma zeroes the y/h bias gradient") {
  GridSpec g = micro_grid(3);
  const PredictorParams p = PredictorParams::zeros(1, 4, 8);
  TrainBatch b(g);
  b.queries.push_back(random_queries(3, 4, 2));
  b.weights = centerness_weights(g);
  // Ground truth equals what zero parameters predict: the decoded init.
  for (int f = 0; f < g.cell_count(); ++f) {
    b.gt.indicator[f] = 1;
    b.gt.y[f] = g.sentinel_y();
    b.gt.h[f] = g.sentinel_h();
  }
  std::vector<double> grad;
  predictor_backward(p, b, grad);
  PredictorParams view = p;
  view.data = grad;
  CHECK(view.b2(0)[0] == doctest::Approx(0.0));
  CHECK(view.b2(0)[1] == doctest::Approx(0.0));
  // Sigma channels still receive the +1/sigma pull.
  CHECK(view.b2(0)[2] != doctest::Approx(0.0));
}

TEST_CASE("doubling the loss weights doubles the gradient") {
  GridSpec g = micro_grid(4);
  const PredictorParams p = PredictorParams::create(2, 5, 8, 4);
  TrainBatch b = random_batch(g, p, 19);
  std::vector<double> g1, g2;
  predictor_backward(p, b, g1);
  for (double& w : b.weights) w *= 2.0;
  predictor_backward(p, b, g2);
  REQUIRE(g1.size() == g2.size());
  for (size_t k = 0; k < g1.size(); ++k)
    CHECK(g2[k] == doctest::Approx(2.0 * g1[k]).epsilon(1e-9));
}

TEST_CASE("fit with zero learning rate leaves parameters unchanged") {
  GridSpec g = micro_grid(4);
  const PredictorParams p0 = PredictorParams::create(2, 5, 8, 4);
  BatchBuilder builder = [&](const PredictorParams& p, int) {
    return random_batch(g, p, 5);
  };
  FitConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 0.0;
  const FitResult r = fit(p0, 2, builder, cfg);
  CHECK(r.params.data == p0.data);
  CHECK(r.log.size() == 3);
}

TEST_CASE("fit reduces the loss on a fixed batch") {
  GridSpec g = micro_grid(4);
  const PredictorParams p0 = PredictorParams::create(2, 5, 12, 8);
  const TrainBatch fixed = random_batch(g, p0, 3);
  BatchBuilder builder = [&](const PredictorParams&, int) { return fixed; };
  FitConfig cfg;
  cfg.epochs = 60;
  cfg.lr = 0.05;
  const FitResult r = fit(p0, 1, builder, cfg);
  CHECK(r.log.back().total < r.log.front().total);
}

TEST_CASE("checkpoint-sized parameter flattening is consistent") {
  const PredictorParams p = PredictorParams::create(3, 32, 64, 1);
  const size_t per_layer = 64 * 37 + 64 + 5 * 64 + 5;
  CHECK(p.size() == 3 * per_layer);
  CHECK(p.layer_stride() == per_layer);
}
