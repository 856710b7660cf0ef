#include "heightbev/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace heightbev {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kLogSigmaClamp = 10.0;
constexpr double kProbFloor = 1e-12;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }
}  // namespace

EmbeddingGrid::EmbeddingGrid(int cx, int cz) : cells_x(cx), cells_z(cz) {
  if (cx <= 0 || cz <= 0)
    throw DataError("EmbeddingGrid: dimensions must be positive");
  data.assign(static_cast<size_t>(cx) * cz * kDim, 0.0);
}

size_t PredictorParams::layer_stride() const {
  const size_t in = input_dim();
  return static_cast<size_t>(hidden) * in + hidden +
         static_cast<size_t>(EmbeddingGrid::kDim) * hidden +
         EmbeddingGrid::kDim;
}

double* PredictorParams::w1(int l) { return data.data() + l * layer_stride(); }
double* PredictorParams::b1(int l) {
  return w1(l) + static_cast<size_t>(hidden) * input_dim();
}
double* PredictorParams::w2(int l) { return b1(l) + hidden; }
double* PredictorParams::b2(int l) {
  return w2(l) + static_cast<size_t>(EmbeddingGrid::kDim) * hidden;
}
const double* PredictorParams::w1(int l) const {
  return data.data() + l * layer_stride();
}
const double* PredictorParams::b1(int l) const {
  return w1(l) + static_cast<size_t>(hidden) * input_dim();
}
const double* PredictorParams::w2(int l) const { return b1(l) + hidden; }
const double* PredictorParams::b2(int l) const {
  return w2(l) + static_cast<size_t>(EmbeddingGrid::kDim) * hidden;
}

PredictorParams PredictorParams::zeros(int layers, int channels, int hidden) {
  if (layers < 1 || channels < 1 || hidden < 1)
    throw DataError("PredictorParams: sizes must be positive");
  if (hidden > 512)
    throw DataError("PredictorParams: hidden width above 512");
  PredictorParams p;
  p.layers = layers;
  p.channels = channels;
  p.hidden = hidden;
  p.data.assign(layers * p.layer_stride(), 0.0);
  return p;
}

PredictorParams PredictorParams::create(int layers, int channels, int hidden,
                                        std::uint64_t seed,
                                        double init_scale) {
  PredictorParams p = zeros(layers, channels, hidden);
  std::mt19937_64 rng(seed);
  const int in = p.input_dim();
  const double s1 = init_scale * std::sqrt(6.0 / (in + hidden));
  const double s2 =
      init_scale * std::sqrt(6.0 / (hidden + EmbeddingGrid::kDim));
  std::uniform_real_distribution<double> u1(-s1, s1);
  std::uniform_real_distribution<double> u2(-s2, s2);
  for (int l = 0; l < layers; ++l) {
    double* w1 = p.w1(l);
    for (int k = 0; k < hidden * in; ++k) w1[k] = u1(rng);
    double* w2 = p.w2(l);
    for (int k = 0; k < EmbeddingGrid::kDim * hidden; ++k) w2[k] = u2(rng);
    // biases stay 0 so the first forward pass is a small residual step
  }
  return p;
}

EmbeddingGrid init_embeddings(const GridSpec& g) {
  g.validate();
  EmbeddingGrid e(g.cells_x, g.cells_z);
  const int n = e.cell_count();
  for (int f = 0; f < n; ++f) {
    double* c = e.cell(f);
    c[0] = 0.5;
    c[1] = 1.0;
    c[2] = 0.0;
    c[3] = 0.0;
    c[4] = 0.0;
  }
  return e;
}

namespace {

// E_out = E_in + W2 tanh(W1 [E_in; Q] + b1) + b2 for one cell.
// When `a_store` is given the hidden activation is kept for backprop.
inline void layer_cell_forward(const PredictorParams& p, int layer,
                               const double* e_in, const float* q,
                               double* e_out, double* a_store) {
  const int in = p.input_dim();
  const int hidden = p.hidden;
  const double* w1 = p.w1(layer);
  const double* b1 = p.b1(layer);
  const double* w2 = p.w2(layer);
  const double* b2 = p.b2(layer);
  double a[512];  // hidden width is bounded well below this at desk scale
  for (int hidx = 0; hidx < hidden; ++hidx) {
    double z = b1[hidx];
    const double* row = w1 + static_cast<size_t>(hidx) * in;
    for (int k = 0; k < EmbeddingGrid::kDim; ++k) z += row[k] * e_in[k];
    for (int k = 0; k < in - EmbeddingGrid::kDim; ++k)
      z += row[EmbeddingGrid::kDim + k] * q[k];
    a[hidx] = std::tanh(z);
  }
  for (int o = 0; o < EmbeddingGrid::kDim; ++o) {
    double d = b2[o];
    const double* row = w2 + static_cast<size_t>(o) * hidden;
    for (int hidx = 0; hidx < hidden; ++hidx) d += row[hidx] * a[hidx];
    e_out[o] = e_in[o] + d;
  }
  if (a_store)
    for (int hidx = 0; hidx < hidden; ++hidx) a_store[hidx] = a[hidx];
}

void check_forward_shapes(const EmbeddingGrid& e, const BevQueryGrid& q,
                          const PredictorParams& p, int layer) {
  if (layer < 0 || layer >= p.layers)
    throw DataError("forward: layer index out of range");
  if (e.cells_x != q.cells_x || e.cells_z != q.cells_z)
    throw DataError("forward: embedding/query grid shape mismatch");
  if (q.channels != p.channels)
    throw DataError("forward: query channels do not match parameters");
  if (p.hidden > 512) throw DataError("forward: hidden width above 512");
}

}  // namespace

EmbeddingGrid forward(const EmbeddingGrid& e_prev, const BevQueryGrid& q,
                      const PredictorParams& params, int layer) {
  check_forward_shapes(e_prev, q, params, layer);
  EmbeddingGrid out(e_prev.cells_x, e_prev.cells_z);
  const int n = e_prev.cell_count();
#pragma omp parallel for schedule(static)
  for (int f = 0; f < n; ++f)
    layer_cell_forward(params, layer, e_prev.cell(f), q.cell(f), out.cell(f),
                       nullptr);
  return out;
}

DecodedGrid decode(const EmbeddingGrid& e, const GridSpec& g) {
  if (e.cells_x != g.cells_x || e.cells_z != g.cells_z)
    throw DataError("decode: grid shape mismatch");
  const double range = g.height_range();
  const int n = e.cell_count();
  DecodedGrid d;
  d.cells_x = e.cells_x;
  d.cells_z = e.cells_z;
  d.y.resize(n);
  d.h.resize(n);
  d.sigma_y.resize(n);
  d.sigma_h.resize(n);
  d.seg_prob.resize(n);
  for (int f = 0; f < n; ++f) {
    const double* c = e.cell(f);
    d.y[f] = g.y_min + clamp01(c[0]) * range;
    d.h[f] = clamp01(c[1]) * range;
    d.sigma_y[f] =
        std::exp(std::clamp(c[2], -kLogSigmaClamp, kLogSigmaClamp));
    d.sigma_h[f] =
        std::exp(std::clamp(c[3], -kLogSigmaClamp, kLogSigmaClamp));
    d.seg_prob[f] = sigmoid(c[4]);
  }
  return d;
}

double LossReport::y_mae_occupied(const HeightMap& gt) const {
  double sum = 0.0;
  int count = 0;
  for (size_t f = 0; f < y_residual.size(); ++f) {
    if (!gt.indicator[f]) continue;
    sum += std::abs(y_residual[f]);
    ++count;
  }
  return count ? sum / count : 0.0;
}

LossReport height_loss(const DecodedGrid& pred, const HeightMap& gt,
                       const std::vector<double>& weights) {
  const int n = gt.cell_count();
  if (static_cast<int>(pred.y.size()) != n ||
      static_cast<int>(weights.size()) != n)
    throw DataError("height_loss: grid mismatch");
  LossReport r;
  r.y_residual.assign(n, 0.0);
  r.h_residual.assign(n, 0.0);
  for (int f = 0; f < n; ++f) {
    const double w = weights[f];
    if (gt.indicator[f]) {
      const double ry = pred.y[f] - gt.y[f];
      const double rh = pred.h[f] - gt.h[f];
      r.y_residual[f] = ry;
      r.h_residual[f] = rh;
      r.y_term +=
          w * (kSqrt2 * std::abs(ry) / pred.sigma_y[f] +
               std::log(pred.sigma_y[f]));
      r.height_term +=
          w * (kSqrt2 * std::abs(rh) / pred.sigma_h[f] +
               std::log(pred.sigma_h[f]));
    } else {
      r.y_term += w / pred.sigma_y[f];
      r.height_term += w / pred.sigma_h[f];
    }
  }
  r.y_term /= n;
  r.height_term /= n;
  r.total = r.y_term + r.height_term;
  if (!std::isfinite(r.total)) throw NumericError("height_loss: non-finite");
  return r;
}

namespace {

double focal_cell(double logit, bool label, double gamma, double alpha) {
  const double p = sigmoid(logit);
  const double pt = label ? p : 1.0 - p;
  const double at = label ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) *
         std::log(std::max(pt, kProbFloor));
}

// d focal / d logit.
double focal_cell_grad(double logit, bool label, double gamma, double alpha) {
  const double p = sigmoid(logit);
  const double pt = label ? p : 1.0 - p;
  const double at = label ? alpha : 1.0 - alpha;
  const double pt_safe = std::max(pt, kProbFloor);
  const double log_pt = std::log(pt_safe);
  double d_pt = -at * std::pow(1.0 - pt, gamma) / pt_safe;
  if (gamma > 0.0)
    d_pt += at * gamma * std::pow(1.0 - pt, gamma - 1.0) * log_pt;
  const double dpt_dz = (label ? 1.0 : -1.0) * p * (1.0 - p);
  return d_pt * dpt_dz;
}

}  // namespace

double focal_loss(const std::vector<double>& logits,
                  const std::vector<std::uint8_t>& labels, double gamma,
                  double alpha) {
  if (logits.size() != labels.size())
    throw DataError("focal_loss: size mismatch");
  if (logits.empty()) return 0.0;
  double sum = 0.0;
  for (size_t f = 0; f < logits.size(); ++f)
    sum += focal_cell(logits[f], labels[f] != 0, gamma, alpha);
  return sum / logits.size();
}

namespace {

constexpr double kSegWeight = 0.5;
constexpr double kFocalGamma = 2.0;
// Occupied cells are a small minority of the grid; the training loss
// weights them up. The focal_loss entry point keeps the usual 0.25 default.
constexpr double kFocalAlpha = 0.75;
// Huber-style pull-back on y_norm/h_norm outside [0, 1]. The decode clamp
// has zero gradient out there; without a restoring force a cell that
// overshoots the range is stuck for good. Zero inside the range, bounded
// gradient outside so the recursion cannot amplify it.
constexpr double kRangePenalty = 4.0;

inline double range_excess(double e) {
  if (e < 0.0) return e;
  if (e > 1.0) return e - 1.0;
  return 0.0;
}

inline double range_penalty(double e) {
  const double x = std::abs(range_excess(e));
  return kRangePenalty * (x <= 1.0 ? x * x : 2.0 * x - 1.0);
}

inline double range_penalty_grad(double e) {
  const double x = range_excess(e);
  if (x > 1.0) return 2.0 * kRangePenalty;
  if (x < -1.0) return -2.0 * kRangePenalty;
  return 2.0 * kRangePenalty * x;
}

struct CellLossGrad {
  double de[EmbeddingGrid::kDim];
};

// Joint loss of one embedding grid plus its gradient w.r.t. the raw
// embedding channels. Shares every formula with decode/height_loss but is
// fused so the clamp masks are available for the chain rule.
LossReport loss_with_grad(const EmbeddingGrid& e, const GridSpec& g,
                          const HeightMap& gt,
                          const std::vector<double>& weights,
                          std::vector<CellLossGrad>* grads) {
  const int n = e.cell_count();
  const double range = g.height_range();
  LossReport r;
  r.y_residual.assign(n, 0.0);
  r.h_residual.assign(n, 0.0);
  if (grads) grads->assign(n, CellLossGrad{});
  double seg_sum = 0.0;
  for (int f = 0; f < n; ++f) {
    const double* c = e.cell(f);
    const double w = weights[f];
    const bool occupied = gt.indicator[f] != 0;
    const bool y_active = c[0] > 0.0 && c[0] < 1.0;
    const bool h_active = c[1] > 0.0 && c[1] < 1.0;
    const bool sy_active = std::abs(c[2]) < kLogSigmaClamp;
    const bool sh_active = std::abs(c[3]) < kLogSigmaClamp;
    const double y = g.y_min + clamp01(c[0]) * range;
    const double h = clamp01(c[1]) * range;
    const double sy =
        std::exp(std::clamp(c[2], -kLogSigmaClamp, kLogSigmaClamp));
    const double sh =
        std::exp(std::clamp(c[3], -kLogSigmaClamp, kLogSigmaClamp));

    r.y_term += w * range_penalty(c[0]);
    r.height_term += w * range_penalty(c[1]);

    double dy = 0.0, dh = 0.0, dsy = 0.0, dsh = 0.0;
    if (occupied) {
      const double ry = y - gt.y[f];
      const double rh = h - gt.h[f];
      r.y_residual[f] = ry;
      r.h_residual[f] = rh;
      r.y_term += w * (kSqrt2 * std::abs(ry) / sy + std::log(sy));
      r.height_term += w * (kSqrt2 * std::abs(rh) / sh + std::log(sh));
      const double sgn_y = ry > 0.0 ? 1.0 : (ry < 0.0 ? -1.0 : 0.0);
      const double sgn_h = rh > 0.0 ? 1.0 : (rh < 0.0 ? -1.0 : 0.0);
      dy = w * kSqrt2 * sgn_y / sy;
      dh = w * kSqrt2 * sgn_h / sh;
      dsy = w * (-kSqrt2 * std::abs(ry) / (sy * sy) + 1.0 / sy);
      dsh = w * (-kSqrt2 * std::abs(rh) / (sh * sh) + 1.0 / sh);
    } else {
      r.y_term += w / sy;
      r.height_term += w / sh;
      dsy = -w / (sy * sy);
      dsh = -w / (sh * sh);
    }
    // Centerness also weights the segmentation term, so the whole loss is
    // linear in the weights.
    seg_sum += w * focal_cell(c[4], occupied, kFocalGamma, kFocalAlpha);

    if (grads) {
      CellLossGrad& gc = (*grads)[f];
      gc.de[0] = ((y_active ? dy * range : 0.0) +
                  w * range_penalty_grad(c[0])) / n;
      gc.de[1] = ((h_active ? dh * range : 0.0) +
                  w * range_penalty_grad(c[1])) / n;
      gc.de[2] = (sy_active ? dsy * sy : 0.0) / n;
      gc.de[3] = (sh_active ? dsh * sh : 0.0) / n;
      gc.de[4] = kSegWeight * w *
                 focal_cell_grad(c[4], occupied, kFocalGamma, kFocalAlpha) / n;
    }
  }
  r.y_term /= n;
  r.height_term /= n;
  r.seg_term = seg_sum / n;
  r.total = r.y_term + r.height_term + kSegWeight * r.seg_term;
  if (!std::isfinite(r.total))
    throw NumericError("pipeline loss is non-finite");
  return r;
}

void check_batch(const PredictorParams& p, const TrainBatch& b) {
  if (static_cast<int>(b.queries.size()) != p.layers)
    throw DataError("batch: one query grid per layer required");
  if (!b.grid.same_layout(b.gt.grid)) throw DataError("batch: grid mismatch");
  if (static_cast<int>(b.weights.size()) != b.grid.cell_count())
    throw DataError("batch: weight grid mismatch");
  for (const auto& q : b.queries)
    if (q.cells_x != b.grid.cells_x || q.cells_z != b.grid.cells_z ||
        q.channels != p.channels)
      throw DataError("batch: query grid shape mismatch");
}

struct Trace {
  std::vector<EmbeddingGrid> embeddings;       // E_0 .. E_L
  std::vector<std::vector<double>> hidden;     // per layer: cells * hidden
};

LossReport run_pipeline(const PredictorParams& p, const TrainBatch& b,
                        Trace* trace, std::vector<CellLossGrad>* final_grads,
                        std::vector<std::vector<CellLossGrad>>* all_grads) {
  check_batch(p, b);
  EmbeddingGrid e = init_embeddings(b.grid);
  const int n = e.cell_count();
  if (trace) trace->embeddings.push_back(e);
  LossReport report;
  double total = 0.0, y_term = 0.0, height_term = 0.0, seg_term = 0.0;
  for (int l = 0; l < p.layers; ++l) {
    EmbeddingGrid next(e.cells_x, e.cells_z);
    std::vector<double>* astore = nullptr;
    if (trace) {
      trace->hidden.emplace_back(static_cast<size_t>(n) * p.hidden);
      astore = &trace->hidden.back();
    }
    const BevQueryGrid& q = b.queries[l];
#pragma omp parallel for schedule(static)
    for (int f = 0; f < n; ++f)
      layer_cell_forward(p, l, e.cell(f), q.cell(f), next.cell(f),
                         astore ? astore->data() + static_cast<size_t>(f) *
                                                       p.hidden
                                : nullptr);
    e = std::move(next);
    if (trace) trace->embeddings.push_back(e);
    const bool last = (l == p.layers - 1);
    if (b.supervise_all_layers || last) {
      std::vector<CellLossGrad>* gslot = nullptr;
      if (all_grads) {
        all_grads->emplace_back();
        gslot = &all_grads->back();
      } else if (last && final_grads) {
        gslot = final_grads;
      }
      LossReport lr = loss_with_grad(e, b.grid, b.gt, b.weights, gslot);
      if (b.supervise_all_layers) {
        total += lr.total / p.layers;
        y_term += lr.y_term / p.layers;
        height_term += lr.height_term / p.layers;
        seg_term += lr.seg_term / p.layers;
        if (last) {
          report.y_residual = std::move(lr.y_residual);
          report.h_residual = std::move(lr.h_residual);
        }
      } else {
        total = lr.total;
        y_term = lr.y_term;
        height_term = lr.height_term;
        seg_term = lr.seg_term;
        report.y_residual = std::move(lr.y_residual);
        report.h_residual = std::move(lr.h_residual);
      }
    }
  }
  report.total = total;
  report.y_term = y_term;
  report.height_term = height_term;
  report.seg_term = seg_term;
  return report;
}

}  // namespace

LossReport pipeline_loss(const PredictorParams& params, const TrainBatch& b) {
  return run_pipeline(params, b, nullptr, nullptr, nullptr);
}

LossReport predictor_backward(const PredictorParams& params,
                              const TrainBatch& b, std::vector<double>& grad) {
  Trace trace;
  std::vector<CellLossGrad> final_grads;
  std::vector<std::vector<CellLossGrad>> all_grads;
  LossReport report =
      run_pipeline(params, b, &trace, &final_grads,
                   b.supervise_all_layers ? &all_grads : nullptr);

  grad.assign(params.size(), 0.0);
  PredictorParams gview = params;  // reuse offsets; data replaced below
  gview.data.assign(params.size(), 0.0);

  const int n = b.grid.cell_count();
  const int hidden = params.hidden;
  const int in = params.input_dim();
  constexpr int kD = EmbeddingGrid::kDim;

  // dE carries dLoss/dE_l while walking layers backwards.
  std::vector<double> de(static_cast<size_t>(n) * kD, 0.0);
  auto add_loss_grad = [&](const std::vector<CellLossGrad>& g, double scale) {
    for (int f = 0; f < n; ++f)
      for (int k = 0; k < kD; ++k) de[f * kD + k] += scale * g[f].de[k];
  };
  if (b.supervise_all_layers)
    add_loss_grad(all_grads.back(), 1.0 / params.layers);
  else
    add_loss_grad(final_grads, 1.0);

  std::vector<double> de_prev(static_cast<size_t>(n) * kD);
  for (int l = params.layers - 1; l >= 0; --l) {
    double* gw1 = gview.w1(l);
    double* gb1 = gview.b1(l);
    double* gw2 = gview.w2(l);
    double* gb2 = gview.b2(l);
    const double* w1 = params.w1(l);
    const double* w2 = params.w2(l);
    const EmbeddingGrid& e_in = trace.embeddings[l];
    const std::vector<double>& acts = trace.hidden[l];
    const BevQueryGrid& q = b.queries[l];
    std::fill(de_prev.begin(), de_prev.end(), 0.0);
    std::vector<double> dz(hidden);
    for (int f = 0; f < n; ++f) {
      const double* dd = de.data() + static_cast<size_t>(f) * kD;
      const double* a = acts.data() + static_cast<size_t>(f) * hidden;
      const double* ein = e_in.cell(f);
      const float* qf = q.cell(f);
      // output layer
      for (int o = 0; o < kD; ++o) {
        gb2[o] += dd[o];
        double* row = gw2 + static_cast<size_t>(o) * hidden;
        for (int hidx = 0; hidx < hidden; ++hidx)
          row[hidx] += dd[o] * a[hidx];
      }
      // hidden layer
      for (int hidx = 0; hidx < hidden; ++hidx) {
        double da = 0.0;
        for (int o = 0; o < kD; ++o)
          da += w2[static_cast<size_t>(o) * hidden + hidx] * dd[o];
        dz[hidx] = da * (1.0 - a[hidx] * a[hidx]);
      }
      double* dprev = de_prev.data() + static_cast<size_t>(f) * kD;
      for (int hidx = 0; hidx < hidden; ++hidx) {
        const double dzh = dz[hidx];
        if (dzh == 0.0) continue;
        gb1[hidx] += dzh;
        double* row = gw1 + static_cast<size_t>(hidx) * in;
        const double* wrow = w1 + static_cast<size_t>(hidx) * in;
        for (int k = 0; k < kD; ++k) {
          row[k] += dzh * ein[k];
          dprev[k] += dzh * wrow[k];
        }
        for (int k = 0; k < in - kD; ++k) row[kD + k] += dzh * qf[k];
      }
      // residual path
      for (int k = 0; k < kD; ++k) dprev[k] += dd[k];
    }
    de.swap(de_prev);
    if (b.supervise_all_layers && l > 0)
      add_loss_grad(all_grads[l - 1], 1.0 / params.layers);
  }

  grad = std::move(gview.data);
  for (double v : grad)
    if (!std::isfinite(v))
      throw NumericError("predictor_backward: non-finite gradient");
  return report;
}

double grad_check(const PredictorParams& params, const TrainBatch& b,
                  double step) {
  std::vector<double> analytic;
  predictor_backward(params, b, analytic);
  PredictorParams probe = params;
  double worst = 0.0;
  for (size_t k = 0; k < probe.size(); ++k) {
    const double saved = probe.data[k];
    probe.data[k] = saved + step;
    const double up = pipeline_loss(probe, b).total;
    probe.data[k] = saved - step;
    const double down = pipeline_loss(probe, b).total;
    probe.data[k] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom =
        std::max({std::abs(analytic[k]), std::abs(numeric), 1e-3});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

FitResult fit(PredictorParams initial, int n_scenes,
              const BatchBuilder& builder, const FitConfig& config) {
  if (n_scenes < 1) throw DataError("fit: at least one scene required");
  FitResult result;
  result.params = std::move(initial);
  std::vector<double> velocity(result.params.size(), 0.0);
  std::vector<double> grad;
  std::vector<double> accum(result.params.size(), 0.0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    double mae_sum = 0.0;
    const double frac =
        config.epochs > 1 ? static_cast<double>(epoch) / (config.epochs - 1)
                          : 0.0;
    const double lr = config.lr * (1.0 - config.lr_decay * frac);
    int pending = 0;
    auto flush = [&] {
      if (pending == 0) return;
      for (size_t k = 0; k < accum.size(); ++k) {
        velocity[k] = config.momentum * velocity[k] + accum[k] / pending;
        result.params.data[k] -= lr * velocity[k];
        accum[k] = 0.0;
      }
      pending = 0;
    };
    for (int s = 0; s < n_scenes; ++s) {
      TrainBatch batch = builder(result.params, s);
      batch.supervise_all_layers = config.supervise_all_layers;
      LossReport r = predictor_backward(result.params, batch, grad);
      if (!std::isfinite(r.total))
        throw NumericError("fit: loss diverged");
      for (size_t k = 0; k < grad.size(); ++k) accum[k] += grad[k];
      if (++pending >= config.batch_scenes) flush();
      log.total += r.total;
      log.height_term += r.height_term;
      log.y_term += r.y_term;
      log.seg_term += r.seg_term;
      mae_sum += r.y_mae_occupied(batch.gt);
    }
    flush();
    log.total /= n_scenes;
    log.height_term /= n_scenes;
    log.y_term /= n_scenes;
    log.seg_term /= n_scenes;
    log.y_mae_occupied = mae_sum / n_scenes;
    result.log.push_back(log);
  }
  return result;
}

}  // namespace heightbev
