#include "trafficguard/neuralnet.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

namespace trafficguard::nn {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using CVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

constexpr double kProbClamp = 1e-7;

// cols[(c*9 + ku*3 + kv), (i*W + j)] = in[c][i+ku-1][j+kv-1], zero outside.
void im2col(const double* in, int C, int H, int W, double* cols) {
  const int hw = H * W;
  for (int c = 0; c < C; ++c) {
    for (int ku = 0; ku < 3; ++ku) {
      for (int kv = 0; kv < 3; ++kv) {
        double* row = cols + static_cast<std::ptrdiff_t>((c * 9 + ku * 3 + kv)) * hw;
        for (int i = 0; i < H; ++i) {
          const int si = i + ku - 1;
          double* dst = row + i * W;
          if (si < 0 || si >= H) {
            std::fill(dst, dst + W, 0.0);
            continue;
          }
          const double* src = in + (static_cast<std::ptrdiff_t>(c) * H + si) * W;
          for (int j = 0; j < W; ++j) {
            const int sj = j + kv - 1;
            dst[j] = (sj >= 0 && sj < W) ? src[sj] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates into out (C, H, W), which must be zeroed.
void col2im(const double* cols, int C, int H, int W, double* out) {
  const int hw = H * W;
  for (int c = 0; c < C; ++c) {
    for (int ku = 0; ku < 3; ++ku) {
      for (int kv = 0; kv < 3; ++kv) {
        const double* row = cols + static_cast<std::ptrdiff_t>((c * 9 + ku * 3 + kv)) * hw;
        for (int i = 0; i < H; ++i) {
          const int si = i + ku - 1;
          if (si < 0 || si >= H) continue;
          double* dst = out + (static_cast<std::ptrdiff_t>(c) * H + si) * W;
          const double* src = row + i * W;
          for (int j = 0; j < W; ++j) {
            const int sj = j + kv - 1;
            if (sj >= 0 && sj < W) dst[sj] += src[j];
          }
        }
      }
    }
  }
}

void pool_forward(const double* in, int F, int H, int W, double* out, std::uint32_t* arg) {
  const int ho = H / 2, wo = W / 2;
  for (int f = 0; f < F; ++f) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        std::uint32_t best = static_cast<std::uint32_t>((f * H + 2 * i) * W + 2 * j);
        double bv = in[best];
        const std::uint32_t cand[3] = {best + 1, best + static_cast<std::uint32_t>(W),
                                       best + static_cast<std::uint32_t>(W) + 1};
        for (std::uint32_t c : cand) {
          if (in[c] > bv) {
            bv = in[c];
            best = c;
          }
        }
        const int o = (f * ho + i) * wo + j;
        out[o] = bv;
        arg[o] = best;
      }
    }
  }
}

struct Activations {
  AlignedBuffer cols1, a1, p1, cols2, a2, p2, h;
  std::vector<std::uint32_t> arg1, arg2;
  double p = 0.0;
};

struct Dims {
  int C, H, W, F1, F2, hidden, H2, W2, H4, W4, flat;
  explicit Dims(const CnnModel& m)
      : C(m.input.channels),
        H(m.input.rows),
        W(m.input.cols),
        F1(m.arch.conv1_filters),
        F2(m.arch.conv2_filters),
        hidden(m.arch.hidden),
        H2(H / 2),
        W2(W / 2),
        H4(H2 / 2),
        W4(W2 / 2),
        flat(F2 * H4 * W4) {}
};

void check_input(const CnnModel& model, const Tensor& input) {
  const auto& s = input.shape();
  if (s.size() != 3 || static_cast<int>(s[0]) != model.input.channels ||
      static_cast<int>(s[1]) != model.input.rows || static_cast<int>(s[2]) != model.input.cols) {
    throw DataError("input shape " + input.shape_string() + " does not match model input (" +
                    std::to_string(model.input.channels) + "x" + std::to_string(model.input.rows) +
                    "x" + std::to_string(model.input.cols) + ")");
  }
}

void forward_impl(const CnnModel& m, const Dims& d, const double* x, Activations& act) {
  const int hw = d.H * d.W, hw2 = d.H2 * d.W2;
  act.cols1.resize(static_cast<std::size_t>(d.C) * 9 * hw);
  act.a1.resize(static_cast<std::size_t>(d.F1) * hw);
  act.p1.resize(static_cast<std::size_t>(d.F1) * hw2);
  act.arg1.resize(act.p1.size());
  act.cols2.resize(static_cast<std::size_t>(d.F1) * 9 * hw2);
  act.a2.resize(static_cast<std::size_t>(d.F2) * hw2);
  act.p2.resize(static_cast<std::size_t>(d.flat));
  act.arg2.resize(act.p2.size());
  act.h.resize(static_cast<std::size_t>(d.hidden));

  im2col(x, d.C, d.H, d.W, act.cols1.data());
  MapR a1(act.a1.data(), d.F1, hw);
  a1.noalias() = CMapR(m.conv1_w.data(), d.F1, d.C * 9) * CMapR(act.cols1.data(), d.C * 9, hw);
  a1.colwise() += CVec(m.conv1_b.data(), d.F1);
  a1 = a1.cwiseMax(0.0);
  pool_forward(act.a1.data(), d.F1, d.H, d.W, act.p1.data(), act.arg1.data());

  im2col(act.p1.data(), d.F1, d.H2, d.W2, act.cols2.data());
  MapR a2(act.a2.data(), d.F2, hw2);
  a2.noalias() = CMapR(m.conv2_w.data(), d.F2, d.F1 * 9) * CMapR(act.cols2.data(), d.F1 * 9, hw2);
  a2.colwise() += CVec(m.conv2_b.data(), d.F2);
  a2 = a2.cwiseMax(0.0);
  pool_forward(act.a2.data(), d.F2, d.H2, d.W2, act.p2.data(), act.arg2.data());

  Vec h(act.h.data(), d.hidden);
  h.noalias() = CMapR(m.fc1_w.data(), d.hidden, d.flat) * CVec(act.p2.data(), d.flat);
  h += CVec(m.fc1_b.data(), d.hidden);
  h = h.cwiseMax(0.0);
  const double z = CVec(m.fc2_w.data(), d.hidden).dot(h) + m.fc2_b[0];
  act.p = sigmoid(z);
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

std::size_t flatten_dim(const InputShape& shape, const Architecture& arch) {
  return static_cast<std::size_t>(arch.conv2_filters) * static_cast<std::size_t>(shape.rows / 2 / 2) *
         static_cast<std::size_t>(shape.cols / 2 / 2);
}

std::vector<Tensor*> CnnModel::parameters() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
}

std::vector<const Tensor*> CnnModel::parameters() const {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
}

const std::vector<std::string>& CnnModel::parameter_names() {
  static const std::vector<std::string> kNames = {"conv1.weight", "conv1.bias", "conv2.weight",
                                                  "conv2.bias",   "fc1.weight", "fc1.bias",
                                                  "fc2.weight",   "fc2.bias"};
  return kNames;
}

std::size_t CnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += p->size();
  return n;
}

CnnModel make_model(const InputShape& shape, std::uint64_t seed, const Architecture& arch) {
  if (shape.channels < 1 || shape.rows < 4 || shape.cols < 4) {
    throw ConfigError("model input must be at least 1x4x4 so two 2x2 pools leave a cell");
  }
  if (arch.conv1_filters < 1 || arch.conv2_filters < 1 || arch.hidden < 1) {
    throw ConfigError("layer widths must be positive");
  }
  CnnModel m;
  m.input = shape;
  m.arch = arch;
  const auto F1 = static_cast<std::size_t>(arch.conv1_filters);
  const auto F2 = static_cast<std::size_t>(arch.conv2_filters);
  const auto H = static_cast<std::size_t>(arch.hidden);
  const auto C = static_cast<std::size_t>(shape.channels);
  m.conv1_w = Tensor({F1, C, 3, 3});
  m.conv1_b = Tensor({F1});
  m.conv2_w = Tensor({F2, F1, 3, 3});
  m.conv2_b = Tensor({F2});
  m.fc1_w = Tensor({H, m.flatten_dim()});
  m.fc1_b = Tensor({H});
  m.fc2_w = Tensor({1, H});
  m.fc2_b = Tensor({1});

  Rng rng = make_rng(seed, RngStream::kInit);
  auto init = [&](Tensor& w, Tensor& b, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
    for (double& v : b.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  };
  init(m.conv1_w, m.conv1_b, C * 9);
  init(m.conv2_w, m.conv2_b, F1 * 9);
  init(m.fc1_w, m.fc1_b, m.flatten_dim());
  init(m.fc2_w, m.fc2_b, H);
  return m;
}

// ---------------------------------------------------------------------------
// Layer primitives

Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& biases) {
  if (input.rank() != 3 || filters.rank() != 4 || biases.rank() != 1) {
    throw DataError("conv2d: expected input (C,H,W), filters (F,C,3,3), biases (F)");
  }
  const int C = static_cast<int>(input.dim(0)), H = static_cast<int>(input.dim(1)),
            W = static_cast<int>(input.dim(2)), F = static_cast<int>(filters.dim(0));
  if (static_cast<int>(filters.dim(1)) != C || filters.dim(2) != 3 || filters.dim(3) != 3 ||
      static_cast<int>(biases.dim(0)) != F) {
    throw DataError("conv2d: filter " + filters.shape_string() + " / bias " +
                    biases.shape_string() + " incompatible with input " + input.shape_string());
  }
  AlignedBuffer cols(static_cast<std::size_t>(C) * 9 * H * W);
  im2col(input.data(), C, H, W, cols.data());
  Tensor out({static_cast<std::size_t>(F), static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
  MapR o(out.data(), F, H * W);
  o.noalias() = CMapR(filters.data(), F, C * 9) * CMapR(cols.data(), C * 9, H * W);
  o.colwise() += CVec(biases.data(), F);
  return out;
}

PoolResult maxpool2(const Tensor& input) {
  if (input.rank() != 3) throw DataError("maxpool2: expected (F,H,W) input");
  const int F = static_cast<int>(input.dim(0)), H = static_cast<int>(input.dim(1)),
            W = static_cast<int>(input.dim(2));
  if (H < 2 || W < 2) throw DataError("maxpool2: spatial dims must be >= 2, got " + input.shape_string());
  PoolResult r;
  r.output = Tensor({static_cast<std::size_t>(F), static_cast<std::size_t>(H / 2),
                     static_cast<std::size_t>(W / 2)});
  r.argmax.resize(r.output.size());
  pool_forward(input.data(), F, H, W, r.output.data(), r.argmax.data());
  return r;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_loss(double p, int y) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return y == 1 ? -std::log(q) : -std::log(1.0 - q);
}

double bce_loss(std::span<const double> p, std::span<const int> y) {
  if (p.size() != y.size() || p.empty()) throw DataError("bce_loss: size mismatch or empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += bce_loss(p[i], y[i]);
  return s / static_cast<double>(p.size());
}

// ---------------------------------------------------------------------------
// Forward / backward

double forward(const CnnModel& model, const Tensor& input) {
  check_input(model, input);
  const Dims d(model);
  Activations act;
  forward_impl(model, d, input.data(), act);
  return act.p;
}

std::vector<double> predict(const CnnModel& model, std::span<const Tensor> inputs) {
  const Dims d(model);
  Activations act;
  std::vector<double> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    check_input(model, x);
    forward_impl(model, d, x.data(), act);
    out.push_back(act.p);
  }
  return out;
}

Gradients zero_gradients(const CnnModel& model) {
  Gradients g;
  for (const Tensor* p : model.parameters()) g.grads.emplace_back(p->shape());
  return g;
}

namespace {

struct BackwardScratch {
  AlignedBuffer dp2, da2, dcols2, dp1, da1;
};

void backward_one(const CnnModel& m, const Dims& d, const Activations& act, double dz,
                  Gradients& g, BackwardScratch& s) {
  const int hw = d.H * d.W, hw2 = d.H2 * d.W2;
  // fc2
  CVec h(act.h.data(), d.hidden);
  Vec(g.grads[6].data(), d.hidden) += dz * h;
  g.grads[7][0] += dz;
  Eigen::VectorXd dh = dz * CVec(m.fc2_w.data(), d.hidden);
  for (int k = 0; k < d.hidden; ++k) {
    if (act.h[k] <= 0.0) dh[k] = 0.0;
  }
  // fc1
  CVec flat(act.p2.data(), d.flat);
  MapR(g.grads[4].data(), d.hidden, d.flat).noalias() += dh * flat.transpose();
  Vec(g.grads[5].data(), d.hidden) += dh;
  s.dp2.resize(static_cast<std::size_t>(d.flat));
  Vec dflat(s.dp2.data(), d.flat);
  dflat.noalias() = CMapR(m.fc1_w.data(), d.hidden, d.flat).transpose() * dh;
  // pool2 + relu2
  s.da2.assign(static_cast<std::size_t>(d.F2) * hw2, 0.0);
  for (int k = 0; k < d.flat; ++k) s.da2[act.arg2[k]] += s.dp2[k];
  for (std::size_t k = 0; k < s.da2.size(); ++k) {
    if (act.a2[k] <= 0.0) s.da2[k] = 0.0;
  }
  // conv2
  CMapR da2(s.da2.data(), d.F2, hw2);
  MapR(g.grads[2].data(), d.F2, d.F1 * 9).noalias() +=
      da2 * CMapR(act.cols2.data(), d.F1 * 9, hw2).transpose();
  Vec(g.grads[3].data(), d.F2) += da2.rowwise().sum();
  s.dcols2.resize(static_cast<std::size_t>(d.F1) * 9 * hw2);
  MapR(s.dcols2.data(), d.F1 * 9, hw2).noalias() =
      CMapR(m.conv2_w.data(), d.F2, d.F1 * 9).transpose() * da2;
  s.dp1.assign(static_cast<std::size_t>(d.F1) * hw2, 0.0);
  col2im(s.dcols2.data(), d.F1, d.H2, d.W2, s.dp1.data());
  // pool1 + relu1
  s.da1.assign(static_cast<std::size_t>(d.F1) * hw, 0.0);
  for (std::size_t k = 0; k < s.dp1.size(); ++k) s.da1[act.arg1[k]] += s.dp1[k];
  for (std::size_t k = 0; k < s.da1.size(); ++k) {
    if (act.a1[k] <= 0.0) s.da1[k] = 0.0;
  }
  // conv1
  CMapR da1(s.da1.data(), d.F1, hw);
  MapR(g.grads[0].data(), d.F1, d.C * 9).noalias() +=
      da1 * CMapR(act.cols1.data(), d.C * 9, hw).transpose();
  Vec(g.grads[1].data(), d.F1) += da1.rowwise().sum();
}

}  // namespace

Gradients backward(const CnnModel& model, std::span<const Tensor> inputs,
                   std::span<const int> labels) {
  if (inputs.size() != labels.size() || inputs.empty()) {
    throw DataError("backward: inputs and labels must be non-empty and aligned");
  }
  const Dims d(model);
  Gradients g = zero_gradients(model);
  Activations act;
  BackwardScratch scratch;
  const double n = static_cast<double>(inputs.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    check_input(model, inputs[i]);
    forward_impl(model, d, inputs[i].data(), act);
    loss += bce_loss(act.p, labels[i]);
    backward_one(model, d, act, (act.p - static_cast<double>(labels[i])) / n, g, scratch);
  }
  g.loss = loss / n;
  return g;
}

// ---------------------------------------------------------------------------
// Adam

AdamState make_adam(const CnnModel& model, double lr) {
  AdamState s;
  s.lr = lr;
  for (const Tensor* p : model.parameters()) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DataError("adam_step: parameter, gradient and moment counts differ");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (p.shape() != g.shape() || p.shape() != state.m[k].shape()) {
      throw DataError("adam_step: shape mismatch in parameter " + std::to_string(k));
    }
    double* m = state.m[k].data();
    double* v = state.v[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void adam_step(CnnModel& model, const Gradients& grads, AdamState& state) {
  auto params = model.parameters();
  adam_step(std::span<Tensor* const>(params), std::span<const Tensor>(grads.grads), state);
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(CnnModel& model, const dataset::Dataset& data, const TrainOptions& options) {
  if (data.size() == 0) throw DataError("train: empty dataset");
  if (options.epochs < 1 || options.batch_size < 1) throw ConfigError("epochs and batch size must be >= 1");
  for (const auto& x : data.inputs) check_input(model, x);

  // Canonical order first, so the seeded shuffle alone decides batch order.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (data.labels[a] != data.labels[b]) return data.labels[a] < data.labels[b];
    const auto va = data.inputs[a].values();
    const auto vb = data.inputs[b].values();
    return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
  });

  AdamState adam = make_adam(model, options.lr);
  Rng rng = make_rng(options.seed, RngStream::kShuffle);
  const Dims d(model);
  Activations act;
  BackwardScratch scratch;
  TrainResult result;
  const std::size_t bs = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const double n = static_cast<double>(end - start);
      Gradients g = zero_gradients(model);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        forward_impl(model, d, data.inputs[i].data(), act);
        epoch_loss += bce_loss(act.p, data.labels[i]);
        backward_one(model, d, act, (act.p - static_cast<double>(data.labels[i])) / n, g, scratch);
      }
      adam_step(model, g, adam);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
    if (options.on_epoch) options.on_epoch(epoch, result.loss_history.back());
  }
  result.steps = adam.step;
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics c;
  c.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  c.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  c.f1 = c.precision + c.recall > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
  c.support = tp + fn;
  return c;
}

nlohmann::ordered_json class_json(const ClassMetrics& c) {
  return {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
}

}  // namespace

Metrics compute_metrics(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw DataError("metrics: size mismatch");
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool truly_hacked = labels[i] == dataset::kLabelHacked;
    const bool said_hacked = predictions[i] == dataset::kLabelHacked;
    if (truly_hacked && said_hacked) ++m.tp;
    else if (!truly_hacked && said_hacked) ++m.fp;
    else if (truly_hacked) ++m.fn;
    else ++m.tn;
  }
  const double n = static_cast<double>(m.total());
  m.accuracy = n > 0 ? static_cast<double>(m.tp + m.tn) / n : 0.0;
  m.hacked = class_metrics(m.tp, m.fp, m.fn);
  m.normal = class_metrics(m.tn, m.fn, m.fp);
  m.macro.precision = (m.hacked.precision + m.normal.precision) / 2.0;
  m.macro.recall = (m.hacked.recall + m.normal.recall) / 2.0;
  m.macro.f1 = (m.hacked.f1 + m.normal.f1) / 2.0;
  m.macro.support = m.total();
  if (n > 0) {
    const double wh = static_cast<double>(m.hacked.support) / n;
    const double wn = static_cast<double>(m.normal.support) / n;
    m.weighted.precision = wh * m.hacked.precision + wn * m.normal.precision;
    m.weighted.recall = wh * m.hacked.recall + wn * m.normal.recall;
    m.weighted.f1 = wh * m.hacked.f1 + wn * m.normal.f1;
  }
  m.weighted.support = m.total();
  return m;
}

Metrics evaluate(const CnnModel& model, const dataset::Dataset& data, double threshold) {
  if (data.size() == 0) throw DataError("evaluate: empty test set");
  const auto probs = predict(model, data.inputs);
  std::vector<int> preds(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    preds[i] = probs[i] >= threshold ? dataset::kLabelNormal : dataset::kLabelHacked;
  }
  return compute_metrics(data.labels, preds);
}

std::string Metrics::to_json() const {
  nlohmann::ordered_json j;
  j["confusion"] = {{"positive_class", "HACKED"}, {"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
  j["accuracy"] = accuracy;
  j["hacked_positive"] = class_json(hacked);
  j["normal_positive"] = class_json(normal);
  j["macro"] = class_json(macro);
  j["weighted"] = class_json(weighted);
  return j.dump(2) + "\n";
}

std::string metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(26) << "Configuration" << std::right << std::setw(14) << "Accuracy (%)"
     << std::setw(11) << "Precision" << std::setw(8) << "Recall" << std::setw(10) << "F1-Score"
     << "\n";
  os << std::fixed;
  for (const auto& [name, m] : rows) {
    auto line = [&](const std::string& label, const ClassMetrics& c, bool with_acc) {
      os << std::left << std::setw(26) << label << std::right << std::setw(14);
      if (with_acc) {
        os << std::setprecision(2) << m.accuracy * 100.0;
      } else {
        os << "";
      }
      os << std::setprecision(2) << std::setw(11) << c.precision << std::setw(8) << c.recall
         << std::setw(10) << c.f1 << "\n";
    };
    line(name, m.hacked, true);
    line("  normal-positive", m.normal, false);
    line("  weighted avg", m.weighted, false);
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

static_assert(std::endian::native == std::endian::little, "model files are little-endian");

constexpr char kModelMagic[8] = {'T', 'G', 'C', 'N', 'N', '0', '0', '1'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(b_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw DataError("model file is truncated");
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const CnnModel& model) {
  std::string out(kModelMagic, sizeof(kModelMagic));
  put<std::uint32_t>(out, kModelVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.input.channels));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.input.rows));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.input.cols));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.arch.conv1_filters));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.arch.conv2_filters));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.arch.hidden));
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Tensor* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->rank()));
    for (std::size_t dim : p->shape()) put<std::uint64_t>(out, dim);
  }
  for (const Tensor* p : params) {
    out.append(reinterpret_cast<const char*>(p->data()), p->size() * sizeof(double));
  }
  put_string(out, model.stats_digest);
  put_string(out, model.dataset_digest);
  out += sha256_hex(out);
  return out;
}

CnnModel deserialize(std::string_view bytes) {
  if (bytes.size() < sizeof(kModelMagic) + 64) throw DataError("model file is truncated");
  if (bytes.substr(0, sizeof(kModelMagic)) != std::string_view(kModelMagic, sizeof(kModelMagic))) {
    throw DataError("not a model file (bad magic)");
  }
  const auto body = bytes.substr(0, bytes.size() - 64);
  if (sha256_hex(body) != bytes.substr(bytes.size() - 64)) {
    throw DataError("model file checksum mismatch (corrupt or truncated)");
  }
  Reader r(body);
  for (std::size_t i = 0; i < sizeof(kModelMagic); ++i) r.get<char>();
  if (r.get<std::uint32_t>() != kModelVersion) throw DataError("unsupported model file version");
  InputShape shape;
  shape.channels = static_cast<int>(r.get<std::uint32_t>());
  shape.rows = static_cast<int>(r.get<std::uint32_t>());
  shape.cols = static_cast<int>(r.get<std::uint32_t>());
  Architecture arch;
  arch.conv1_filters = static_cast<int>(r.get<std::uint32_t>());
  arch.conv2_filters = static_cast<int>(r.get<std::uint32_t>());
  arch.hidden = static_cast<int>(r.get<std::uint32_t>());
  CnnModel m = make_model(shape, 0, arch);
  auto params = m.parameters();
  if (r.get<std::uint32_t>() != params.size()) throw DataError("model file has a wrong parameter count");
  for (Tensor* p : params) {
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> dims;
    for (std::uint32_t k = 0; k < rank; ++k) dims.push_back(r.get<std::uint64_t>());
    if (dims != p->shape()) throw DataError("model file shape table does not match its header");
  }
  for (Tensor* p : params) {
    r.need(p->size() * sizeof(double));
    for (double& v : p->values()) v = r.get<double>();
  }
  m.stats_digest = r.get_string();
  m.dataset_digest = r.get_string();
  return m;
}

void save_model(const CnnModel& model, const std::filesystem::path& path) {
  write_file(path, serialize(model));
}

CnnModel load_model(const std::filesystem::path& path) {
  try {
    return deserialize(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::optional<std::string> digest_warning(const CnnModel& model, std::string_view stats_digest) {
  if (model.stats_digest == stats_digest) return std::nullopt;
  return "model was trained under normalization " +
         (model.stats_digest.empty() ? std::string("<unknown>") : model.stats_digest.substr(0, 12)) +
         " but the data uses " + std::string(stats_digest.substr(0, 12));
}

}  // namespace trafficguard::nn
