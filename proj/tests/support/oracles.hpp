#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "trafficguard/neuralnet.hpp"
#include "trafficguard/tensor.hpp"

namespace oracle {

using trafficguard::Tensor;

// Direct 6-loop same-padded 3x3 convolution.
inline Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), F = w.dim(0);
  Tensor y({F, H, W});
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        double acc = b[f];
        for (std::size_t c = 0; c < C; ++c) {
          for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
              const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
              if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) || jj >= static_cast<long>(W)) continue;
              acc += w[((f * C + c) * 3 + static_cast<std::size_t>(di + 1)) * 3 + static_cast<std::size_t>(dj + 1)] *
                     x.at(c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
            }
          }
        }
        y.at(f, i, j) = acc;
      }
    }
  }
  return y;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Mean BCE from forward passes only.
inline double loss(const trafficguard::nn::CnnModel& m, const std::vector<Tensor>& xs, const std::vector<int>& ys) {
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double p = trafficguard::nn::forward(m, xs[i]);
    s -= ys[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return s / static_cast<double>(xs.size());
}

struct GradEntry {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheck {
  std::vector<double> max_rel_error;  // per parameter tensor
  std::vector<std::size_t> checked;   // entries checked per tensor
  std::vector<GradEntry> over;        // entries above the reporting threshold
  double worst() const { return *std::max_element(max_rel_error.begin(), max_rel_error.end()); }
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Central differences. Tensors with more than `max_entries` entries are
// checked on a seeded sample of that many entries.
inline GradCheck gradient_check(trafficguard::nn::CnnModel model, const std::vector<Tensor>& xs,
                                const std::vector<int>& ys, double h, std::size_t max_entries,
                                std::uint64_t seed, double report_above = 1e-4) {
  const auto analytic = trafficguard::nn::backward(model, xs, ys);
  GradCheck out;
  std::mt19937_64 rng(seed);
  const auto params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    std::vector<std::size_t> idx(t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries);
    }
    double worst = 0.0;
    for (std::size_t i : idx) {
      const double orig = t[i];
      t[i] = orig + h;
      const double up = loss(model, xs, ys);
      t[i] = orig - h;
      const double down = loss(model, xs, ys);
      t[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.grads[p][i];
      const double e = rel_error(a, numeric);
      worst = std::max(worst, e);
      if (e > report_above) out.over.push_back({p, i, a, numeric, e});
    }
    out.max_rel_error.push_back(worst);
    out.checked.push_back(idx.size());
  }
  return out;
}

// ReLU signs and max-pool winners of every layer for each input. Two
// parameter settings with equal patterns lie in the same linear region of
// the network, where the loss is smooth.
inline std::vector<std::uint32_t> activation_pattern(const trafficguard::nn::CnnModel& m,
                                                     const std::vector<Tensor>& xs) {
  using namespace trafficguard::nn;
  std::vector<std::uint32_t> pat;
  auto relu = [&](Tensor t) {
    for (double& v : t.values()) {
      pat.push_back(v > 0.0);
      v = v > 0.0 ? v : 0.0;
    }
    return t;
  };
  for (const Tensor& x : xs) {
    const PoolResult p1 = maxpool2(relu(conv2d(x, m.conv1_w, m.conv1_b)));
    pat.insert(pat.end(), p1.argmax.begin(), p1.argmax.end());
    const PoolResult p2 = maxpool2(relu(conv2d(p1.output, m.conv2_w, m.conv2_b)));
    pat.insert(pat.end(), p2.argmax.begin(), p2.argmax.end());
    const std::size_t H = m.fc1_b.size(), F = p2.output.size();
    for (std::size_t k = 0; k < H; ++k) {
      double z = m.fc1_b[k];
      for (std::size_t f = 0; f < F; ++f) z += m.fc1_w[k * F + f] * p2.output[f];
      pat.push_back(z > 0.0);
    }
  }
  return pat;
}

struct KinkDiagnosis {
  bool crosses = false;    // the +-h stencil leaves the linear region
  double one_sided = 0.0;  // difference on a side that stays inside
  double step = 0.0;       // step used for it
  bool side_found = false;
};

// Classifies one checked entry: does theta +- h change the activation
// pattern, and if so what does an in-region one-sided difference give.
// The step shrinks by 10x until one side stays in the region.
inline KinkDiagnosis diagnose_entry(trafficguard::nn::CnnModel model, const std::vector<Tensor>& xs,
                                    const std::vector<int>& ys, std::size_t tensor, std::size_t index,
                                    double h) {
  Tensor& t = *model.parameters()[tensor];
  const double orig = t[index];
  const auto base = activation_pattern(model, xs);
  const double l0 = loss(model, xs, ys);
  KinkDiagnosis d;
  for (double step = h; step >= h * 1e-4; step /= 10.0) {
    t[index] = orig + step;
    const bool up_same = activation_pattern(model, xs) == base;
    const double up = loss(model, xs, ys);
    t[index] = orig - step;
    const bool down_same = activation_pattern(model, xs) == base;
    const double down = loss(model, xs, ys);
    t[index] = orig;
    if (step == h) d.crosses = !(up_same && down_same);
    if (up_same || down_same) {
      d.one_sided = up_same ? (up - l0) / step : (l0 - down) / step;
      d.step = step;
      d.side_found = true;
      break;
    }
  }
  return d;
}

// Shapley values by the permutation-free subset formula.
inline std::vector<double> brute_force_shapley(const std::function<double(unsigned)>& v, int M) {
  std::vector<double> fact(static_cast<std::size_t>(M) + 1, 1.0);
  for (int i = 1; i <= M; ++i) fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i) - 1] * i;
  std::vector<double> phi(static_cast<std::size_t>(M), 0.0);
  for (int j = 0; j < M; ++j) {
    for (unsigned s = 0; s < (1u << M); ++s) {
      if (s & (1u << j)) continue;
      const int size = __builtin_popcount(s);
      const double w = fact[static_cast<std::size_t>(size)] * fact[static_cast<std::size_t>(M - size - 1)] /
                       fact[static_cast<std::size_t>(M)];
      phi[static_cast<std::size_t>(j)] += w * (v(s | (1u << j)) - v(s));
    }
  }
  return phi;
}

}  // namespace oracle
