#include "trafficguard/xai.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "text_util.hpp"
#include "trafficguard/simnet.hpp"

namespace trafficguard::xai {

ModelFn wrap(const nn::CnnModel& model) {
  return [&model](const Tensor& x) { return nn::forward(model, x); };
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kOcclusion: return "OCCLUSION";
    case Method::kLime: return "LIME";
    case Method::kShap: return "SHAP";
  }
  return "?";
}

std::string_view granularity_name(Granularity g) {
  switch (g) {
    case Granularity::kCell: return "CELL";
    case Granularity::kColumn: return "COLUMN";
    case Granularity::kFlatFeature: return "FLAT_FEATURE";
  }
  return "?";
}

std::string_view baseline_policy_name(BaselinePolicy p) {
  return p == BaselinePolicy::kZero ? "ZERO" : "CONTROL_MEAN";
}

BaselinePolicy parse_baseline_policy(std::string_view name) {
  if (name == "ZERO" || name == "zero") return BaselinePolicy::kZero;
  if (name == "CONTROL_MEAN" || name == "control_mean") return BaselinePolicy::kControlMean;
  throw ConfigError("unknown baseline policy '" + std::string(name) + "'");
}

std::vector<std::size_t> Attribution::ranked() const {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(scores[a]) > std::abs(scores[b]);
  });
  return idx;
}

namespace {

std::string column_name(std::size_t j, std::size_t cols) {
  if (cols == static_cast<std::size_t>(simnet::kFeatureCount)) return simnet::feature_names()[j];
  return "col" + std::to_string(j);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DataError(std::string(what) + ": baseline shape " + b.shape_string() +
                    " differs from input " + a.shape_string());
  }
}

void require_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw DataError(std::string(what) + ": expected a (C, R, W) input");
}

}  // namespace

std::string index_name(const Attribution& a, std::size_t i, const std::vector<std::size_t>& input_shape) {
  const std::size_t cols = input_shape.empty() ? 0 : input_shape.back();
  const std::size_t rows = input_shape.size() >= 2 ? input_shape[input_shape.size() - 2] : 1;
  switch (a.granularity) {
    case Granularity::kColumn:
      return column_name(i, cols);
    case Granularity::kCell:
      return "r" + std::to_string(i / cols) + ":" + column_name(i % cols, cols);
    case Granularity::kFlatFeature: {
      const std::size_t c = i / (rows * cols);
      const std::size_t r = (i / cols) % rows;
      std::string prefix = input_shape.size() == 3 && input_shape[0] > 1 ? "c" + std::to_string(c) + ":" : "";
      return prefix + "r" + std::to_string(r) + ":" + column_name(i % cols, cols);
    }
  }
  return std::to_string(i);
}

std::string to_json(const Attribution& a, const std::vector<std::size_t>& input_shape, std::size_t limit) {
  nlohmann::ordered_json j;
  j["method"] = method_name(a.method);
  j["granularity"] = granularity_name(a.granularity);
  j["prediction"] = a.prediction;
  j["base_value"] = a.base_value;
  j["metadata"] = {{"n_samples", a.meta.n_samples},
                   {"kernel_width", a.meta.kernel_width},
                   {"seed", a.meta.seed},
                   {"baseline_policy", a.meta.baseline_policy},
                   {"exact", a.meta.exact},
                   {"r2", a.meta.r2},
                   {"warnings", a.meta.warnings}};
  auto order = a.top.empty() ? a.ranked() : a.top;
  if (limit > 0 && order.size() > limit) order.resize(limit);
  auto& list = j["attributions"] = nlohmann::ordered_json::array();
  for (std::size_t i : order) {
    list.push_back({{"feature", index_name(a, i, input_shape)},
                    {"index", i},
                    {"score", a.scores[i]},
                    {"direction", a.scores[i] > 0 ? "NORMAL" : (a.scores[i] < 0 ? "HACKED" : "NONE")}});
  }
  return j.dump(2) + "\n";
}

std::string heatmap_csv(const Attribution& a) {
  if (a.shape.size() != 2) throw DataError("heatmap_csv: attribution is not a cell grid");
  const std::size_t rows = a.shape[0], cols = a.shape[1];
  std::string out = "row";
  for (std::size_t j = 0; j < cols; ++j) out += "," + column_name(j, cols);
  out += '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    out += std::to_string(i);
    for (std::size_t j = 0; j < cols; ++j) out += "," + detail::format_double(a.scores[i * cols + j]);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Occlusion

Attribution occlusion_map(const ModelFn& model, const Tensor& input, const OcclusionOptions& options,
                          const Tensor* control_baseline) {
  require_rank3(input, "occlusion_map");
  const int C = static_cast<int>(input.dim(0)), R = static_cast<int>(input.dim(1)),
            W = static_cast<int>(input.dim(2));
  if (options.patch_h < 1 || options.patch_w < 1 || options.stride < 1) {
    throw ConfigError("occlusion patch and stride must be >= 1");
  }
  if (options.patch_h > R || options.patch_w > W) {
    throw ConfigError("occlusion patch is larger than the input");
  }
  Tensor baseline(input.shape(), 0.0);
  if (options.policy == BaselinePolicy::kControlMean) {
    if (!control_baseline) throw ConfigError("CONTROL_MEAN occlusion needs a control baseline");
    require_same_shape(input, *control_baseline, "occlusion_map");
    baseline = *control_baseline;
  }

  Attribution a;
  a.method = Method::kOcclusion;
  a.granularity = Granularity::kCell;
  a.shape = {static_cast<std::size_t>(R), static_cast<std::size_t>(W)};
  a.scores.assign(static_cast<std::size_t>(R) * W, 0.0);
  a.prediction = model(input);
  a.meta.baseline_policy = std::string(baseline_policy_name(options.policy));

  Tensor occluded = input;
  std::size_t evaluations = 0;
  for (int i0 = 0; i0 + options.patch_h <= R; i0 += options.stride) {
    for (int j0 = 0; j0 + options.patch_w <= W; j0 += options.stride) {
      for (int c = 0; c < C; ++c) {
        for (int i = i0; i < i0 + options.patch_h; ++i) {
          for (int j = j0; j < j0 + options.patch_w; ++j) occluded.at(c, i, j) = baseline.at(c, i, j);
        }
      }
      const double dp = std::abs(a.prediction - model(occluded));
      ++evaluations;
      for (int i = i0; i < i0 + options.patch_h; ++i) {
        for (int j = j0; j < j0 + options.patch_w; ++j) {
          double& s = a.scores[static_cast<std::size_t>(i) * W + j];
          s = std::max(s, dp);
        }
      }
      for (int c = 0; c < C; ++c) {
        for (int i = i0; i < i0 + options.patch_h; ++i) {
          for (int j = j0; j < j0 + options.patch_w; ++j) occluded.at(c, i, j) = input.at(c, i, j);
        }
      }
    }
  }
  a.meta.n_samples = evaluations;
  return a;
}

// ---------------------------------------------------------------------------
// LIME

Attribution lime_explain(const ModelFn& model, const Tensor& input, const LimeOptions& options,
                         const Tensor* baseline) {
  if (options.n_samples < 50) throw ConfigError("LIME needs at least 50 samples");
  if (options.ridge < 0.0) throw ConfigError("ridge penalty must be >= 0");
  Tensor base(input.shape(), 0.0);
  if (baseline) {
    require_same_shape(input, *baseline, "lime_explain");
    base = *baseline;
  }
  const auto M = static_cast<Eigen::Index>(input.size());
  const auto n = static_cast<Eigen::Index>(options.n_samples);
  const double sigma = options.kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(M)));
  if (!(sigma > 0.0)) throw ConfigError("LIME kernel width must be > 0");

  Rng rng = make_rng(options.seed, RngStream::kLime);
  Eigen::MatrixXd X(n, M + 1);
  Eigen::VectorXd y(n), w(n);
  Tensor perturbed = input;
  for (Eigen::Index s = 0; s < n; ++s) {
    X(s, 0) = 1.0;
    int masked = 0;
    for (Eigen::Index k = 0; k < M; ++k) {
      // The first sample is the unperturbed input.
      const bool keep = s == 0 || uniform01(rng) < 0.5;
      X(s, k + 1) = keep ? 1.0 : 0.0;
      perturbed[static_cast<std::size_t>(k)] = keep ? input[static_cast<std::size_t>(k)] : base[static_cast<std::size_t>(k)];
      masked += keep ? 0 : 1;
    }
    y[s] = model(perturbed);
    w[s] = std::exp(-static_cast<double>(masked) / (sigma * sigma));
  }

  Attribution a;
  a.method = Method::kLime;
  a.granularity = Granularity::kFlatFeature;
  a.shape = {static_cast<std::size_t>(M)};
  a.scores.assign(static_cast<std::size_t>(M), 0.0);
  a.prediction = y[0];
  a.meta.n_samples = static_cast<std::size_t>(n);
  a.meta.kernel_width = sigma;
  a.meta.seed = options.seed;
  a.meta.baseline_policy = baseline ? "PROVIDED" : "ZERO";

  if (y.maxCoeff() - y.minCoeff() < 1e-15) {
    a.meta.warnings.push_back("model output constant over the neighbourhood; attribution is zero");
    a.base_value = y[0];
    a.meta.r2 = 0.0;
  } else {
    const Eigen::MatrixXd Xw = X.array().colwise() * w.array();
    Eigen::MatrixXd A = X.transpose() * Xw;
    for (Eigen::Index k = 1; k <= M; ++k) A(k, k) += options.ridge;
    const Eigen::VectorXd b = Xw.transpose() * y;
    const Eigen::VectorXd beta = A.ldlt().solve(b);
    a.base_value = beta[0];
    for (Eigen::Index k = 0; k < M; ++k) a.scores[static_cast<std::size_t>(k)] = beta[k + 1];

    const Eigen::VectorXd fitted = X * beta;
    const double wsum = w.sum();
    const double ybar = w.dot(y) / wsum;
    const double ss_res = (w.array() * (y - fitted).array().square()).sum();
    const double ss_tot = (w.array() * (y.array() - ybar).square()).sum();
    a.meta.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  }

  auto order = a.ranked();
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(options.top_k, 0)), order.size());
  a.top.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  return a;
}

// ---------------------------------------------------------------------------
// KernelSHAP

double shapley_kernel_weight(int players, int size) {
  if (size <= 0 || size >= players) throw std::invalid_argument("kernel weight needs 0 < |S| < M");
  // C(M, s) in floating point; M is at most a few dozen.
  double binom = 1.0;
  for (int i = 1; i <= size; ++i) binom *= static_cast<double>(players - size + i) / i;
  return static_cast<double>(players - 1) / (binom * size * (players - size));
}

namespace {

struct CoalitionSet {
  std::vector<std::vector<std::uint8_t>> z;
  std::vector<double> weight;
};

CoalitionSet enumerate_all(int M) {
  CoalitionSet cs;
  const std::uint64_t total = std::uint64_t{1} << M;
  for (std::uint64_t mask = 1; mask + 1 < total; ++mask) {
    std::vector<std::uint8_t> z(static_cast<std::size_t>(M));
    int size = 0;
    for (int j = 0; j < M; ++j) {
      z[j] = (mask >> j) & 1U;
      size += z[j];
    }
    cs.z.push_back(std::move(z));
    cs.weight.push_back(shapley_kernel_weight(M, size));
  }
  return cs;
}

CoalitionSet sample_coalitions(int M, int budget, Rng& rng) {
  CoalitionSet cs;
  const double w1 = shapley_kernel_weight(M, 1);
  for (int j = 0; j < M; ++j) {
    std::vector<std::uint8_t> one(static_cast<std::size_t>(M), 0), all_but(static_cast<std::size_t>(M), 1);
    one[j] = 1;
    all_but[j] = 0;
    cs.z.push_back(std::move(one));
    cs.weight.push_back(w1);
    cs.z.push_back(std::move(all_but));
    cs.weight.push_back(w1);
  }
  const int remaining = budget - 2 * M;
  if (M < 4 || remaining < 2) return cs;

  // Size distribution proportional to the total kernel mass of each size.
  std::vector<double> mass;
  double total_mass = 0.0;
  for (int s = 2; s <= M - 2; ++s) {
    mass.push_back(static_cast<double>(M - 1) / (static_cast<double>(s) * (M - s)));
    total_mass += mass.back();
  }
  const int pairs = remaining / 2;
  const double each = total_mass / (2.0 * pairs);
  std::vector<int> players(static_cast<std::size_t>(M));
  for (int p = 0; p < pairs; ++p) {
    double u = uniform01(rng) * total_mass;
    int s = 2;
    for (std::size_t k = 0; k < mass.size(); ++k) {
      if (u < mass[k] || k + 1 == mass.size()) {
        s = static_cast<int>(k) + 2;
        break;
      }
      u -= mass[k];
    }
    std::iota(players.begin(), players.end(), 0);
    std::vector<std::uint8_t> z(static_cast<std::size_t>(M), 0);
    for (int k = 0; k < s; ++k) {
      const std::size_t pick = static_cast<std::size_t>(k) + uniform_index(rng, static_cast<std::size_t>(M - k));
      std::swap(players[static_cast<std::size_t>(k)], players[pick]);
      z[static_cast<std::size_t>(players[static_cast<std::size_t>(k)])] = 1;
    }
    std::vector<std::uint8_t> complement(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) complement[j] = 1 - z[j];
    cs.z.push_back(std::move(z));
    cs.weight.push_back(each);
    cs.z.push_back(std::move(complement));
    cs.weight.push_back(each);
  }
  return cs;
}

// Returns false when the reduced system is rank deficient.
bool solve_constrained(const CoalitionSet& cs, const std::vector<double>& values, int M, double base,
                       double delta, std::vector<double>& phi) {
  const auto n = static_cast<Eigen::Index>(cs.z.size());
  const Eigen::Index k = M - 1;
  Eigen::MatrixXd X(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto& z = cs.z[static_cast<std::size_t>(s)];
    const double sw = std::sqrt(cs.weight[static_cast<std::size_t>(s)]);
    const double last = z[static_cast<std::size_t>(M - 1)];
    for (Eigen::Index j = 0; j < k; ++j) X(s, j) = sw * (z[static_cast<std::size_t>(j)] - last);
    y[s] = sw * (values[static_cast<std::size_t>(s)] - base - last * delta);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) return false;
  const Eigen::VectorXd sol = qr.solve(y);
  phi.assign(static_cast<std::size_t>(M), 0.0);
  double partial = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    phi[static_cast<std::size_t>(j)] = sol[j];
    partial += sol[j];
  }
  phi[static_cast<std::size_t>(M - 1)] = delta - partial;
  return true;
}

}  // namespace

ShapValues kernel_shap_values(const CoalitionFn& value, int players, const ShapOptions& options) {
  if (players < 1) throw ConfigError("KernelSHAP needs at least one player");
  if (players > 62) throw ConfigError("KernelSHAP supports at most 62 players");
  const int M = players;
  ShapValues out;
  out.base_value = value(std::vector<std::uint8_t>(static_cast<std::size_t>(M), 0));
  out.full_value = value(std::vector<std::uint8_t>(static_cast<std::size_t>(M), 1));
  out.evaluations = 2;
  const double delta = out.full_value - out.base_value;
  if (M == 1) {
    out.phi = {delta};
    out.exact = true;
    return out;
  }

  out.exact = M <= options.exact_threshold;
  Rng rng = make_rng(options.seed, RngStream::kShap);
  constexpr int kAttempts = 5;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const CoalitionSet cs = out.exact ? enumerate_all(M)
                                      : sample_coalitions(M, std::max(options.n_coalitions, 2 * M), rng);
    std::vector<double> values;
    values.reserve(cs.z.size());
    for (const auto& z : cs.z) values.push_back(value(z));
    out.evaluations += cs.z.size();
    if (solve_constrained(cs, values, M, out.base_value, delta, out.phi)) return out;
    if (out.exact) break;
    out.warnings.push_back("singular coalition system; re-sampling");
  }
  throw DataError("KernelSHAP: coalition system remained singular");
}

Attribution kernel_shap(const ModelFn& model, const Tensor& input, const Tensor& baseline,
                        const ShapOptions& options) {
  require_rank3(input, "kernel_shap");
  require_same_shape(input, baseline, "kernel_shap");
  const std::size_t C = input.dim(0), R = input.dim(1), W = input.dim(2);
  Tensor masked = input;
  auto value = [&](const std::vector<std::uint8_t>& z) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < R; ++i) {
        for (std::size_t j = 0; j < W; ++j) masked.at(c, i, j) = z[j] ? input.at(c, i, j) : baseline.at(c, i, j);
      }
    }
    return model(masked);
  };
  const ShapValues sv = kernel_shap_values(value, static_cast<int>(W), options);
  Attribution a;
  a.method = Method::kShap;
  a.granularity = Granularity::kColumn;
  a.shape = {W};
  a.scores = sv.phi;
  a.base_value = sv.base_value;
  a.prediction = sv.full_value;
  a.meta.n_samples = sv.evaluations;
  a.meta.seed = options.seed;
  a.meta.exact = sv.exact;
  a.meta.baseline_policy = "CONTROL_MEAN";
  a.meta.warnings = sv.warnings;
  return a;
}

// ---------------------------------------------------------------------------
// PCA

PcaModel pca_fit(const Tensor& data) {
  if (data.rank() != 2) throw DataError("pca_fit: expected an (N, F) matrix");
  const auto N = static_cast<Eigen::Index>(data.dim(0));
  const auto F = static_cast<Eigen::Index>(data.dim(1));
  if (N < 2) throw DataError("pca_fit: need at least two rows");
  using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::MatrixXd X = Eigen::Map<const MatR>(data.data(), N, F);
  const Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const double total = s.squaredNorm();
  if (!(total > 1e-24 * std::max(1.0, X.cwiseAbs2().maxCoeff()))) {
    throw DataError("pca_fit: data has zero variance");
  }
  PcaModel m;
  m.n_features = static_cast<std::size_t>(F);
  m.mean.assign(mean.data(), mean.data() + F);
  const Eigen::Index k = s.size();
  const Eigen::MatrixXd& V = svd.matrixV();
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXd v = V.col(c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    m.components.insert(m.components.end(), v.data(), v.data() + F);
    m.explained_variance.push_back(s[c] * s[c] / static_cast<double>(N - 1));
    m.explained_variance_ratio.push_back(s[c] * s[c] / total);
  }
  return m;
}

std::size_t components_for_variance(const PcaModel& model, double target) {
  if (!(target > 0.0 && target <= 1.0)) throw ConfigError("variance target must lie in (0, 1]");
  double cum = 0.0;
  for (std::size_t k = 0; k < model.n_components(); ++k) {
    cum += model.explained_variance_ratio[k];
    // Absorb summation rounding when the target is the full variance.
    if (cum >= target - 1e-12) return k + 1;
  }
  return model.n_components();
}

Tensor pca_project(const PcaModel& model, const Tensor& data, std::size_t k) {
  if (data.rank() != 2 || data.dim(1) != model.n_features) {
    throw DataError("pca_project: data width does not match the model");
  }
  if (k == 0 || k > model.n_components()) throw ConfigError("pca_project: invalid component count");
  const std::size_t N = data.dim(0), F = model.n_features;
  Tensor out({N, k});
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      double acc = 0.0;
      for (std::size_t f = 0; f < F; ++f) acc += (data[r * F + f] - model.mean[f]) * model.component(c, f);
      out[r * k + c] = acc;
    }
  }
  return out;
}

Tensor pca_reconstruct(const PcaModel& model, const Tensor& coords) {
  if (coords.rank() != 2 || coords.dim(1) > model.n_components()) {
    throw DataError("pca_reconstruct: coordinate width does not match the model");
  }
  const std::size_t N = coords.dim(0), k = coords.dim(1), F = model.n_features;
  Tensor out({N, F});
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t f = 0; f < F; ++f) {
      double acc = model.mean[f];
      for (std::size_t c = 0; c < k; ++c) acc += coords[r * k + c] * model.component(c, f);
      out[r * F + f] = acc;
    }
  }
  return out;
}

}  // namespace trafficguard::xai
