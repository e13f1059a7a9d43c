#pragma once

// Model-agnostic explanations: occlusion sensitivity, LIME on flattened
// inputs, KernelSHAP over feature columns, and PCA for dataset plots.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trafficguard/neuralnet.hpp"
#include "trafficguard/tensor.hpp"

namespace trafficguard::xai {

// Black-box model: input (C, R, W) -> P(normal | input).
using ModelFn = std::function<double(const Tensor&)>;

// Borrows the model; it must outlive the returned function.
ModelFn wrap(const nn::CnnModel& model);

enum class Method { kOcclusion, kLime, kShap };
enum class Granularity { kCell, kColumn, kFlatFeature };
enum class BaselinePolicy { kZero, kControlMean };

std::string_view method_name(Method m);
std::string_view granularity_name(Granularity g);
std::string_view baseline_policy_name(BaselinePolicy p);
BaselinePolicy parse_baseline_policy(std::string_view name);

struct AttributionMeta {
  std::size_t n_samples = 0;
  double kernel_width = 0.0;
  std::uint64_t seed = 0;
  std::string baseline_policy;
  bool exact = false;
  double r2 = 0.0;  // LIME surrogate fidelity (weighted R^2)
  std::vector<std::string> warnings;
};

struct Attribution {
  Method method = Method::kOcclusion;
  Granularity granularity = Granularity::kCell;
  std::vector<std::size_t> shape;  // index space of `scores`
  std::vector<double> scores;
  double base_value = 0.0;  // SHAP phi_0, LIME intercept
  double prediction = 0.0;  // model output on the explained input
  std::vector<std::size_t> top;  // LIME: selected features by |score|
  AttributionMeta meta;

  // Indices ordered by |score| descending, ties by index.
  std::vector<std::size_t> ranked() const;
};

// Human-readable label for index `i` of an attribution over an input of
// shape (C, R, W), using the F1..F23 schema names.
std::string index_name(const Attribution& a, std::size_t i, const std::vector<std::size_t>& input_shape);

// JSON list of {feature, index, score, direction} ordered by |score|.
// `limit` 0 means all entries.
std::string to_json(const Attribution& a, const std::vector<std::size_t>& input_shape,
                    std::size_t limit = 0);
// Rows x cols grid of cell scores with a feature-name header.
std::string heatmap_csv(const Attribution& a);

// ---------------------------------------------------------------------------

struct OcclusionOptions {
  int patch_h = 1;
  int patch_w = 1;
  int stride = 1;
  BaselinePolicy policy = BaselinePolicy::kZero;
};

// dP = |f(x) - f(x_occluded)|; a cell's score is the largest dP over the
// patches covering it. Patches span all channels.
// `control_baseline` is required for the CONTROL_MEAN policy.
Attribution occlusion_map(const ModelFn& model, const Tensor& input, const OcclusionOptions& options,
                          const Tensor* control_baseline = nullptr);

struct LimeOptions {
  int n_samples = 1000;
  std::optional<double> kernel_width;  // default 0.75 * sqrt(M)
  double ridge = 1e-3;
  int top_k = 10;
  std::uint64_t seed = 0;
};

// Binary masks over the flattened input (kept = 1, replaced by baseline = 0),
// exponential kernel on sqrt(masked count), weighted ridge surrogate.
// Positive coefficients push towards NORMAL. `baseline` defaults to zeros.
Attribution lime_explain(const ModelFn& model, const Tensor& input, const LimeOptions& options,
                         const Tensor* baseline = nullptr);

struct ShapOptions {
  int n_coalitions = 2048;
  std::uint64_t seed = 0;
  int exact_threshold = 12;  // enumerate all coalitions when M <= this
};

struct ShapValues {
  std::vector<double> phi;
  double base_value = 0.0;  // v(empty)
  double full_value = 0.0;  // v(all)
  bool exact = false;
  std::size_t evaluations = 0;
  std::vector<std::string> warnings;
};

// Coalition value function: z[j] = 1 keeps player j.
using CoalitionFn = std::function<double(const std::vector<std::uint8_t>&)>;

// Shapley-kernel weighted least squares with phi_0 = v(empty) and
// sum(phi) = v(all) - v(empty) imposed exactly.
ShapValues kernel_shap_values(const CoalitionFn& value, int players, const ShapOptions& options);

// Shapley kernel pi(S) = (M-1) / (C(M,|S|) |S| (M-|S|)), for 0 < |S| < M.
double shapley_kernel_weight(int players, int size);

// Players are the input's last-axis columns; masking a column replaces it in
// every channel and row with the baseline.
Attribution kernel_shap(const ModelFn& model, const Tensor& input, const Tensor& baseline,
                        const ShapOptions& options);

// ---------------------------------------------------------------------------

struct PcaModel {
  std::size_t n_features = 0;
  std::vector<double> mean;
  std::vector<double> components;  // n_components x n_features, row-major
  std::vector<double> explained_variance;
  std::vector<double> explained_variance_ratio;

  std::size_t n_components() const { return explained_variance_ratio.size(); }
  double component(std::size_t k, std::size_t f) const { return components[k * n_features + f]; }
};

// data: (N, F) tensor, N >= 2. Axes come from the SVD of the centered data,
// sign-fixed so each component's largest-magnitude entry is positive.
PcaModel pca_fit(const Tensor& data);
// Smallest k whose cumulative explained-variance ratio reaches `target`.
std::size_t components_for_variance(const PcaModel& model, double target);
// (N, k) coordinates.
Tensor pca_project(const PcaModel& model, const Tensor& data, std::size_t k);
// Inverse of pca_project for k components.
Tensor pca_reconstruct(const PcaModel& model, const Tensor& coords);

}  // namespace trafficguard::xai
