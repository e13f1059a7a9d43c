#pragma once

// Two-layer convolutional detector with exact reverse-mode gradients.
//
// conv3x3(64) -> ReLU -> maxpool2 -> conv3x3(128) -> ReLU -> maxpool2 ->
// flatten -> dense(64) -> ReLU -> dense(1) -> sigmoid
//
// The output is P(normal | window); label 1 is normal and 0 is hacked.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trafficguard/dataset.hpp"
#include "trafficguard/tensor.hpp"

namespace trafficguard::nn {

struct InputShape {
  int channels = 1;
  int rows = 18;
  int cols = 23;
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

// Layer widths. The defaults are the detector's; tests shrink them.
struct Architecture {
  int conv1_filters = 64;
  int conv2_filters = 128;
  int hidden = 64;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// 128 * floor(R/4) * floor(23/4) for the default widths.
std::size_t flatten_dim(const InputShape& shape, const Architecture& arch = {});

struct CnnModel {
  InputShape input;
  Architecture arch;
  Tensor conv1_w;  // (F1, C, 3, 3)
  Tensor conv1_b;  // (F1)
  Tensor conv2_w;  // (F2, F1, 3, 3)
  Tensor conv2_b;  // (F2)
  Tensor fc1_w;    // (H, flatten)
  Tensor fc1_b;    // (H)
  Tensor fc2_w;    // (1, H)
  Tensor fc2_b;    // (1)
  std::string stats_digest;    // normalization the model was trained under
  std::string dataset_digest;  // training set content digest

  std::size_t flatten_dim() const { return nn::flatten_dim(input, arch); }
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  static const std::vector<std::string>& parameter_names();
  std::size_t parameter_count() const;
};

// Seeded fan-in uniform initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
// for weights and biases.
CnnModel make_model(const InputShape& shape, std::uint64_t seed, const Architecture& arch = {});

// ---------------------------------------------------------------------------
// Layer primitives

// 3x3 convolution, stride 1, zero same-padding.
// input (C, H, W), filters (F, C, 3, 3), biases (F) -> (F, H, W).
Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& biases);

struct PoolResult {
  Tensor output;                       // (F, H/2, W/2), floor
  std::vector<std::uint32_t> argmax;   // flat input index per output cell
};
// 2x2 max pooling, stride 2; ties go to the first element in row-major order.
PoolResult maxpool2(const Tensor& input);

double sigmoid(double z);

// Mean binary cross entropy with the probability clamped to [1e-7, 1-1e-7].
double bce_loss(double p, int y);
double bce_loss(std::span<const double> p, std::span<const int> y);

// ---------------------------------------------------------------------------
// Forward and backward

double forward(const CnnModel& model, const Tensor& input);
std::vector<double> predict(const CnnModel& model, std::span<const Tensor> inputs);

struct Gradients {
  std::vector<Tensor> grads;  // aligned with CnnModel::parameters()
  double loss = 0.0;          // mean BCE over the batch
};

Gradients zero_gradients(const CnnModel& model);

// Exact gradients of the mean BCE over the batch. The logit gradient is
// (p - y) / n, the derivative of the unclamped loss.
Gradients backward(const CnnModel& model, std::span<const Tensor> inputs,
                   std::span<const int> labels);

// ---------------------------------------------------------------------------
// Optimisation

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

AdamState make_adam(const CnnModel& model, double lr = 0.001);
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);
void adam_step(CnnModel& model, const Gradients& grads, AdamState& state);

struct TrainOptions {
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.001;
  std::uint64_t seed = 0;
  // Called after each epoch with (epoch index, mean loss).
  std::function<void(int, double)> on_epoch;
};

struct TrainResult {
  std::vector<double> loss_history;  // mean training loss per epoch
  std::int64_t steps = 0;
};

TrainResult train(CnnModel& model, const dataset::Dataset& data, const TrainOptions& options);

// ---------------------------------------------------------------------------
// Evaluation

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  // Confusion matrix with HACKED as the positive class.
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double accuracy = 0.0;
  ClassMetrics hacked;    // headline: hacked positive
  ClassMetrics normal;    // normal positive
  ClassMetrics macro;
  ClassMetrics weighted;  // support-weighted average

  std::size_t total() const { return tp + fp + tn + fn; }
  std::string to_json() const;
};

// Predictions are normal when p >= threshold.
Metrics compute_metrics(std::span<const int> labels, std::span<const int> predictions);
Metrics evaluate(const CnnModel& model, const dataset::Dataset& data, double threshold = 0.5);

// Rows laid out like a results table: configuration, accuracy (%),
// precision, recall, F1.
std::string metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows);

// ---------------------------------------------------------------------------
// Persistence

std::string serialize(const CnnModel& model);
CnnModel deserialize(std::string_view bytes);
void save_model(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_model(const std::filesystem::path& path);

// Non-empty when the model was trained under different normalization.
std::optional<std::string> digest_warning(const CnnModel& model, std::string_view stats_digest);

}  // namespace trafficguard::nn
