#pragma once

// Windowing, normalization, class rebalancing and persistence of detector
// record streams.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trafficguard/simnet.hpp"
#include "trafficguard/tensor.hpp"

namespace trafficguard::dataset {

using simnet::DetectorRecord;
using simnet::kFeatureCount;
using FeatureVector = std::array<double, kFeatureCount>;

inline constexpr int kLabelNormal = 1;
inline constexpr int kLabelHacked = 0;

enum class TensorMode { kSingle, kThreeLayer };
std::string_view tensor_mode_name(TensorMode m);
TensorMode parse_tensor_mode(std::string_view name);

bool valid_window_rows(int rows);  // 9, 18 or 36

struct NormalizationStats {
  FeatureVector min{};
  FeatureVector max{};
  std::string fitted_on;  // digest of the fitted rows

  bool degenerate(int feature) const { return min[feature] == max[feature]; }
  std::vector<int> degenerate_features() const;
  std::string digest() const;
  std::string to_json() const;
  static NormalizationStats from_json(std::string_view text);
};

NormalizationStats fit_minmax(std::span<const DetectorRecord> records);
NormalizationStats fit_minmax(std::span<const FeatureVector> rows);
// (x - min) / (max - min), clamped to [0, 1]; degenerate features map to 0.
FeatureVector apply_minmax(const FeatureVector& x, const NormalizationStats& stats);

// A run of `rows` consecutive records forming one window.
struct WindowBlock {
  std::size_t first = 0;
  int rows = 0;
  int label = kLabelNormal;
  int begin = 0;
  int end = 0;
};

// Non-overlapping blocks; trailing partial block dropped. A block is hacked
// when at least half of its rows are.
std::vector<WindowBlock> window_blocks(std::span<const DetectorRecord> records, int rows);

struct WindowMatrix {
  int rows = 0;
  std::vector<double> values;  // rows x 23, row-major, in [0, 1]
  int label = kLabelNormal;
  int window_begin = 0;
  int window_end = 0;

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * kFeatureCount + j]; }
};

std::vector<WindowMatrix> window_stream(std::span<const DetectorRecord> records, int rows,
                                        const NormalizationStats& stats);

// Per-position mean and population standard deviation of normalized control
// batches, tiled to rows x 23.
struct ControlStatistics {
  int rows = 0;
  int batch_rows = 0;
  int batches = 0;
  std::vector<double> mean;  // rows x 23
  std::vector<double> std;   // rows x 23
};

ControlStatistics control_statistics(std::span<const DetectorRecord> control, int rows,
                                     int batch_rows, const NormalizationStats& stats);

// 3 x rows x 23: window values, control mean, control std.
Tensor layered_tensor(const WindowMatrix& window, const ControlStatistics& control);
Tensor single_tensor(const WindowMatrix& window);

struct SampleInfo {
  int begin = 0;
  int end = 0;
  double mean_vehicle_number = 0.0;  // raw F9 averaged over the window
  bool synthetic = false;
};

struct Dataset {
  std::vector<std::size_t> input_shape;  // (C, R, 23)
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  std::vector<SampleInfo> info;

  std::size_t size() const { return inputs.size(); }
  std::size_t count(int label) const;
  void push_back(Tensor input, int label, SampleInfo meta);
};

// Oversamples the minority class up to the majority count by interpolating
// towards one of its k nearest minority neighbours. Output order is a seeded
// shuffle.
Dataset smote(const Dataset& data, int k, std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
// Seeded shuffle; train gets floor(ratio * n).
SplitIndices split_indices(std::size_t n, double ratio, std::uint64_t seed);

struct SplitDataset {
  Dataset train;
  Dataset test;
  double ratio = 0.8;
  std::uint64_t seed = 0;
};
SplitDataset split(const Dataset& data, double ratio, std::uint64_t seed);

struct BuildOptions {
  int rows = 18;
  TensorMode mode = TensorMode::kSingle;
  double split_ratio = 0.8;
  bool apply_smote = true;
  int smote_k = 5;
  std::uint64_t seed = 0;
  int batch_rows = 18;  // detectors per 10 s batch
};

// Full preparation: window, split, fit normalization on training rows,
// normalize, optionally build layered tensors, then SMOTE the training part.
struct PreparedData {
  SplitDataset split;
  NormalizationStats stats;
  ControlStatistics control;
  Tensor baseline;                  // control-mean input, same shape as samples
  std::vector<double> control_vehicle_means;  // raw mean F9 per control window
  BuildOptions options;
};

PreparedData prepare(std::span<const DetectorRecord> records,
                     std::span<const DetectorRecord> control, const BuildOptions& options);

// Baseline input for occlusion and SHAP: control mean in the data layer;
// layered inputs keep their control layers.
Tensor control_baseline(const ControlStatistics& control, TensorMode mode);

// Nearest-rank percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

// Binary container: magic, version, shape, row-major doubles, labels, info.
std::string serialize(const Dataset& data);
Dataset deserialize(std::string_view bytes);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// CSV in the record-log layout: one line per window row.
std::string export_csv(const Dataset& data);

}  // namespace trafficguard::dataset
