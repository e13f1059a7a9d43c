#include "trafficguard/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <nlohmann/json.hpp>
#include <numeric>

#include "text_util.hpp"

namespace trafficguard::dataset {

static_assert(std::endian::native == std::endian::little,
              "dataset container assumes a little-endian host");

std::string_view tensor_mode_name(TensorMode m) {
  return m == TensorMode::kSingle ? "SINGLE" : "THREE_LAYER";
}

TensorMode parse_tensor_mode(std::string_view name) {
  if (name == "SINGLE" || name == "single") return TensorMode::kSingle;
  if (name == "THREE_LAYER" || name == "three_layer") return TensorMode::kThreeLayer;
  throw ConfigError("unknown tensor mode '" + std::string(name) + "'");
}

bool valid_window_rows(int rows) { return rows == 9 || rows == 18 || rows == 36; }

// ---------------------------------------------------------------------------
// Min-max scaling

std::vector<int> NormalizationStats::degenerate_features() const {
  std::vector<int> out;
  for (int j = 0; j < kFeatureCount; ++j) {
    if (degenerate(j)) out.push_back(j);
  }
  return out;
}

std::string NormalizationStats::digest() const {
  std::string text;
  for (int j = 0; j < kFeatureCount; ++j) {
    text += detail::format_double(min[j]) + ":" + detail::format_double(max[j]) + ";";
  }
  return sha256_hex(text);
}

std::string NormalizationStats::to_json() const {
  nlohmann::ordered_json j;
  j["min"] = min;
  j["max"] = max;
  j["fitted_on"] = fitted_on;
  j["digest"] = digest();
  j["degenerate"] = degenerate_features();
  j["feature_names"] = simnet::feature_names();
  return j.dump(2) + "\n";
}

NormalizationStats NormalizationStats::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    NormalizationStats s;
    s.min = j.at("min").get<FeatureVector>();
    s.max = j.at("max").get<FeatureVector>();
    s.fitted_on = j.at("fitted_on").get<std::string>();
    if (j.contains("digest") && j.at("digest").get<std::string>() != s.digest()) {
      throw DataError("normalization stats digest mismatch");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed normalization stats: ") + e.what());
  }
}

NormalizationStats fit_minmax(std::span<const FeatureVector> rows) {
  if (rows.empty()) throw DataError("fit_minmax: no records");
  NormalizationStats s;
  s.min = rows.front();
  s.max = rows.front();
  std::string text;
  for (const auto& r : rows) {
    for (int j = 0; j < kFeatureCount; ++j) {
      if (!std::isfinite(r[j])) throw DataError("fit_minmax: non-finite feature value");
      s.min[j] = std::min(s.min[j], r[j]);
      s.max[j] = std::max(s.max[j], r[j]);
      text += detail::format_double(r[j]);
      text += ',';
    }
  }
  s.fitted_on = sha256_hex(text);
  return s;
}

NormalizationStats fit_minmax(std::span<const DetectorRecord> records) {
  std::vector<FeatureVector> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(r.features);
  return fit_minmax(std::span<const FeatureVector>(rows));
}

FeatureVector apply_minmax(const FeatureVector& x, const NormalizationStats& stats) {
  FeatureVector out{};
  for (int j = 0; j < kFeatureCount; ++j) {
    if (stats.degenerate(j)) {
      out[j] = 0.0;
      continue;
    }
    const double v = (x[j] - stats.min[j]) / (stats.max[j] - stats.min[j]);
    out[j] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windows

std::vector<WindowBlock> window_blocks(std::span<const DetectorRecord> records, int rows) {
  if (rows <= 0) throw ConfigError("window rows must be positive");
  std::vector<WindowBlock> out;
  const std::size_t r = static_cast<std::size_t>(rows);
  for (std::size_t first = 0; first + r <= records.size(); first += r) {
    int hacked = 0;
    for (std::size_t i = first; i < first + r; ++i) {
      if (records[i].label == simnet::Label::kHacked) ++hacked;
    }
    WindowBlock b;
    b.first = first;
    b.rows = rows;
    b.label = 2 * hacked >= rows ? kLabelHacked : kLabelNormal;
    b.begin = records[first].begin;
    b.end = records[first + r - 1].end;
    out.push_back(b);
  }
  return out;
}

namespace {

WindowMatrix make_window(std::span<const DetectorRecord> records, const WindowBlock& b,
                         const NormalizationStats& stats) {
  WindowMatrix w;
  w.rows = b.rows;
  w.label = b.label;
  w.window_begin = b.begin;
  w.window_end = b.end;
  w.values.reserve(static_cast<std::size_t>(b.rows) * kFeatureCount);
  for (int i = 0; i < b.rows; ++i) {
    const auto norm = apply_minmax(records[b.first + i].features, stats);
    w.values.insert(w.values.end(), norm.begin(), norm.end());
  }
  return w;
}

double block_vehicle_mean(std::span<const DetectorRecord> records, const WindowBlock& b) {
  double sum = 0.0;
  for (int i = 0; i < b.rows; ++i) sum += records[b.first + i].features[8];
  return sum / b.rows;
}

}  // namespace

std::vector<WindowMatrix> window_stream(std::span<const DetectorRecord> records, int rows,
                                        const NormalizationStats& stats) {
  std::vector<WindowMatrix> out;
  for (const auto& b : window_blocks(records, rows)) out.push_back(make_window(records, b, stats));
  return out;
}

ControlStatistics control_statistics(std::span<const DetectorRecord> control, int rows,
                                     int batch_rows, const NormalizationStats& stats) {
  if (batch_rows <= 0) throw ConfigError("batch_rows must be positive");
  const std::size_t batches = control.size() / static_cast<std::size_t>(batch_rows);
  if (batches < 2) throw DataError("control statistics need at least two control batches");
  const std::size_t cells = static_cast<std::size_t>(batch_rows) * kFeatureCount;
  std::vector<double> sum(cells, 0.0);
  std::vector<std::vector<double>> normalized(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    auto& nb = normalized[b];
    nb.reserve(cells);
    for (int i = 0; i < batch_rows; ++i) {
      const auto v = apply_minmax(control[b * batch_rows + i].features, stats);
      nb.insert(nb.end(), v.begin(), v.end());
    }
    for (std::size_t c = 0; c < cells; ++c) sum[c] += nb[c];
  }
  std::vector<double> mean(cells), var(cells, 0.0);
  for (std::size_t c = 0; c < cells; ++c) mean[c] = sum[c] / static_cast<double>(batches);
  for (const auto& nb : normalized) {
    for (std::size_t c = 0; c < cells; ++c) var[c] += (nb[c] - mean[c]) * (nb[c] - mean[c]);
  }

  ControlStatistics out;
  out.rows = rows;
  out.batch_rows = batch_rows;
  out.batches = static_cast<int>(batches);
  out.mean.resize(static_cast<std::size_t>(rows) * kFeatureCount);
  out.std.resize(out.mean.size());
  for (int i = 0; i < rows; ++i) {
    const int src = i % batch_rows;
    for (int j = 0; j < kFeatureCount; ++j) {
      const std::size_t c = static_cast<std::size_t>(src) * kFeatureCount + j;
      const std::size_t d = static_cast<std::size_t>(i) * kFeatureCount + j;
      out.mean[d] = mean[c];
      out.std[d] = std::sqrt(var[c] / static_cast<double>(batches));
    }
  }
  return out;
}

Tensor single_tensor(const WindowMatrix& window) {
  return Tensor({1, static_cast<std::size_t>(window.rows), kFeatureCount}, window.values);
}

Tensor layered_tensor(const WindowMatrix& window, const ControlStatistics& control) {
  if (control.rows != window.rows) {
    throw DataError("control statistics were built for a different window size");
  }
  std::vector<double> v;
  v.reserve(window.values.size() * 3);
  v.insert(v.end(), window.values.begin(), window.values.end());
  v.insert(v.end(), control.mean.begin(), control.mean.end());
  v.insert(v.end(), control.std.begin(), control.std.end());
  return Tensor({3, static_cast<std::size_t>(window.rows), kFeatureCount}, std::move(v));
}

Tensor control_baseline(const ControlStatistics& control, TensorMode mode) {
  const auto r = static_cast<std::size_t>(control.rows);
  if (mode == TensorMode::kSingle) return Tensor({1, r, kFeatureCount}, control.mean);
  std::vector<double> v = control.mean;
  v.insert(v.end(), control.mean.begin(), control.mean.end());
  v.insert(v.end(), control.std.begin(), control.std.end());
  return Tensor({3, r, kFeatureCount}, std::move(v));
}

// ---------------------------------------------------------------------------
// Datasets

std::size_t Dataset::count(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

void Dataset::push_back(Tensor input, int label, SampleInfo meta) {
  if (input_shape.empty()) input_shape = input.shape();
  if (input.shape() != input_shape) {
    throw DataError("sample shape " + input.shape_string() + " differs from dataset shape");
  }
  inputs.push_back(std::move(input));
  labels.push_back(label);
  info.push_back(meta);
}

Dataset smote(const Dataset& data, int k, std::uint64_t seed) {
  const std::size_t normal = data.count(kLabelNormal);
  const std::size_t hacked = data.count(kLabelHacked);
  if (normal == 0 || hacked == 0) throw DataError("smote: both classes must be present");
  if (normal == hacked) return data;
  const int minority_label = normal < hacked ? kLabelNormal : kLabelHacked;
  std::vector<std::size_t> minority;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == minority_label) minority.push_back(i);
  }
  if (minority.size() < 2) throw DataError("smote: minority class needs at least two samples");
  const std::size_t needed = std::max(normal, hacked) - minority.size();
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 1)),
                                               minority.size() - 1);

  // k nearest minority neighbours, ties broken by index.
  const std::size_t m = minority.size();
  std::vector<std::vector<std::size_t>> neighbours(m);
  std::vector<std::pair<double, std::size_t>> dist(m);
  for (std::size_t a = 0; a < m; ++a) {
    const auto xa = data.inputs[minority[a]].values();
    for (std::size_t b = 0; b < m; ++b) {
      const auto xb = data.inputs[minority[b]].values();
      double d = 0.0;
      for (std::size_t e = 0; e < xa.size(); ++e) d += (xa[e] - xb[e]) * (xa[e] - xb[e]);
      dist[b] = {b == a ? INFINITY : d, b};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    for (std::size_t n = 0; n < kk; ++n) neighbours[a].push_back(dist[n].second);
  }

  Rng rng = make_rng(seed, RngStream::kSmote);
  Dataset out = data;
  for (std::size_t s = 0; s < needed; ++s) {
    const std::size_t a = uniform_index(rng, m);
    const std::size_t b = neighbours[a][uniform_index(rng, kk)];
    const double u = uniform01(rng);
    const Tensor& x = data.inputs[minority[a]];
    const Tensor& z = data.inputs[minority[b]];
    Tensor synth(x.shape());
    for (std::size_t e = 0; e < x.size(); ++e) synth[e] = x[e] + u * (z[e] - x[e]);
    SampleInfo meta = data.info[minority[a]];
    meta.synthetic = true;
    meta.mean_vehicle_number += u * (data.info[minority[b]].mean_vehicle_number - meta.mean_vehicle_number);
    out.push_back(std::move(synth), minority_label, meta);
  }

  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(std::span<std::size_t>(order), rng);
  Dataset shuffled;
  shuffled.input_shape = out.input_shape;
  for (std::size_t i : order) shuffled.push_back(out.inputs[i], out.labels[i], out.info[i]);
  return shuffled;
}

SplitIndices split_indices(std::size_t n, double ratio, std::uint64_t seed) {
  if (n < 5) throw DataError("split: need at least 5 samples, got " + std::to_string(n));
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, RngStream::kSplit);
  shuffle(std::span<std::size_t>(order), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return out;
}

SplitDataset split(const Dataset& data, double ratio, std::uint64_t seed) {
  const auto idx = split_indices(data.size(), ratio, seed);
  SplitDataset out;
  out.ratio = ratio;
  out.seed = seed;
  out.train.input_shape = out.test.input_shape = data.input_shape;
  for (std::size_t i : idx.train) out.train.push_back(data.inputs[i], data.labels[i], data.info[i]);
  for (std::size_t i : idx.test) out.test.push_back(data.inputs[i], data.labels[i], data.info[i]);
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(q / 100.0 * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size())));
  return values[idx - 1];
}

PreparedData prepare(std::span<const DetectorRecord> records,
                     std::span<const DetectorRecord> control, const BuildOptions& options) {
  if (!valid_window_rows(options.rows)) {
    throw ConfigError("window rows must be 9, 18 or 36");
  }
  const auto blocks = window_blocks(records, options.rows);
  const auto idx = split_indices(blocks.size(), options.split_ratio, options.seed);

  PreparedData out;
  out.options = options;
  std::vector<FeatureVector> train_rows;
  for (std::size_t b : idx.train) {
    for (int i = 0; i < blocks[b].rows; ++i) train_rows.push_back(records[blocks[b].first + i].features);
  }
  out.stats = fit_minmax(std::span<const FeatureVector>(train_rows));
  out.control = control_statistics(control, options.rows, options.batch_rows, out.stats);
  out.baseline = control_baseline(out.control, options.mode);
  for (const auto& b : window_blocks(control, options.rows)) {
    out.control_vehicle_means.push_back(block_vehicle_mean(control, b));
  }

  auto fill = [&](const std::vector<std::size_t>& which, Dataset& ds) {
    for (std::size_t bi : which) {
      const auto& b = blocks[bi];
      const auto w = make_window(records, b, out.stats);
      Tensor t = options.mode == TensorMode::kSingle ? single_tensor(w) : layered_tensor(w, out.control);
      ds.push_back(std::move(t), b.label, {b.begin, b.end, block_vehicle_mean(records, b), false});
    }
  };
  out.split.ratio = options.split_ratio;
  out.split.seed = options.seed;
  fill(idx.train, out.split.train);
  fill(idx.test, out.split.test);
  if (options.apply_smote) out.split.train = smote(out.split.train, options.smote_k, options.seed);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[8] = {'T', 'G', 'D', 'S', 'E', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw DataError("dataset container is truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void expect(std::string_view s) {
    if (bytes_.substr(pos_, s.size()) != s) throw DataError("not a dataset container (bad magic)");
    pos_ += s.size();
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const Dataset& data) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, data.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.input_shape.size()));
  for (std::size_t d : data.input_shape) put<std::uint64_t>(out, d);
  for (const auto& t : data.inputs) {
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  for (int l : data.labels) put<std::int32_t>(out, l);
  for (const auto& m : data.info) {
    put<std::int32_t>(out, m.begin);
    put<std::int32_t>(out, m.end);
    put<double>(out, m.mean_vehicle_number);
    put<std::uint8_t>(out, m.synthetic ? 1 : 0);
  }
  return out;
}

Dataset deserialize(std::string_view bytes) {
  Reader r(bytes);
  r.expect(std::string_view(kMagic, sizeof(kMagic)));
  if (r.get<std::uint32_t>() != kVersion) throw DataError("unsupported dataset container version");
  const auto n = r.get<std::uint64_t>();
  const auto rank = r.get<std::uint32_t>();
  if (rank > 8) throw DataError("dataset container has an implausible rank");
  Dataset ds;
  for (std::uint32_t i = 0; i < rank; ++i) ds.input_shape.push_back(r.get<std::uint64_t>());
  const std::size_t per = shape_product(ds.input_shape);
  if (n > 0 && per > 0 && bytes.size() / per / sizeof(double) < n) {
    throw DataError("dataset container is truncated");
  }
  ds.inputs.reserve(n);
  for (std::uint64_t s = 0; s < n; ++s) {
    std::vector<double> v(per);
    for (auto& x : v) x = r.get<double>();
    ds.inputs.emplace_back(ds.input_shape, std::move(v));
  }
  for (std::uint64_t s = 0; s < n; ++s) ds.labels.push_back(r.get<std::int32_t>());
  for (std::uint64_t s = 0; s < n; ++s) {
    SampleInfo m;
    m.begin = r.get<std::int32_t>();
    m.end = r.get<std::int32_t>();
    m.mean_vehicle_number = r.get<double>();
    m.synthetic = r.get<std::uint8_t>() != 0;
    ds.info.push_back(m);
  }
  if (!r.done()) throw DataError("dataset container has trailing bytes");
  return ds;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  write_file(path, serialize(data));
}

Dataset load_dataset(const std::filesystem::path& path) {
  try {
    return deserialize(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string export_csv(const Dataset& data) {
  std::string out = "begin,end,id,target";
  for (int j = 1; j <= kFeatureCount; ++j) out += ",F" + std::to_string(j);
  out += '\n';
  for (std::size_t s = 0; s < data.size(); ++s) {
    const Tensor& t = data.inputs[s];
    const std::size_t rows = t.dim(1);
    for (std::size_t i = 0; i < rows; ++i) {
      out += std::to_string(data.info[s].begin) + "," + std::to_string(data.info[s].end) + ",w" +
             std::to_string(s) + "_r" + std::to_string(i) + "," + std::to_string(data.labels[s]);
      for (std::size_t j = 0; j < kFeatureCount; ++j) out += "," + detail::format_double(t.at(0, i, j));
      out += '\n';
    }
  }
  return out;
}

}  // namespace trafficguard::dataset
