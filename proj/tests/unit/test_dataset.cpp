#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "trafficguard/dataset.hpp"

using namespace trafficguard;
using namespace trafficguard::dataset;
using simnet::Label;

namespace {

DetectorRecord record(int begin, Label label, double fill) {
  DetectorRecord r;
  r.begin = begin;
  r.end = begin + 10;
  r.detector_id = "d";
  r.label = label;
  r.features.fill(fill);
  return r;
}

std::vector<DetectorRecord> stream(int batches, int rows_per_batch, int hacked_from = -1) {
  std::vector<DetectorRecord> out;
  for (int b = 0; b < batches; ++b) {
    for (int i = 0; i < rows_per_batch; ++i) {
      const Label l = hacked_from >= 0 && b >= hacked_from ? Label::kHacked : Label::kNormal;
      auto r = record(b * 10, l, 0.0);
      for (int j = 0; j < kFeatureCount; ++j) r.features[j] = (b * 7 + i * 3 + j) % 11 + (l == Label::kHacked ? 5.0 : 0.0);
      out.push_back(r);
    }
  }
  return out;
}

Dataset points(const std::vector<std::pair<std::vector<double>, int>>& pts) {
  Dataset d;
  for (const auto& [v, label] : pts) d.push_back(Tensor({1, 1, v.size()}, v), label, {});
  return d;
}

}  // namespace

TEST(MinMax, FitExamples) {
  auto one = record(0, Label::kNormal, 3.0);
  one.features[2] = 9.0;
  std::vector<DetectorRecord> single = {one};
  const auto s1 = fit_minmax(single);
  EXPECT_EQ(s1.min, one.features);
  EXPECT_EQ(s1.max, one.features);

  std::vector<DetectorRecord> recs;
  for (double v : {0.0, 5.0, 10.0}) {
    auto r = record(0, Label::kNormal, 1.0);
    r.features[6] = v;
    recs.push_back(r);
  }
  const auto s = fit_minmax(recs);
  EXPECT_EQ(s.min[6], 0.0);
  EXPECT_EQ(s.max[6], 10.0);
  EXPECT_TRUE(s.degenerate(0));
  EXPECT_FALSE(s.degenerate(6));
  EXPECT_EQ(s.degenerate_features().size(), 22u);
  EXPECT_THROW(fit_minmax(std::span<const DetectorRecord>{}), DataError);
}

TEST(MinMax, ApplyAndClamp) {
  NormalizationStats s;
  s.min.fill(2.0);
  s.max.fill(6.0);
  s.max[1] = 2.0;  // degenerate
  FeatureVector x;
  x.fill(2.0);
  x[2] = 6.0;
  x[3] = 4.0;
  x[4] = 7.0;
  x[5] = -1.0;
  x[1] = 100.0;
  const auto y = apply_minmax(x, s);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[2], 1.0);
  EXPECT_EQ(y[3], 0.5);
  EXPECT_EQ(y[4], 1.0);
  EXPECT_EQ(y[5], 0.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(MinMax, JsonRoundTrip) {
  const auto recs = stream(3, 18);
  const auto s = fit_minmax(recs);
  const auto back = NormalizationStats::from_json(s.to_json());
  EXPECT_EQ(back.min, s.min);
  EXPECT_EQ(back.max, s.max);
  EXPECT_EQ(back.digest(), s.digest());
  EXPECT_THROW(NormalizationStats::from_json("{}"), DataError);
}

TEST(Windows, CountsAndLabels) {
  const auto recs = stream(10, 18);
  EXPECT_EQ(window_blocks(recs, 18).size(), 10u);
  EXPECT_EQ(window_blocks(recs, 36).size(), 5u);
  EXPECT_EQ(window_blocks(recs, 9).size(), 20u);
  EXPECT_TRUE(window_blocks(std::span(recs).first(17), 18).empty());
  for (const auto& b : window_blocks(recs, 18)) EXPECT_EQ(b.label, kLabelNormal);

  std::vector<DetectorRecord> mixed;
  for (int i = 0; i < 18; ++i) mixed.push_back(record(0, i < 10 ? Label::kHacked : Label::kNormal, 0.0));
  EXPECT_EQ(window_blocks(mixed, 18).front().label, kLabelHacked);
  for (int i = 0; i < 18; ++i) mixed[static_cast<std::size_t>(i)].label = i < 8 ? Label::kHacked : Label::kNormal;
  EXPECT_EQ(window_blocks(mixed, 18).front().label, kLabelNormal);
  for (int i = 0; i < 18; ++i) mixed[static_cast<std::size_t>(i)].label = i < 9 ? Label::kHacked : Label::kNormal;
  EXPECT_EQ(window_blocks(mixed, 18).front().label, kLabelHacked);
}

TEST(Windows, StreamValuesInUnitInterval) {
  const auto recs = stream(6, 18, 3);
  const auto stats = fit_minmax(std::span(recs).first(36));
  const auto w = window_stream(recs, 18, stats);
  ASSERT_EQ(w.size(), 6u);
  EXPECT_EQ(w[0].window_begin, 0);
  EXPECT_EQ(w[0].window_end, 10);
  EXPECT_EQ(w[4].label, kLabelHacked);
  for (const auto& m : w) {
    EXPECT_EQ(m.values.size(), 18u * 23u);
    for (double v : m.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Control, TwoPointStatistics) {
  NormalizationStats s;
  s.min.fill(0.0);
  s.max.fill(1.0);
  std::vector<DetectorRecord> control;
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < 18; ++i) control.push_back(record(b * 10, Label::kNormal, b == 0 ? 0.2 : 0.4));
  }
  const auto c = control_statistics(control, 36, 18, s);
  EXPECT_EQ(c.batches, 2);
  ASSERT_EQ(c.mean.size(), 36u * 23u);
  for (std::size_t k = 0; k < c.mean.size(); ++k) {
    EXPECT_NEAR(c.mean[k], 0.3, 1e-15);
    EXPECT_NEAR(c.std[k], 0.1, 1e-15);
  }
  const std::vector<DetectorRecord> same(control.begin(), control.begin() + 18);
  std::vector<DetectorRecord> twice = same;
  twice.insert(twice.end(), same.begin(), same.end());
  for (double v : control_statistics(twice, 18, 18, s).std) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(control_statistics(same, 18, 18, s), DataError);
}

TEST(Control, LayeredTensorLayers) {
  const auto recs = stream(4, 18);
  const auto stats = fit_minmax(recs);
  const auto control = control_statistics(recs, 9, 18, stats);
  const auto w = window_stream(recs, 9, stats);
  const Tensor t0 = layered_tensor(w[0], control);
  const Tensor t1 = layered_tensor(w[1], control);
  ASSERT_EQ(t0.shape(), (std::vector<std::size_t>{3, 9, 23}));
  const std::size_t plane = 9 * 23;
  for (std::size_t k = 0; k < plane; ++k) {
    EXPECT_EQ(t0[k], w[0].values[k]);
    EXPECT_EQ(t0[plane + k], t1[plane + k]);
    EXPECT_EQ(t0[2 * plane + k], t1[2 * plane + k]);
    EXPECT_GE(t0[2 * plane + k], 0.0);
  }
  // Window rows tile the per-batch statistics by position modulo the batch.
  const auto control18 = control_statistics(recs, 18, 18, stats);
  for (std::size_t k = 0; k < plane; ++k) EXPECT_EQ(control.mean[k], control18.mean[k]);
  EXPECT_THROW(layered_tensor(window_stream(recs, 18, stats)[0], control), DataError);
}

TEST(Smote, BalancedInputUnchanged) {
  const auto d = points({{{0.0, 0.0}, 0}, {{1.0, 1.0}, 0}, {{2.0, 2.0}, 1}, {{3.0, 3.0}, 1}});
  const auto out = smote(d, 5, 1);
  EXPECT_EQ(out.labels, d.labels);
  EXPECT_EQ(out.inputs, d.inputs);
}

TEST(Smote, TwoPointMinorityInterpolates) {
  const auto d = points({{{0.0, 0.0}, 0}, {{1.0, 1.0}, 0}, {{5.0, 5.0}, 1}, {{6.0, 6.0}, 1}, {{7.0, 7.0}, 1}});
  const auto out = smote(d, 5, 3);
  ASSERT_EQ(out.count(0), 3u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out.info[i].synthetic) continue;
    EXPECT_EQ(out.labels[i], 0);
    EXPECT_EQ(out.inputs[i][0], out.inputs[i][1]);
    EXPECT_GE(out.inputs[i][0], 0.0);
    EXPECT_LE(out.inputs[i][0], 1.0);
  }
}

TEST(Smote, NinetyTenBalancesAndIsDeterministic) {
  std::vector<std::pair<std::vector<double>, int>> pts;
  for (int i = 0; i < 90; ++i) pts.push_back({{i * 0.01, 1.0 - i * 0.01, 0.5}, 1});
  for (int i = 0; i < 10; ++i) pts.push_back({{0.9 + i * 0.003, i * 0.02, 0.1 * i}, 0});
  const auto d = points(pts);
  const auto a = smote(d, 5, 7);
  EXPECT_EQ(a.count(1), 90u);
  EXPECT_EQ(a.count(0), 90u);
  const auto b = smote(d, 5, 7);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(smote(d, 5, 8).inputs, a.inputs);
}

TEST(Smote, Errors) {
  EXPECT_THROW(smote(points({{{0.0}, 1}, {{1.0}, 1}}), 5, 0), DataError);
  EXPECT_THROW(smote(points({{{0.0}, 0}, {{1.0}, 1}, {{2.0}, 1}}), 5, 0), DataError);
}

TEST(Split, CountsDisjointDeterministic) {
  const auto idx = split_indices(10, 0.8, 4);
  EXPECT_EQ(idx.train.size(), 8u);
  EXPECT_EQ(idx.test.size(), 2u);
  std::set<std::size_t> all(idx.train.begin(), idx.train.end());
  for (std::size_t t : idx.test) EXPECT_FALSE(all.count(t));
  all.insert(idx.test.begin(), idx.test.end());
  EXPECT_EQ(all.size(), 10u);
  EXPECT_EQ(split_indices(10, 0.8, 4).train, idx.train);
  EXPECT_EQ(split_indices(101, 0.8, 4).train.size(), 80u);
  EXPECT_THROW(split_indices(4, 0.8, 4), DataError);
  EXPECT_THROW(split_indices(10, 1.0, 4), ConfigError);
}

TEST(Prepare, FitsOnTrainingRowsOnly) {
  auto recs = stream(60, 18, 40);
  // An extreme value in exactly one block: it shapes the stats only when
  // that block lands in the training split.
  const auto idx = split_indices(60, 0.8, 5);
  const std::size_t test_block = idx.test.front();
  recs[test_block * 18].features[0] = 1e6;
  std::vector<DetectorRecord> control = stream(10, 18);

  BuildOptions opts;
  opts.seed = 5;
  const auto p = prepare(recs, control, opts);
  EXPECT_LT(p.stats.max[0], 1e6);
  EXPECT_EQ(p.split.test.size(), 12u);
  EXPECT_EQ(p.split.train.count(kLabelNormal), p.split.train.count(kLabelHacked));
  for (const auto& info : p.split.test.info) EXPECT_FALSE(info.synthetic);
  EXPECT_EQ(p.control_vehicle_means.size(), 10u);
  EXPECT_EQ(p.baseline.shape(), (std::vector<std::size_t>{1, 18, 23}));

  opts.mode = TensorMode::kThreeLayer;
  opts.rows = 36;
  const auto q = prepare(recs, control, opts);
  EXPECT_EQ(q.split.test.input_shape, (std::vector<std::size_t>{3, 36, 23}));
  EXPECT_EQ(q.baseline.shape(), (std::vector<std::size_t>{3, 36, 23}));
  opts.rows = 12;
  EXPECT_THROW(prepare(recs, control, opts), ConfigError);
}

TEST(Percentile, NearestRank) {
  EXPECT_EQ(percentile({5, 1, 4, 2, 3}, 25), 2);
  EXPECT_EQ(percentile({5, 1, 4, 2, 3}, 0), 1);
  EXPECT_EQ(percentile({5, 1, 4, 2, 3}, 100), 5);
  EXPECT_EQ(percentile({10, 20, 30, 40}, 50), 20);
  EXPECT_THROW(percentile({}, 50), DataError);
}

TEST(Container, RoundTripBitExact) {
  const auto recs = stream(30, 18, 20);
  BuildOptions opts;
  opts.seed = 2;
  const auto p = prepare(recs, stream(4, 18), opts);
  const auto bytes = serialize(p.split.train);
  const auto back = deserialize(bytes);
  EXPECT_EQ(back.inputs, p.split.train.inputs);
  EXPECT_EQ(back.labels, p.split.train.labels);
  EXPECT_EQ(back.input_shape, p.split.train.input_shape);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back.info[i].begin, p.split.train.info[i].begin);
    EXPECT_EQ(back.info[i].synthetic, p.split.train.info[i].synthetic);
    EXPECT_EQ(back.info[i].mean_vehicle_number, p.split.train.info[i].mean_vehicle_number);
  }
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_THROW(deserialize(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(deserialize(bytes + "x"), DataError);
  EXPECT_THROW(deserialize("NOTADATA" + bytes.substr(8)), DataError);

  const auto dir = std::filesystem::temp_directory_path() / "tg_dataset_test";
  save_dataset(p.split.test, dir / "t.bin");
  EXPECT_EQ(load_dataset(dir / "t.bin").inputs, p.split.test.inputs);
  std::filesystem::remove_all(dir);

  const auto csv = export_csv(p.split.test);
  EXPECT_EQ(csv.substr(0, 20), "begin,end,id,target,");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 1 + p.split.test.size() * 18);
}
