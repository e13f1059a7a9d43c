#include <gtest/gtest.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <sstream>

#include "trafficguard/cli.hpp"
#include "trafficguard/common.hpp"

using namespace trafficguard;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"(seed: 5
scenario:
  duration: 1800
  control_duration: 600
  network:
    grid_rows: 3
    grid_cols: 3
    lanes_per_approach: [5, 4, 5, 4]
    arrival_rates: {boundary: 0.25, interior: 0.10, scale: {4: 3.0}}
  attacks:
    - {start: 600, end: 1200, target: busiest, mode: RANDOM_EACH_UPDATE}
dataset: {rows: 18, smote: true}
train: {epochs: 3, batch_size: 16}
xai:
  lime: {n_samples: 200}
  shap: {n_coalitions: 256}
)";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::vector<const char*> argv = {"trafficguard"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Pipeline : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / "trafficguard_cli_test"; }
  static fs::path config() { return root() / "config.yaml"; }
  static fs::path out() { return root() / "out"; }

  static Result step(std::vector<std::string> args, const fs::path& dir = out()) {
    std::vector<std::string> full = {"--config", config().string(), "--out", dir.string()};
    full.insert(full.end(), args.begin(), args.end());
    return run_cli(full);
  }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    write_file(config(), kConfig);
    for (const char* cmd : {"simulate", "dataset", "train", "eval"}) {
      const auto r = step({cmd});
      ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
  }
};

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

}  // namespace

TEST_F(Pipeline, ArtifactsAndManifest) {
  for (const char* f : {"records.csv", "records.manifest.json", "control.csv", "timeline.json",
                        "dataset/train.bin", "dataset/test.bin", "dataset/manifest.json", "model.bin",
                        "metrics.json", "metrics.txt", "run_manifest.json"}) {
    EXPECT_TRUE(fs::exists(out() / f)) << f;
  }
  const auto m = read_json(out() / "run_manifest.json");
  EXPECT_EQ(m["seed"].get<std::uint64_t>(), 5u);
  for (const char* c : {"simulate", "dataset", "train", "eval"}) EXPECT_TRUE(m["commands"].contains(c)) << c;
  const auto dm = read_json(out() / "dataset" / "manifest.json");
  EXPECT_EQ(dm["rows"].get<int>(), 18);
  EXPECT_EQ(dm["files"]["train.bin"].get<std::string>(), sha256_file(out() / "dataset" / "train.bin"));
  const auto metrics = read_json(out() / "metrics.json");
  EXPECT_TRUE(metrics.contains("metrics"));
  EXPECT_NE(read_file(out() / "metrics.txt").find("R=18"), std::string::npos);
}

TEST_F(Pipeline, ExplainOutputs) {
  auto r = step({"explain", "occlusion", "--samples", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file(out() / "explain" / "occlusion_0.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 19);  // header + 18 rows
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 23);

  r = step({"explain", "lime", "--samples", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lime = read_json(out() / "explain" / "lime_1.json");
  EXPECT_EQ(lime["method"], "LIME");
  EXPECT_EQ(lime["attributions"].size(), 10u);  // top_k

  r = step({"explain", "shap", "--samples", "2,3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto shap = read_json(out() / "explain" / "shap_3.json");
  EXPECT_EQ(shap["attributions"].size(), 23u);
  double sum = 0.0;
  for (const auto& e : shap["attributions"]) sum += e["score"].get<double>();
  EXPECT_NEAR(sum, shap["prediction"].get<double>() - shap["base_value"].get<double>(), 1e-9);
}

TEST_F(Pipeline, ExplainSelectorErrors) {
  EXPECT_EQ(step({"explain", "gradcam"}).code, 2);
  EXPECT_EQ(step({"explain", "shap", "--samples", "99999"}).code, 2);
  EXPECT_EQ(step({"explain", "shap", "--samples", "some"}).code, 2);
}

TEST_F(Pipeline, TriageAndPca) {
  auto r = step({"triage"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = read_json(out() / "triage.json");
  EXPECT_EQ(t["counts"]["total"].get<std::size_t>(), t["cases"].size());
  EXPECT_TRUE(fs::exists(out() / "triage.txt"));

  r = step({"pca"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file(out() / "pca.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "pc1,pc2,label");
  EXPECT_NE(csv.find(",NORMAL\n"), std::string::npos);
  EXPECT_NE(csv.find(",HACKED\n"), std::string::npos);
  const auto p = read_json(out() / "pca.json");
  double sum = 0.0;
  for (const auto& v : p["explained_variance_ratio"]) sum += v.get<double>();
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_GE(p["components_for_target"].get<int>(), 1);
}

TEST_F(Pipeline, TamperedDatasetRefused) {
  const fs::path copy = root() / "tampered";
  fs::remove_all(copy);
  fs::copy(out(), copy, fs::copy_options::recursive);
  std::string bytes = read_file(copy / "dataset" / "train.bin");
  bytes[bytes.size() / 2] ^= 0x01;
  write_file(copy / "dataset" / "train.bin", bytes);
  const auto r = step({"train"}, copy);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("digest"), std::string::npos) << r.err;
}

TEST_F(Pipeline, ModelFromOtherDatasetRefused) {
  const fs::path other = root() / "other";
  fs::remove_all(other);
  fs::copy(out(), other, fs::copy_options::recursive);
  // Rebuild the dataset under another seed; the old model no longer matches.
  ASSERT_EQ(run_cli({"--config", config().string(), "--out", other.string(), "--seed", "6", "simulate"}).code, 0);
  ASSERT_EQ(run_cli({"--config", config().string(), "--out", other.string(), "--seed", "6", "dataset"}).code, 0);
  const auto r = run_cli({"--config", config().string(), "--out", other.string(), "--seed", "6", "eval"});
  EXPECT_EQ(r.code, 1);
}

TEST_F(Pipeline, SameSeedSameArtifacts) {
  const fs::path again = root() / "again";
  for (const char* cmd : {"simulate", "dataset", "train"}) ASSERT_EQ(step({cmd}, again).code, 0) << cmd;
  for (const char* f : {"records.csv", "control.csv", "dataset/train.bin", "dataset/test.bin", "model.bin"}) {
    EXPECT_EQ(sha256_file(out() / f), sha256_file(again / f)) << f;
  }
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({"simulate"}).code, 2);
  EXPECT_EQ(run_cli({"--config", "/nonexistent.yaml", "simulate"}).code, 2);
  EXPECT_EQ(run_cli({"--config", "x.yaml"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}
