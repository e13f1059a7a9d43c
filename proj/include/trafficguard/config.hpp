#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trafficguard/dataset.hpp"
#include "trafficguard/simnet.hpp"
#include "trafficguard/triage.hpp"
#include "trafficguard/xai.hpp"

namespace trafficguard::config {

struct ScenarioConfig {
  simnet::NetworkConfig network;
  std::vector<simnet::AttackEvent> attacks;
  int duration = 10800;
  int control_duration = 3600;
  std::optional<int> monitored;  // defaults to the busiest intersection
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.001;
};

struct XaiConfig {
  xai::OcclusionOptions occlusion;
  xai::LimeOptions lime;
  xai::ShapOptions shap;
  double pca_variance_target = 0.90;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ScenarioConfig scenario;
  dataset::BuildOptions dataset;
  TrainConfig train;
  XaiConfig xai;
  triage::Thresholds triage;
};

// YAML document; every key is optional and falls back to the defaults above.
// Throws ConfigError with the offending key on malformed input.
RunConfig parse_run_config(std::string_view yaml_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Propagates the run seed into every seeded component.
void apply_seed(RunConfig& config, std::uint64_t seed);

// Seed of the attack-free control run.
std::uint64_t control_seed(std::uint64_t seed);

}  // namespace trafficguard::config
