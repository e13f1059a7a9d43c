#include "trafficguard/config.hpp"

#include <yaml-cpp/yaml.h>

namespace trafficguard::config {

namespace {

template <typename T>
T get(const YAML::Node& node, const char* key, const std::string& where, T fallback) {
  const YAML::Node v = node[key];
  if (!v || v.IsNull()) return fallback;
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config key '" + where + key + "' has an invalid value");
  }
}

simnet::Approach parse_approach(const std::string& s) {
  if (s == "N") return simnet::Approach::kNorth;
  if (s == "E") return simnet::Approach::kEast;
  if (s == "S") return simnet::Approach::kSouth;
  if (s == "W") return simnet::Approach::kWest;
  throw ConfigError("unknown approach '" + s + "' (expected N, E, S or W)");
}

void parse_arrivals(const YAML::Node& node, simnet::NetworkConfig& net) {
  const int n = net.intersection_count();
  net.arrival_rates.assign(static_cast<std::size_t>(n), {0.0, 0.0, 0.0, 0.0});
  if (!node || node.IsNull()) return;
  if (node.IsSequence()) {
    if (static_cast<int>(node.size()) != n) {
      throw ConfigError("network.arrival_rates table needs one row per intersection");
    }
    for (int i = 0; i < n; ++i) {
      const auto row = node[static_cast<std::size_t>(i)].as<std::vector<double>>();
      if (row.size() != 4) throw ConfigError("network.arrival_rates rows need 4 entries (N, E, S, W)");
      std::copy(row.begin(), row.end(), net.arrival_rates[static_cast<std::size_t>(i)].begin());
    }
    return;
  }
  const std::string where = "network.arrival_rates.";
  const double boundary = get<double>(node, "boundary", where, 0.0);
  const double interior = get<double>(node, "interior", where, 0.0);
  const simnet::Network probe([&] {
    simnet::NetworkConfig c = net;
    c.arrival_rates.clear();
    return c;
  }());
  for (int i = 0; i < n; ++i) {
    for (simnet::Approach a : simnet::kApproaches) {
      // Vehicles arriving from side `a` come from the neighbour on that side.
      const bool has_upstream = probe.neighbor(i, a).has_value();
      net.arrival_rates[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] =
          has_upstream ? interior : boundary;
    }
  }
  if (const YAML::Node scale = node["scale"]; scale && scale.IsMap()) {
    for (const auto& kv : scale) {
      const int id = kv.first.as<int>();
      if (id < 0 || id >= n) throw ConfigError(where + "scale: intersection " + std::to_string(id) + " does not exist");
      for (double& r : net.arrival_rates[static_cast<std::size_t>(id)]) r *= kv.second.as<double>();
    }
  }
  if (const YAML::Node ov = node["overrides"]; ov && ov.IsSequence()) {
    for (const auto& o : ov) {
      const int id = o["intersection"].as<int>();
      if (id < 0 || id >= n) throw ConfigError(where + "overrides: intersection " + std::to_string(id) + " does not exist");
      net.arrival_rates[static_cast<std::size_t>(id)][static_cast<std::size_t>(parse_approach(o["approach"].as<std::string>()))] =
          o["rate"].as<double>();
    }
  }
}

simnet::NetworkConfig parse_network(const YAML::Node& node) {
  simnet::NetworkConfig net;
  if (!node || node.IsNull()) {
    net.arrival_rates.clear();
    return net;
  }
  const std::string w = "network.";
  net.grid_rows = get<int>(node, "grid_rows", w, net.grid_rows);
  net.grid_cols = get<int>(node, "grid_cols", w, net.grid_cols);
  if (const YAML::Node lanes = node["lanes_per_approach"]; lanes && !lanes.IsNull()) {
    if (lanes.IsScalar()) {
      net.lanes_per_approach.fill(lanes.as<int>());
    } else {
      const auto v = lanes.as<std::vector<int>>();
      if (v.size() != 4) throw ConfigError("network.lanes_per_approach needs 4 entries (N, E, S, W)");
      std::copy(v.begin(), v.end(), net.lanes_per_approach.begin());
    }
  }
  net.lane_length = get<double>(node, "lane_length", w, net.lane_length);
  net.free_flow_speed = get<double>(node, "free_flow_speed", w, net.free_flow_speed);
  net.vehicle_length = get<double>(node, "vehicle_length", w, net.vehicle_length);
  net.min_gap = get<double>(node, "min_gap", w, net.min_gap);
  net.saturation_flow = get<double>(node, "saturation_flow", w, net.saturation_flow);
  if (const YAML::Node t = node["turn_probabilities"]; t && !t.IsNull()) {
    const auto v = t.as<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("network.turn_probabilities needs [left, straight, right]");
    std::copy(v.begin(), v.end(), net.turn_probabilities.begin());
  }
  if (const YAML::Node prog = node["program"]; prog && prog.IsSequence()) {
    net.program.clear();
    for (const auto& step : prog) {
      net.program.push_back({simnet::parse_phase(step["phase"].as<std::string>()),
                             step["duration"].as<int>()});
    }
  }
  if (net.grid_rows < 1 || net.grid_cols < 1) throw ConfigError("grid dimensions must be >= 1");
  parse_arrivals(node["arrival_rates"], net);
  net.validate();
  return net;
}

}  // namespace

std::uint64_t control_seed(std::uint64_t seed) { return mix_seed(seed, 0xC0C0); }

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.scenario.network.seed = seed;
  config.dataset.seed = seed;
  config.xai.lime.seed = seed;
  config.xai.shap.seed = seed;
}

RunConfig parse_run_config(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  RunConfig cfg;
  try {
    const YAML::Node sc = root["scenario"];
    cfg.scenario.network = parse_network(sc ? sc["network"] : YAML::Node());
    if (sc) {
      cfg.scenario.duration = get<int>(sc, "duration", "scenario.", cfg.scenario.duration);
      cfg.scenario.control_duration =
          get<int>(sc, "control_duration", "scenario.", cfg.scenario.control_duration);
      const simnet::Network net(cfg.scenario.network);
      if (const YAML::Node m = sc["monitored"]; m && !m.IsNull()) {
        cfg.scenario.monitored = m.as<std::string>() == "busiest" ? net.busiest() : m.as<int>();
      }
      if (const YAML::Node attacks = sc["attacks"]; attacks && attacks.IsSequence()) {
        for (const auto& a : attacks) {
          simnet::AttackEvent ev;
          ev.start = a["start"].as<int>();
          ev.end = a["end"].as<int>();
          const std::string target = a["target"] ? a["target"].as<std::string>() : "busiest";
          ev.target = target == "busiest" ? net.busiest() : a["target"].as<int>();
          ev.mode = simnet::parse_attack_mode(a["mode"] ? a["mode"].as<std::string>() : "RANDOM_EACH_UPDATE");
          cfg.scenario.attacks.push_back(ev);
        }
      }
      simnet::validate_attacks(net, cfg.scenario.attacks);
    }
    if (const YAML::Node ds = root["dataset"]) {
      const std::string w = "dataset.";
      cfg.dataset.rows = get<int>(ds, "rows", w, cfg.dataset.rows);
      cfg.dataset.mode = dataset::parse_tensor_mode(get<std::string>(ds, "mode", w, "SINGLE"));
      cfg.dataset.split_ratio = get<double>(ds, "split_ratio", w, cfg.dataset.split_ratio);
      cfg.dataset.apply_smote = get<bool>(ds, "smote", w, cfg.dataset.apply_smote);
      cfg.dataset.smote_k = get<int>(ds, "smote_k", w, cfg.dataset.smote_k);
    }
    if (!dataset::valid_window_rows(cfg.dataset.rows)) throw ConfigError("dataset.rows must be 9, 18 or 36");
    if (const YAML::Node tr = root["train"]) {
      cfg.train.epochs = get<int>(tr, "epochs", "train.", cfg.train.epochs);
      cfg.train.batch_size = get<int>(tr, "batch_size", "train.", cfg.train.batch_size);
      cfg.train.lr = get<double>(tr, "lr", "train.", cfg.train.lr);
    }
    if (const YAML::Node x = root["xai"]) {
      if (const YAML::Node o = x["occlusion"]) {
        cfg.xai.occlusion.patch_h = get<int>(o, "patch_h", "xai.occlusion.", 1);
        cfg.xai.occlusion.patch_w = get<int>(o, "patch_w", "xai.occlusion.", 1);
        cfg.xai.occlusion.stride = get<int>(o, "stride", "xai.occlusion.", 1);
        cfg.xai.occlusion.policy = xai::parse_baseline_policy(get<std::string>(o, "baseline", "xai.occlusion.", "ZERO"));
      }
      if (const YAML::Node l = x["lime"]) {
        cfg.xai.lime.n_samples = get<int>(l, "n_samples", "xai.lime.", cfg.xai.lime.n_samples);
        cfg.xai.lime.ridge = get<double>(l, "ridge", "xai.lime.", cfg.xai.lime.ridge);
        cfg.xai.lime.top_k = get<int>(l, "top_k", "xai.lime.", cfg.xai.lime.top_k);
        if (l["kernel_width"] && !l["kernel_width"].IsNull()) {
          cfg.xai.lime.kernel_width = l["kernel_width"].as<double>();
        }
      }
      if (const YAML::Node s = x["shap"]) {
        cfg.xai.shap.n_coalitions = get<int>(s, "n_coalitions", "xai.shap.", cfg.xai.shap.n_coalitions);
      }
      cfg.xai.pca_variance_target = get<double>(x, "pca_variance_target", "xai.", cfg.xai.pca_variance_target);
    }
    if (const YAML::Node t = root["triage"]) {
      cfg.triage.recover_window = get<double>(t, "recover_window", "triage.", cfg.triage.recover_window);
      cfg.triage.low_traffic_percentile =
          get<double>(t, "low_traffic_percentile", "triage.", cfg.triage.low_traffic_percentile);
    }
    apply_seed(cfg, get<std::uint64_t>(root, "seed", "", 0));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_run_config(read_file(path));
}

}  // namespace trafficguard::config
