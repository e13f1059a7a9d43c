#include "trafficguard/simnet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "text_util.hpp"

namespace trafficguard::simnet {

namespace {

Approach opposite(Approach a) { return static_cast<Approach>((static_cast<int>(a) + 2) % 4); }

Approach rotate(Approach a, int quarter_turns) {
  return static_cast<Approach>((static_cast<int>(a) + quarter_turns) % 4);
}

// Knuth's multiplication method; rates here are a few vehicles per second.
int poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  int k = 0;
  double p = uniform01(rng);
  while (p > limit) {
    ++k;
    p *= uniform01(rng);
  }
  return k;
}

}  // namespace

char approach_letter(Approach a) {
  static constexpr char kLetters[] = {'N', 'E', 'S', 'W'};
  return kLetters[static_cast<int>(a)];
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::kNsGreen: return "NS_GREEN";
    case Phase::kEwGreen: return "EW_GREEN";
    case Phase::kAllRed: return "ALL_RED";
    case Phase::kAllGreen: return "ALL_GREEN";
  }
  return "?";
}

Phase parse_phase(std::string_view name) {
  for (Phase p : {Phase::kNsGreen, Phase::kEwGreen, Phase::kAllRed, Phase::kAllGreen}) {
    if (phase_name(p) == name) return p;
  }
  throw ConfigError("unknown phase '" + std::string(name) + "'");
}

bool is_green(Phase p, Approach a) {
  switch (p) {
    case Phase::kAllGreen: return true;
    case Phase::kAllRed: return false;
    case Phase::kNsGreen: return a == Approach::kNorth || a == Approach::kSouth;
    case Phase::kEwGreen: return a == Approach::kEast || a == Approach::kWest;
  }
  return false;
}

std::string_view attack_mode_name(AttackMode m) {
  switch (m) {
    case AttackMode::kAllGreen: return "ALL_GREEN";
    case AttackMode::kAllRed: return "ALL_RED";
    case AttackMode::kRandomEachUpdate: return "RANDOM_EACH_UPDATE";
  }
  return "?";
}

AttackMode parse_attack_mode(std::string_view name) {
  for (AttackMode m : {AttackMode::kAllGreen, AttackMode::kAllRed, AttackMode::kRandomEachUpdate}) {
    if (attack_mode_name(m) == name) return m;
  }
  throw ConfigError("unknown attack mode '" + std::string(name) + "'");
}

const std::array<std::string, kFeatureCount>& feature_names() {
  static const std::array<std::string, kFeatureCount> kNames = {
      "sampledSeconds",        "nVehEntered",           "nVehLeft",
      "nVehSeen",              "meanSpeed",             "meanTimeLoss",
      "meanOccupancy",         "maxOccupancy",          "meanVehicleNumber",
      "maxVehicleNumber",      "meanHaltingDuration",   "maxHaltingDuration",
      "haltingDurationSum",    "meanIntervalHaltingDuration",
      "maxIntervalHaltingDuration", "intervalHaltingDurationSum",
      "startedHalts",          "meanJamLengthInVehicles", "meanJamLengthInMeters",
      "maxJamLengthInVehicles", "maxJamLengthInMeters", "jamLengthInVehiclesSum",
      "jamLengthInMetersSum"};
  return kNames;
}

// ---------------------------------------------------------------------------
// NetworkConfig

void NetworkConfig::validate() const {
  if (grid_rows < 1 || grid_cols < 1) throw ConfigError("grid dimensions must be >= 1");
  for (int n : lanes_per_approach) {
    if (n < 1) throw ConfigError("every approach needs at least one lane");
  }
  if (!(vehicle_length > 0.0) || !(min_gap >= 0.0)) {
    throw ConfigError("vehicle_length must be > 0 and min_gap >= 0");
  }
  if (!(lane_length > vehicle_spacing())) {
    throw ConfigError("lane_length must exceed vehicle_length + min_gap");
  }
  if (!(free_flow_speed > 0.0)) throw ConfigError("free_flow_speed must be > 0");
  if (!(saturation_flow > 0.0)) throw ConfigError("saturation_flow must be > 0");
  if (!arrival_rates.empty() &&
      static_cast<int>(arrival_rates.size()) != intersection_count()) {
    throw ConfigError("arrival_rates must have one entry per intersection");
  }
  for (const auto& rates : arrival_rates) {
    for (double r : rates) {
      if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("arrival rates must be finite and >= 0");
    }
  }
  double turn_sum = 0.0;
  for (double p : turn_probabilities) {
    if (!(p >= 0.0)) throw ConfigError("turn probabilities must be >= 0");
    turn_sum += p;
  }
  if (std::abs(turn_sum - 1.0) > 1e-9) throw ConfigError("turn probabilities must sum to 1");
  if (program.empty()) throw ConfigError("signal program is empty");
  for (const auto& step : program) {
    if (step.duration <= 0 || step.duration % kUpdatePeriod != 0) {
      throw ConfigError("phase durations must be positive multiples of 10 s");
    }
  }
}

std::string NetworkConfig::canonical() const {
  std::ostringstream os;
  os << "grid=" << grid_rows << "x" << grid_cols << ";lanes=";
  for (int n : lanes_per_approach) os << n << ",";
  os << ";lane_length=" << detail::format_double(lane_length)
     << ";free_flow_speed=" << detail::format_double(free_flow_speed)
     << ";vehicle_length=" << detail::format_double(vehicle_length)
     << ";min_gap=" << detail::format_double(min_gap)
     << ";saturation_flow=" << detail::format_double(saturation_flow) << ";rates=";
  for (const auto& rates : arrival_rates) {
    for (double r : rates) os << detail::format_double(r) << ",";
    os << "|";
  }
  os << ";turns=";
  for (double p : turn_probabilities) os << detail::format_double(p) << ",";
  os << ";program=";
  for (const auto& step : program) os << phase_name(step.phase) << ":" << step.duration << ",";
  os << ";seed=" << seed;
  return os.str();
}

// ---------------------------------------------------------------------------
// Network

Network::Network(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.arrival_rates.empty()) {
    config_.arrival_rates.assign(config_.intersection_count(), {0.0, 0.0, 0.0, 0.0});
  }
  for (int i = 0; i < config_.intersection_count(); ++i) {
    lane_offset_.push_back(static_cast<int>(lanes_.size()));
    for (Approach a : kApproaches) {
      for (int l = 0; l < config_.lanes_per_approach[static_cast<int>(a)]; ++l) {
        lanes_.push_back({i, a, l});
      }
    }
  }
  double best = -1.0;
  for (int i = 0; i < config_.intersection_count(); ++i) {
    const double total = total_arrival_rate(i);
    if (total > best + 1e-9) {
      best = total;
      busiest_ = i;
    }
  }
  travel_steps_ = std::max(1, static_cast<int>(std::ceil(config_.lane_length / config_.free_flow_speed)));
  lane_capacity_ = static_cast<int>(std::floor(config_.lane_length / config_.vehicle_spacing()));
}

int Network::lane_index(int intersection, Approach a, int lane) const {
  int idx = lane_offset_.at(intersection);
  for (int k = 0; k < static_cast<int>(a); ++k) idx += config_.lanes_per_approach[k];
  return idx + lane;
}

std::vector<int> Network::incoming_lanes(int intersection) const {
  const int count = std::accumulate(config_.lanes_per_approach.begin(),
                                    config_.lanes_per_approach.end(), 0);
  std::vector<int> out(count);
  std::iota(out.begin(), out.end(), lane_offset_.at(intersection));
  return out;
}

std::optional<int> Network::neighbor(int intersection, Approach toward) const {
  int row = intersection / config_.grid_cols;
  int col = intersection % config_.grid_cols;
  switch (toward) {
    case Approach::kNorth: --row; break;
    case Approach::kSouth: ++row; break;
    case Approach::kEast: ++col; break;
    case Approach::kWest: --col; break;
  }
  if (row < 0 || col < 0 || row >= config_.grid_rows || col >= config_.grid_cols) {
    return std::nullopt;
  }
  return row * config_.grid_cols + col;
}

double Network::total_arrival_rate(int intersection) const {
  const auto& r = config_.arrival_rates.at(intersection);
  return r[0] + r[1] + r[2] + r[3];
}

std::string Network::detector_id(int lane_index) const {
  const LaneRef& ref = lanes_.at(lane_index);
  return "i" + std::to_string(ref.intersection) + "_" + approach_letter(ref.approach) + "_" +
         std::to_string(ref.lane);
}

Network build_network(const NetworkConfig& config) { return Network(config); }

// ---------------------------------------------------------------------------
// SimState

void DetectorAccumulator::mark_seen(std::uint64_t id) { seen.insert(id); }

SimState::SimState(const Network& network)
    : network_(&network),
      phases_(network.intersection_count(), network.config().program.front().phase),
      phase_history_(network.intersection_count()),
      lanes_(network.lane_count()),
      arrivals_rng_(make_rng(network.config().seed, RngStream::kArrivals)),
      routing_rng_(make_rng(network.config().seed, RngStream::kRouting)),
      attack_rng_(make_rng(network.config().seed, RngStream::kAttacks)) {}

std::uint64_t SimState::vehicles_in_network() const {
  std::uint64_t n = 0;
  for (const auto& lane : lanes_) n += static_cast<std::uint64_t>(lane.vehicle_count());
  return n;
}

bool SimState::has_room(int lane_index) const {
  const auto& cfg = network_->config();
  return (lanes_[lane_index].vehicle_count() + 1) * cfg.vehicle_spacing() <= cfg.lane_length;
}

void SimState::enter_lane(int lane_index, std::uint64_t id, int arrives_at) {
  LaneState& lane = lanes_[lane_index];
  lane.moving.push_back({id, arrives_at});
  ++lane.detector.entered;
  lane.detector.mark_seen(id);
}

bool SimState::inject_vehicle(int lane_index, int arrives_at) {
  if (lane_index < 0 || lane_index >= network_->lane_count()) {
    throw ConfigError("inject_vehicle: lane index out of range");
  }
  if (!has_room(lane_index)) return false;
  enter_lane(lane_index, next_id_++, arrives_at);
  ++entered_;
  return true;
}

void SimState::set_attacks(std::vector<AttackEvent> events) { attacks_ = std::move(events); }

void SimState::route(QueuedVehicle& v, int intersection, Approach from) {
  const auto& turns = network_->config().turn_probabilities;
  const double u = uniform01(routing_rng_);
  // Arriving from `from` means heading towards the opposite side.
  if (u < turns[0]) {
    v.toward = rotate(from, 1);  // left
  } else if (u < turns[0] + turns[1]) {
    v.toward = opposite(from);  // straight
  } else {
    v.toward = rotate(from, 3);  // right
  }
  if (network_->neighbor(intersection, v.toward)) {
    const int lanes = network_->config().lanes_per_approach[static_cast<int>(opposite(v.toward))];
    v.target_lane = static_cast<int>(uniform_index(routing_rng_, static_cast<std::size_t>(lanes)));
  }
}

void SimState::update_controllers() {
  const auto& program = network_->config().program;
  int cycle = 0;
  for (const auto& s : program) cycle += s.duration;
  int pos = clock_ % cycle;
  Phase base = program.back().phase;
  for (const auto& s : program) {
    if (pos < s.duration) {
      base = s.phase;
      break;
    }
    pos -= s.duration;
  }
  for (int i = 0; i < network_->intersection_count(); ++i) {
    Phase p = base;
    for (const auto& ev : attacks_) {
      if (ev.target != i || clock_ < ev.start || clock_ >= ev.end) continue;
      switch (ev.mode) {
        case AttackMode::kAllGreen: p = Phase::kAllGreen; break;
        case AttackMode::kAllRed: p = Phase::kAllRed; break;
        case AttackMode::kRandomEachUpdate:
          p = uniform01(attack_rng_) < 0.5 ? Phase::kAllGreen : Phase::kAllRed;
          break;
      }
    }
    phases_[i] = p;
    phase_history_[i].push_back(p);
  }
}

void SimState::step() {
  if (clock_ % kUpdatePeriod == 0) update_controllers();
  const int t = clock_ + 1;
  const auto& cfg = network_->config();

  // Vehicles reaching the stop line join the queue.
  for (int li = 0; li < network_->lane_count(); ++li) {
    LaneState& lane = lanes_[li];
    while (!lane.moving.empty() && lane.moving.front().arrives_at <= t) {
      QueuedVehicle q;
      q.id = lane.moving.front().id;
      lane.moving.pop_front();
      const LaneRef& ref = network_->lane(li);
      route(q, ref.intersection, ref.approach);
      lane.queue.push_back(q);
    }
  }

  // Discharge from the stop line during green.
  for (int li = 0; li < network_->lane_count(); ++li) {
    LaneState& lane = lanes_[li];
    const LaneRef& ref = network_->lane(li);
    if (!is_green(phases_[ref.intersection], ref.approach)) {
      lane.discharge_credit = 0.0;
      continue;
    }
    lane.discharge_credit += cfg.saturation_flow;
    while (lane.discharge_credit >= 1.0 && !lane.queue.empty()) {
      const QueuedVehicle& head = lane.queue.front();
      const auto next = network_->neighbor(ref.intersection, head.toward);
      if (next) {
        const int down = network_->lane_index(*next, opposite(head.toward), head.target_lane);
        if (!has_room(down)) break;
        enter_lane(down, head.id, t + network_->travel_steps());
      } else {
        ++exited_;
      }
      auto& obs = lane.detector.halts[head.id];
      obs.lifetime = head.halted_total;
      lane.detector.mark_seen(head.id);
      ++lane.detector.left;
      lane.queue.pop_front();
      lane.discharge_credit -= 1.0;
    }
    lane.discharge_credit = std::min(lane.discharge_credit, std::max(1.0, cfg.saturation_flow));
  }

  // External arrivals.
  for (int i = 0; i < network_->intersection_count(); ++i) {
    for (Approach a : kApproaches) {
      const double rate = cfg.arrival_rates[i][static_cast<int>(a)];
      const int n = poisson(arrivals_rng_, rate);
      const int lanes = cfg.lanes_per_approach[static_cast<int>(a)];
      for (int k = 0; k < n; ++k) {
        const int l = static_cast<int>(uniform_index(arrivals_rng_, static_cast<std::size_t>(lanes)));
        const int li = network_->lane_index(i, a, l);
        if (has_room(li)) {
          enter_lane(li, next_id_++, t + network_->travel_steps());
          ++entered_;
        } else {
          ++blocked_;
        }
      }
    }
  }

  // Halt clocks and detector snapshots.
  for (int li = 0; li < network_->lane_count(); ++li) {
    LaneState& lane = lanes_[li];
    DetectorAccumulator& acc = lane.detector;
    for (auto& q : lane.queue) {
      auto& obs = acc.halts[q.id];
      if (!q.halt_start) {
        q.halt_start = t;
        ++acc.started_halts;
      } else {
        q.halted_total += 1.0;
        obs.in_interval += 1.0;
      }
      obs.halted_in_interval = true;
      obs.elapsed_max = std::max(obs.elapsed_max, static_cast<double>(t - *q.halt_start));
      obs.lifetime = q.halted_total;
      acc.mark_seen(q.id);
    }
    for (const auto& m : lane.moving) acc.mark_seen(m.id);

    const double n = lane.vehicle_count();
    const double jam = static_cast<double>(lane.queue.size());
    const double occupancy = std::min(100.0, n * cfg.vehicle_length / cfg.lane_length * 100.0);
    ++acc.ticks;
    acc.vehicle_seconds += n;
    acc.vehicles_sum += n;
    acc.vehicles_max = std::max(acc.vehicles_max, n);
    acc.occupancy_sum += occupancy;
    acc.occupancy_max = std::max(acc.occupancy_max, occupancy);
    acc.moving_samples += static_cast<double>(lane.moving.size());
    acc.halted_samples += jam;
    acc.jam_vehicles_sum += jam;
    acc.jam_vehicles_max = std::max(acc.jam_vehicles_max, jam);
  }

  clock_ = t;
}

std::vector<DetectorRecord> SimState::sample_detectors(int intersection, int interval_end) {
  if (interval_end % kSampleInterval != 0) {
    throw ConfigError("sample_detectors: interval_end must be a multiple of 10 s");
  }
  const auto& cfg = network_->config();
  const double spacing = cfg.vehicle_spacing();
  std::vector<DetectorRecord> out;
  for (int li : network_->incoming_lanes(intersection)) {
    DetectorAccumulator& acc = lanes_[li].detector;
    DetectorRecord rec;
    rec.begin = interval_end - kSampleInterval;
    rec.end = interval_end;
    rec.detector_id = network_->detector_id(li);
    auto& f = rec.features;
    const double ticks = std::max(1, acc.ticks);
    const double seen = static_cast<double>(acc.seen.size());
    const double samples = acc.moving_samples + acc.halted_samples;

    double halted_vehicles = 0.0, elapsed_sum = 0.0, elapsed_max = 0.0;
    double interval_sum = 0.0, interval_max = 0.0, lifetime_sum = 0.0;
    for (const auto& [id, obs] : acc.halts) {
      lifetime_sum += obs.lifetime;
      if (!obs.halted_in_interval) continue;
      halted_vehicles += 1.0;
      elapsed_sum += obs.elapsed_max;
      elapsed_max = std::max(elapsed_max, obs.elapsed_max);
      interval_sum += obs.in_interval;
      interval_max = std::max(interval_max, obs.in_interval);
    }

    f[0] = acc.vehicle_seconds;
    f[1] = acc.entered;
    f[2] = acc.left;
    f[3] = seen;
    f[4] = samples > 0.0 ? cfg.free_flow_speed * acc.moving_samples / samples : cfg.free_flow_speed;
    f[5] = seen > 0.0 ? acc.halted_samples / seen : 0.0;
    // Averages of equal samples can round above their maximum.
    f[6] = std::min(acc.occupancy_sum / ticks, acc.occupancy_max);
    f[7] = acc.occupancy_max;
    f[8] = std::min(acc.vehicles_sum / ticks, acc.vehicles_max);
    f[9] = acc.vehicles_max;
    f[10] = halted_vehicles > 0.0 ? std::min(elapsed_sum / halted_vehicles, elapsed_max) : 0.0;
    f[11] = elapsed_max;
    f[12] = lifetime_sum;
    f[13] = halted_vehicles > 0.0 ? std::min(interval_sum / halted_vehicles, interval_max) : 0.0;
    f[14] = interval_max;
    f[15] = interval_sum;
    f[16] = acc.started_halts;
    f[17] = std::min(acc.jam_vehicles_sum / ticks, acc.jam_vehicles_max);
    f[18] = f[17] * spacing;
    f[19] = acc.jam_vehicles_max;
    f[20] = acc.jam_vehicles_max * spacing;
    f[21] = acc.jam_vehicles_sum;
    f[22] = acc.jam_vehicles_sum * spacing;
    out.push_back(std::move(rec));
    acc = DetectorAccumulator{};
  }
  return out;
}

void SimState::reset_detectors() {
  for (auto& lane : lanes_) lane.detector = DetectorAccumulator{};
}

// ---------------------------------------------------------------------------
// Attacks and scenarios

void validate_attacks(const Network& network, const std::vector<AttackEvent>& events) {
  for (const auto& ev : events) {
    if (ev.start < 0 || ev.start >= ev.end) {
      throw ConfigError("attack interval must satisfy 0 <= start < end");
    }
    if (ev.target < 0 || ev.target >= network.intersection_count()) {
      throw ConfigError("attack target " + std::to_string(ev.target) + " does not exist");
    }
  }
}

void apply_attacks(SimState& state, const std::vector<AttackEvent>& events) {
  validate_attacks(state.network(), events);
  state.set_attacks(events);
}

bool interval_attacked(const std::vector<AttackEvent>& events, int intersection, int begin,
                       int end) {
  return std::any_of(events.begin(), events.end(), [&](const AttackEvent& ev) {
    return ev.target == intersection && begin < ev.end && end > ev.start;
  });
}

RecordLog run_scenario(const NetworkConfig& config, const std::vector<AttackEvent>& attacks,
                       int duration, std::optional<int> monitored) {
  if (duration <= 0 || duration % kSampleInterval != 0) {
    throw ConfigError("duration must be a positive multiple of 10 s");
  }
  const Network network(config);
  SimState state(network);
  apply_attacks(state, attacks);
  const int target = monitored.value_or(network.busiest());
  if (target < 0 || target >= network.intersection_count()) {
    throw ConfigError("monitored intersection does not exist");
  }

  RecordLog log;
  log.monitored_intersection = target;
  log.seed = config.seed;
  log.config_digest = sha256_hex(config.canonical());
  for (const auto& ev : attacks) {
    if (ev.target == target) log.timeline.push_back(ev);
  }
  log.detectors_per_batch = static_cast<int>(network.incoming_lanes(target).size());
  log.records.reserve(static_cast<std::size_t>(duration / kSampleInterval) *
                      static_cast<std::size_t>(log.detectors_per_batch));
  while (state.clock() < duration) {
    state.step();
    if (state.clock() % kSampleInterval != 0) continue;
    auto batch = state.sample_detectors(target, state.clock());
    for (auto& rec : batch) {
      rec.label = interval_attacked(attacks, target, rec.begin, rec.end) ? Label::kHacked
                                                                         : Label::kNormal;
      log.records.push_back(std::move(rec));
    }
    state.reset_detectors();
  }
  return log;
}

// ---------------------------------------------------------------------------
// Persistence

std::string records_to_csv(const std::vector<DetectorRecord>& records) {
  std::string out = "begin,end,id,target";
  for (int j = 1; j <= kFeatureCount; ++j) out += ",F" + std::to_string(j);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.begin);
    out += ',';
    out += std::to_string(r.end);
    out += ',';
    out += r.detector_id;
    out += r.label == Label::kNormal ? ",1" : ",0";
    for (double v : r.features) {
      out += ',';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::vector<DetectorRecord> records_from_csv(std::string_view text) {
  std::vector<DetectorRecord> out;
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw DataError("record CSV is empty");
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto cells = detail::split(lines[ln], ',');
    if (cells.size() != 4 + kFeatureCount) {
      throw DataError("record CSV line " + std::to_string(ln + 1) + ": expected " +
                      std::to_string(4 + kFeatureCount) + " fields");
    }
    DetectorRecord r;
    r.begin = static_cast<int>(detail::parse_double(cells[0]));
    r.end = static_cast<int>(detail::parse_double(cells[1]));
    r.detector_id = std::string(cells[2]);
    r.label = cells[3] == "0" ? Label::kHacked : Label::kNormal;
    for (int j = 0; j < kFeatureCount; ++j) r.features[j] = detail::parse_double(cells[4 + j]);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::filesystem::path manifest_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".manifest.json");
  return p;
}

}  // namespace

void save_record_log(const RecordLog& log, const std::filesystem::path& csv_path) {
  const std::string csv = records_to_csv(log.records);
  write_file(csv_path, csv);
  nlohmann::ordered_json m;
  m["seed"] = log.seed;
  m["config_digest"] = log.config_digest;
  m["monitored_intersection"] = log.monitored_intersection;
  m["detectors_per_batch"] = log.detectors_per_batch;
  m["records"] = log.records.size();
  m["records_sha256"] = sha256_hex(csv);
  auto& tl = m["attack_timeline"] = nlohmann::ordered_json::array();
  for (const auto& ev : log.timeline) {
    tl.push_back({{"start", ev.start},
                  {"end", ev.end},
                  {"target", ev.target},
                  {"mode", std::string(attack_mode_name(ev.mode))}});
  }
  write_file(manifest_path(csv_path), m.dump(2) + "\n");
}

RecordLog load_record_log(const std::filesystem::path& csv_path) {
  RecordLog log;
  const std::string csv = read_file(csv_path);
  log.records = records_from_csv(csv);
  const auto mpath = manifest_path(csv_path);
  if (!std::filesystem::exists(mpath)) {
    throw IoError(mpath, "record manifest missing");
  }
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(mpath));
    if (m.at("records_sha256").get<std::string>() != sha256_hex(csv)) {
      throw DataError(csv_path.string() + ": content digest does not match its manifest");
    }
    log.seed = m.at("seed").get<std::uint64_t>();
    log.config_digest = m.at("config_digest").get<std::string>();
    log.monitored_intersection = m.at("monitored_intersection").get<int>();
    log.detectors_per_batch = m.at("detectors_per_batch").get<int>();
    for (const auto& ev : m.at("attack_timeline")) {
      log.timeline.push_back({ev.at("start").get<int>(), ev.at("end").get<int>(),
                              ev.at("target").get<int>(),
                              parse_attack_mode(ev.at("mode").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(mpath.string() + ": malformed manifest: " + e.what());
  }
  return log;
}

}  // namespace trafficguard::simnet
