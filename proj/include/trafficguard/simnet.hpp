#pragma once

// Discrete-time signalized grid simulator with lane-area detectors.
//
// Vehicles travel along a lane at free-flow speed, then join a vertical queue
// at the stop line. Queued vehicles are halted; the queue is the jam. During
// green the queue head discharges at the lane's saturation flow and moves to
// a lane of the neighbouring intersection, or leaves the network at the grid
// boundary. A lane with no room blocks upstream discharge (spillback) and
// drops external arrivals.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trafficguard/common.hpp"

namespace trafficguard::simnet {

inline constexpr int kFeatureCount = 23;
inline constexpr int kUpdatePeriod = 10;  // seconds between controller updates
inline constexpr int kSampleInterval = 10;

// Side of the intersection a vehicle arrives from.
enum class Approach : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };
inline constexpr std::array<Approach, 4> kApproaches = {
    Approach::kNorth, Approach::kEast, Approach::kSouth, Approach::kWest};
char approach_letter(Approach a);

enum class Phase { kNsGreen, kEwGreen, kAllRed, kAllGreen };
std::string_view phase_name(Phase p);
Phase parse_phase(std::string_view name);
bool is_green(Phase p, Approach a);

enum class AttackMode { kAllGreen, kAllRed, kRandomEachUpdate };
std::string_view attack_mode_name(AttackMode m);
AttackMode parse_attack_mode(std::string_view name);

enum class Label { kNormal, kHacked };

// Feature names F1..F23, in column order.
const std::array<std::string, kFeatureCount>& feature_names();

struct PhaseStep {
  Phase phase = Phase::kNsGreen;
  int duration = 30;  // seconds; multiple of kUpdatePeriod
};

struct NetworkConfig {
  int grid_rows = 1;
  int grid_cols = 1;
  // Lanes on the N, E, S, W approaches. 5+4+5+4 = 18 monitored detectors.
  std::array<int, 4> lanes_per_approach = {5, 4, 5, 4};
  double lane_length = 150.0;
  double free_flow_speed = 13.89;
  double vehicle_length = 5.0;
  double min_gap = 2.5;
  double saturation_flow = 0.5;
  // arrival_rates[intersection][approach]: external Poisson intensity in
  // vehicles/second for the whole approach. Empty means all zero.
  std::vector<std::array<double, 4>> arrival_rates;
  // Probabilities of turning left / going straight / turning right.
  std::array<double, 3> turn_probabilities = {0.2, 0.6, 0.2};
  std::vector<PhaseStep> program = {{Phase::kNsGreen, 30}, {Phase::kEwGreen, 30}};
  std::uint64_t seed = 0;

  int intersection_count() const { return grid_rows * grid_cols; }
  double vehicle_spacing() const { return vehicle_length + min_gap; }
  // Throws ConfigError on any violated invariant.
  void validate() const;
  // Stable text form used for the config digest.
  std::string canonical() const;
};

struct AttackEvent {
  int start = 0;
  int end = 0;
  int target = 0;
  AttackMode mode = AttackMode::kRandomEachUpdate;
};

struct LaneRef {
  int intersection = 0;
  Approach approach = Approach::kNorth;
  int lane = 0;
};

class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  int intersection_count() const { return config_.intersection_count(); }
  int lane_count() const { return static_cast<int>(lanes_.size()); }
  const LaneRef& lane(int index) const { return lanes_[index]; }
  int lane_index(int intersection, Approach a, int lane) const;
  // Incoming lanes of one intersection in detector order (N, E, S, W).
  std::vector<int> incoming_lanes(int intersection) const;
  // Intersection reached by leaving `intersection` towards side `toward`.
  std::optional<int> neighbor(int intersection, Approach toward) const;
  // Maximal total external arrival rate; ties go to the lowest id.
  int busiest() const { return busiest_; }
  double total_arrival_rate(int intersection) const;
  std::string detector_id(int lane_index) const;
  // Steps a vehicle needs to cover the lane at free-flow speed.
  int travel_steps() const { return travel_steps_; }
  int lane_capacity() const { return lane_capacity_; }

 private:
  NetworkConfig config_;
  std::vector<LaneRef> lanes_;
  std::vector<int> lane_offset_;  // first lane index per intersection
  int busiest_ = 0;
  int travel_steps_ = 1;
  int lane_capacity_ = 1;
};

Network build_network(const NetworkConfig& config);

struct DetectorRecord {
  int begin = 0;
  int end = 0;
  std::string detector_id;
  Label label = Label::kNormal;
  std::array<double, kFeatureCount> features{};
};

// Per-lane accumulator over one sampling interval.
struct DetectorAccumulator {
  struct HaltObservation {
    bool halted_in_interval = false;
    double elapsed_max = 0.0;   // longest continuous halt seen this interval
    double in_interval = 0.0;   // halted seconds inside this interval
    double lifetime = 0.0;      // halted seconds on this lane so far
  };
  int ticks = 0;
  double vehicle_seconds = 0.0;
  int entered = 0;
  int left = 0;
  std::unordered_set<std::uint64_t> seen;
  std::unordered_map<std::uint64_t, HaltObservation> halts;
  double moving_samples = 0.0;
  double halted_samples = 0.0;
  double occupancy_sum = 0.0;
  double occupancy_max = 0.0;
  double vehicles_sum = 0.0;
  double vehicles_max = 0.0;
  int started_halts = 0;
  double jam_vehicles_sum = 0.0;
  double jam_vehicles_max = 0.0;

  void mark_seen(std::uint64_t id);
};

struct MovingVehicle {
  std::uint64_t id = 0;
  int arrives_at = 0;  // time the vehicle reaches the stop line
};

struct QueuedVehicle {
  std::uint64_t id = 0;
  std::optional<int> halt_start;
  double halted_total = 0.0;
  Approach toward = Approach::kNorth;  // chosen outbound side
  int target_lane = 0;                 // lane within the downstream approach
};

struct LaneState {
  std::deque<MovingVehicle> moving;
  std::deque<QueuedVehicle> queue;
  double discharge_credit = 0.0;
  DetectorAccumulator detector;

  int vehicle_count() const { return static_cast<int>(moving.size() + queue.size()); }
};

class SimState {
 public:
  explicit SimState(const Network& network);

  const Network& network() const { return *network_; }
  int clock() const { return clock_; }
  Phase phase(int intersection) const { return phases_[intersection]; }
  const LaneState& lane(int index) const { return lanes_[index]; }
  std::uint64_t entered() const { return entered_; }
  std::uint64_t exited() const { return exited_; }
  std::uint64_t blocked_arrivals() const { return blocked_; }
  std::uint64_t vehicles_in_network() const;

  // Places a vehicle on a lane, arriving at the stop line at `arrives_at`.
  // Returns false when the lane is full.
  bool inject_vehicle(int lane_index, int arrives_at);
  // Forces the signal program; the phase still changes only at updates.
  void set_attacks(std::vector<AttackEvent> events);
  const std::vector<AttackEvent>& attacks() const { return attacks_; }

  // Advances one second. Controllers update when the clock is a multiple of
  // the update period.
  void step();

  // Phase sequence chosen at each controller update for one intersection.
  const std::vector<Phase>& phase_history(int intersection) const {
    return phase_history_[intersection];
  }

  // Closes the current interval and returns one record per incoming lane of
  // `intersection`, ordered by detector index. Labels are left NORMAL.
  std::vector<DetectorRecord> sample_detectors(int intersection, int interval_end);
  // Resets accumulators of lanes not sampled in this interval.
  void reset_detectors();

 private:
  void update_controllers();
  bool has_room(int lane_index) const;
  void route(QueuedVehicle& v, int intersection, Approach from);
  void enter_lane(int lane_index, std::uint64_t id, int arrives_at);

  const Network* network_;
  int clock_ = 0;
  std::vector<Phase> phases_;
  std::vector<std::vector<Phase>> phase_history_;
  std::vector<LaneState> lanes_;
  std::vector<AttackEvent> attacks_;
  Rng arrivals_rng_;
  Rng routing_rng_;
  Rng attack_rng_;
  std::uint64_t next_id_ = 1;
  std::uint64_t entered_ = 0;
  std::uint64_t exited_ = 0;
  std::uint64_t blocked_ = 0;
};

// Validates events against the network; throws ConfigError on unknown targets
// or empty intervals.
void validate_attacks(const Network& network, const std::vector<AttackEvent>& events);
void apply_attacks(SimState& state, const std::vector<AttackEvent>& events);

// True when [begin, end) overlaps an event targeting `intersection`.
bool interval_attacked(const std::vector<AttackEvent>& events, int intersection, int begin,
                       int end);

struct RecordLog {
  int monitored_intersection = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<AttackEvent> timeline;  // events at the monitored intersection
  std::vector<DetectorRecord> records;
  int detectors_per_batch = 0;
};

// Runs the full loop and collects the monitored intersection's records.
// `monitored` defaults to the busiest intersection.
RecordLog run_scenario(const NetworkConfig& config, const std::vector<AttackEvent>& attacks,
                       int duration, std::optional<int> monitored = std::nullopt);

// CSV header `begin,end,id,target,F1..F23`; target 1 = normal, 0 = hacked.
std::string records_to_csv(const std::vector<DetectorRecord>& records);
std::vector<DetectorRecord> records_from_csv(std::string_view text);

// Writes `<stem>.csv` and `<stem>.manifest.json`.
void save_record_log(const RecordLog& log, const std::filesystem::path& csv_path);
RecordLog load_record_log(const std::filesystem::path& csv_path);

}  // namespace trafficguard::simnet
