#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hv2i::highway {

// Stable integer encoding 0..4, used by the one-hot V2I state slot, the
// DDQN-AD output head and the JSONL traces.
enum class AdAction : int {
  kFaster = 0,
  kSlower = 1,
  kIdle = 2,
  kLaneLeft = 3,
  kLaneRight = 4,
};

inline constexpr int kNumAdActions = 5;
inline constexpr std::array<AdAction, kNumAdActions> kAllAdActions = {
    AdAction::kFaster, AdAction::kSlower, AdAction::kIdle, AdAction::kLaneLeft,
    AdAction::kLaneRight};

std::string_view to_string(AdAction action);
std::optional<AdAction> ad_action_from_string(std::string_view name);
AdAction ad_action_from_index(int index);
inline int to_index(AdAction action) { return static_cast<int>(action); }

struct RoadConfig {
  double length = 3000.0;
  int n_lanes = 4;
  double lane_width = 4.0;
  double v_min = 10.0;
  double v_max = 40.0;
  double dt = 0.5;
  double accel_delta = 2.0;  // m/s per FASTER/SLOWER step
  double lane_change_duration = 1.0;
  double vehicle_length = 5.0;
  double vehicle_width = 2.0;
  int max_steps = 100;  // horizon; reaching it raises the truncation event

  void validate() const;
  int lane_change_steps() const;  // ceil(lane_change_duration / dt), at least 1
  double lane_center(int lane) const { return lane * lane_width; }
};

// Lane 0 is the rightmost lane; y grows to the left.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double psi = 0.0;
  int lane = 0;
  bool collided = false;
  bool on_road = true;
  bool exited = false;  // passed the end of the road

  int target_lane = 0;
  int lane_change_steps_left = 0;
  double lateral_rate = 0.0;  // m/s, non-zero only mid lane change

  bool active() const { return on_road && !collided && !exited; }
  bool changing_lane() const { return lane_change_steps_left > 0; }
};

struct World {
  std::vector<VehicleState> vehicles;
  int step_index = 0;
};

struct Event {
  bool collision = false;
  bool off_road = false;
  bool truncation = false;  // horizon reached this step
  bool reached_end = false;
};

struct StepResult {
  World world;
  std::vector<Event> events;
};

// Advances every active vehicle by one dt. Inactive vehicles are frozen and
// take no part in collision checks. Throws ContractViolation when
// |actions| != |vehicles| and SimulationCorruption on non-finite kinematics.
StepResult step(const World& world, std::span<const AdAction> actions, const RoadConfig& cfg);

enum class RightLaneTerm { kLinear, kStep };

struct AdRewardWeights {
  double c1 = 0.4;  // full-speed reward
  double c2 = 5.0;  // collision penalty
  double c3 = 0.1;  // right-lane reward
  double c4 = 0.5;  // on-road reward
  RightLaneTerm right_lane = RightLaneTerm::kLinear;

  void validate() const;
};

// Right-lane indicator in [0, 1]: 1 on lane 0.
double right_lane_indicator(int lane, const RoadConfig& cfg, RightLaneTerm mode);

// c1*(v - v_min)/(v_max - v_min) - c2*collided + c3*right_lane + c4*on_road.
// Speeds outside [v_min, v_max] are clamped (with a logged warning).
double ad_reward(const VehicleState& ego, const AdRewardWeights& weights, const RoadConfig& cfg);

struct ObservedVehicle {
  bool present = false;
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double psi = 0.0;
};

// Row 0 is the ego: x = 0, y = absolute lateral position, v, psi.
// Rows 1..n are the nearest active vehicles by Euclidean distance with
// (x, y) given as offsets from the ego; missing vehicles are zero rows
// with present = false.
struct AdObservation {
  std::vector<ObservedVehicle> rows;

  std::size_t size() const { return rows.size(); }
  std::vector<double> flatten() const;  // (x, y, v, psi) per row
};

AdObservation observe(const World& world, std::size_t ego_index, std::size_t n_observed);

// IDM-style car following, discretised onto the action set. Vehicles keep
// their lane. target_speeds is indexed like world.vehicles.
struct CarFollowingParams {
  double max_accel = 2.0;
  double comfortable_decel = 3.0;
  double min_gap = 4.0;
  double time_headway = 1.2;
  double exponent = 4.0;
};

AdAction car_following_action(const World& world, std::size_t index, double target_speed,
                              const RoadConfig& cfg, const CarFollowingParams& params = {});

}  // namespace hv2i::highway
