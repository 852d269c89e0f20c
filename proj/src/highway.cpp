#include "hv2i/highway.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "hv2i/errors.hpp"

namespace hv2i::highway {

namespace {

bool finite_kinematics(const VehicleState& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.v) && std::isfinite(s.psi) &&
         std::isfinite(s.lateral_rate);
}

bool boxes_overlap(const VehicleState& a, const VehicleState& b, const RoadConfig& cfg) {
  return std::abs(a.x - b.x) < cfg.vehicle_length && std::abs(a.y - b.y) < cfg.vehicle_width;
}

void begin_lane_change(VehicleState& s, int direction, const RoadConfig& cfg) {
  const int steps = cfg.lane_change_steps();
  s.target_lane = s.lane + direction;
  s.lane_change_steps_left = steps;
  s.lateral_rate = direction * cfg.lane_width / (steps * cfg.dt);
  if (s.target_lane < 0 || s.target_lane >= cfg.n_lanes) {
    s.on_road = false;
  }
}

}  // namespace

std::string_view to_string(AdAction action) {
  switch (action) {
    case AdAction::kFaster:
      return "FASTER";
    case AdAction::kSlower:
      return "SLOWER";
    case AdAction::kIdle:
      return "IDLE";
    case AdAction::kLaneLeft:
      return "LANE_LEFT";
    case AdAction::kLaneRight:
      return "LANE_RIGHT";
  }
  return "IDLE";
}

std::optional<AdAction> ad_action_from_string(std::string_view name) {
  for (AdAction a : kAllAdActions) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

AdAction ad_action_from_index(int index) {
  if (index < 0 || index >= kNumAdActions) {
    throw ContractViolation("AD action index out of range: " + std::to_string(index));
  }
  return static_cast<AdAction>(index);
}

void RoadConfig::validate() const {
  if (!(length > 0.0)) throw ConfigError("highway.length must be > 0");
  if (n_lanes < 1) throw ConfigError("highway.n_lanes must be >= 1");
  if (!(lane_width > 0.0)) throw ConfigError("highway.lane_width must be > 0");
  if (!(v_min < v_max)) throw ConfigError("highway.v_min must be < v_max");
  if (v_min < 0.0) throw ConfigError("highway.v_min must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("highway.dt must be > 0");
  if (!(accel_delta > 0.0)) throw ConfigError("highway.accel_delta must be > 0");
  if (!(lane_change_duration > 0.0)) throw ConfigError("highway.lane_change_duration must be > 0");
  if (!(vehicle_length > 0.0) || !(vehicle_width > 0.0)) {
    throw ConfigError("highway vehicle dimensions must be > 0");
  }
  if (max_steps < 1) throw ConfigError("highway.max_steps must be >= 1");
}

int RoadConfig::lane_change_steps() const {
  return std::max(1, static_cast<int>(std::ceil(lane_change_duration / dt - 1e-9)));
}

StepResult step(const World& world, std::span<const AdAction> actions, const RoadConfig& cfg) {
  if (actions.size() != world.vehicles.size()) {
    throw ContractViolation("step: " + std::to_string(actions.size()) + " actions for " +
                            std::to_string(world.vehicles.size()) + " vehicles");
  }
  for (const auto& s : world.vehicles) {
    if (!finite_kinematics(s)) throw SimulationCorruption("step: non-finite vehicle state on input");
  }

  StepResult out{world, std::vector<Event>(world.vehicles.size())};
  auto& vehicles = out.world.vehicles;
  std::vector<bool> moved(vehicles.size(), false);

  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    VehicleState& s = vehicles[i];
    if (!s.active()) continue;
    moved[i] = true;

    switch (actions[i]) {
      case AdAction::kFaster:
        s.v = std::min(s.v + cfg.accel_delta, cfg.v_max);
        break;
      case AdAction::kSlower:
        s.v = std::max(s.v - cfg.accel_delta, cfg.v_min);
        break;
      case AdAction::kIdle:
        break;
      case AdAction::kLaneLeft:
        if (!s.changing_lane()) begin_lane_change(s, +1, cfg);
        break;
      case AdAction::kLaneRight:
        if (!s.changing_lane()) begin_lane_change(s, -1, cfg);
        break;
    }
    if (!s.on_road) out.events[i].off_road = true;

    s.x += s.v * cfg.dt;
    if (s.changing_lane()) {
      s.y += s.lateral_rate * cfg.dt;
      if (--s.lane_change_steps_left == 0) {
        s.lane = s.target_lane;
        s.y = cfg.lane_center(s.lane);
        s.lateral_rate = 0.0;
      }
    }
    s.psi = std::atan2(s.lateral_rate, s.v);
  }

  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    if (!moved[i] || !vehicles[i].on_road) continue;
    for (std::size_t j = i + 1; j < vehicles.size(); ++j) {
      if (!moved[j] || !vehicles[j].on_road) continue;
      if (boxes_overlap(vehicles[i], vehicles[j], cfg)) {
        out.events[i].collision = out.events[j].collision = true;
      }
    }
  }

  out.world.step_index = world.step_index + 1;
  const bool horizon = out.world.step_index >= cfg.max_steps;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    if (!moved[i]) continue;
    VehicleState& s = vehicles[i];
    if (!finite_kinematics(s)) throw SimulationCorruption("step: non-finite vehicle state produced");
    if (out.events[i].collision) s.collided = true;
    if (s.on_road && !s.collided && s.x >= cfg.length) {
      s.exited = true;
      out.events[i].reached_end = true;
    }
    out.events[i].truncation = horizon && s.active();
  }
  return out;
}

void AdRewardWeights::validate() const {
  if (c1 < 0 || c2 < 0 || c3 < 0 || c4 < 0) throw ConfigError("reward weights must be >= 0");
  if (!(c2 > std::max({c1, c3, c4}))) {
    throw ConfigError("collision penalty c2 must exceed c1, c3 and c4");
  }
}

double right_lane_indicator(int lane, const RoadConfig& cfg, RightLaneTerm mode) {
  if (lane < 0 || lane >= cfg.n_lanes) return 0.0;
  if (mode == RightLaneTerm::kStep || cfg.n_lanes == 1) return lane == 0 ? 1.0 : 0.0;
  return static_cast<double>(cfg.n_lanes - 1 - lane) / static_cast<double>(cfg.n_lanes - 1);
}

double ad_reward(const VehicleState& ego, const AdRewardWeights& weights, const RoadConfig& cfg) {
  if (!std::isfinite(ego.v)) throw ContractViolation("ad_reward: non-finite speed");
  double v = ego.v;
  if (v < cfg.v_min || v > cfg.v_max) {
    spdlog::warn("ad_reward: speed {} outside [{}, {}], clamping", v, cfg.v_min, cfg.v_max);
    v = std::clamp(v, cfg.v_min, cfg.v_max);
  }
  const double speed_term = (v - cfg.v_min) / (cfg.v_max - cfg.v_min);
  const double collided = ego.collided ? 1.0 : 0.0;
  const double on_road = ego.on_road ? 1.0 : 0.0;
  const double right_lane = ego.on_road ? right_lane_indicator(ego.lane, cfg, weights.right_lane) : 0.0;
  return weights.c1 * speed_term - weights.c2 * collided + weights.c3 * right_lane +
         weights.c4 * on_road;
}

std::vector<double> AdObservation::flatten() const {
  std::vector<double> flat;
  flat.reserve(rows.size() * 4);
  for (const auto& r : rows) {
    flat.insert(flat.end(), {r.x, r.y, r.v, r.psi});
  }
  return flat;
}

AdObservation observe(const World& world, std::size_t ego_index, std::size_t n_observed) {
  if (ego_index >= world.vehicles.size()) {
    throw ContractViolation("observe: ego index " + std::to_string(ego_index) + " out of range");
  }
  const VehicleState& ego = world.vehicles[ego_index];

  std::vector<std::pair<double, std::size_t>> candidates;
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    if (i == ego_index || !world.vehicles[i].active()) continue;
    const double dx = world.vehicles[i].x - ego.x;
    const double dy = world.vehicles[i].y - ego.y;
    candidates.emplace_back(std::hypot(dx, dy), i);
  }
  // pair ordering breaks distance ties by vehicle index
  std::sort(candidates.begin(), candidates.end());

  AdObservation obs;
  obs.rows.reserve(n_observed + 1);
  obs.rows.push_back({true, 0.0, ego.y, ego.v, ego.psi});
  for (std::size_t k = 0; k < n_observed; ++k) {
    if (k < candidates.size()) {
      const VehicleState& o = world.vehicles[candidates[k].second];
      obs.rows.push_back({true, o.x - ego.x, o.y - ego.y, o.v, o.psi});
    } else {
      obs.rows.push_back({});
    }
  }
  return obs;
}

AdAction car_following_action(const World& world, std::size_t index, double target_speed,
                              const RoadConfig& cfg, const CarFollowingParams& params) {
  const VehicleState& self = world.vehicles.at(index);
  const VehicleState* leader = nullptr;
  for (std::size_t j = 0; j < world.vehicles.size(); ++j) {
    const VehicleState& o = world.vehicles[j];
    if (j == index || !o.on_road || o.exited) continue;
    if (std::abs(o.y - self.y) >= cfg.vehicle_width || o.x <= self.x) continue;
    if (leader == nullptr || o.x < leader->x) leader = &o;
  }

  const double v = self.v;
  double accel = params.max_accel * (1.0 - std::pow(v / std::max(target_speed, 1e-6), params.exponent));
  if (leader != nullptr) {
    const double gap = leader->x - self.x - cfg.vehicle_length;
    if (gap <= params.min_gap) return AdAction::kSlower;
    const double closing = v - leader->v;
    const double desired_gap =
        params.min_gap +
        std::max(0.0, v * params.time_headway +
                          v * closing / (2.0 * std::sqrt(params.max_accel * params.comfortable_decel)));
    accel -= params.max_accel * (desired_gap / gap) * (desired_gap / gap);
  }

  if (accel < -1.0 || v > target_speed + 0.5 * cfg.accel_delta) return AdAction::kSlower;
  if (accel > 0.2 && v + cfg.accel_delta <= target_speed + 0.5 * cfg.accel_delta) {
    return AdAction::kFaster;
  }
  return AdAction::kIdle;
}

}  // namespace hv2i::highway
