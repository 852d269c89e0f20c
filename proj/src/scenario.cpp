#include "hv2i/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "hv2i/errors.hpp"
#include "hv2i/rng.hpp"

namespace hv2i {

namespace {

radio::BaseStation make_station(int id, radio::Tier tier, radio::Position pos, const RadioSection& r) {
  radio::BaseStation bs;
  bs.id = id;
  bs.tier = tier;
  bs.position = pos;
  bs.antenna_height = r.antenna_height;
  if (tier == radio::Tier::kRf) {
    bs.capacity = r.rf_capacity;
    bs.tx_power = r.rf_tx_power;
    bs.tx_gain = r.rf_tx_gain;
    bs.rx_gain = r.rf_rx_gain;
    bs.carrier_freq = r.rf_frequency;
    bs.bandwidth = r.rf_bandwidth;
  } else {
    bs.capacity = r.thz_capacity;
    bs.tx_power = r.thz_tx_power;
    bs.tx_gain = r.thz_tx_gain;
    bs.rx_gain = r.thz_rx_gain;
    bs.carrier_freq = r.thz_frequency;
    bs.bandwidth = r.thz_bandwidth;
  }
  return bs;
}

}  // namespace

Scenario generate_scenario(std::uint64_t seed, const RunConfig& cfg) {
  const auto& road = cfg.highway.road;
  if (!(road.length > 0)) throw ConfigError("scenario needs a road of positive length");
  cfg.validate();

  Scenario s;
  s.n_avs = cfg.campaign.n_avs;
  s.n_rbs = cfg.campaign.n_rbs;
  s.n_tbs = cfg.campaign.n_tbs;
  s.desired_velocity = cfg.campaign.desired_velocity;

  auto rng = make_rng(seed, Stream::kScenario);
  std::uniform_real_distribution<double> along(0.0, road.length);
  const double right_y = -0.5 * road.lane_width - cfg.campaign.roadside_margin;
  const double left_y = (road.n_lanes - 0.5) * road.lane_width + cfg.campaign.roadside_margin;

  auto place = [&](radio::Tier tier, int count) {
    std::vector<double> xs(static_cast<std::size_t>(count));
    for (auto& x : xs) x = along(rng);
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double y = i % 2 == 0 ? right_y : left_y;
      const int id = static_cast<int>(s.stations.size());
      s.stations.push_back(make_station(id, tier, {xs[i], y}, cfg.radio));
    }
  };
  place(radio::Tier::kRf, s.n_rbs);
  place(radio::Tier::kThz, s.n_tbs);
  return s;
}

Traffic spawn_traffic(const Scenario& scenario, const RunConfig& cfg, std::mt19937_64& rng) {
  const auto& road = cfg.highway.road;
  const int n = scenario.n_avs;
  std::uniform_int_distribution<int> lane_dist(0, road.n_lanes - 1);
  std::uniform_real_distribution<double> speed_jitter(-5.0, 5.0);

  Traffic t;
  t.world.vehicles.reserve(static_cast<std::size_t>(n));
  t.target_speeds.reserve(static_cast<std::size_t>(n));

  auto add = [&](double x, int lane, double v) {
    highway::VehicleState veh;
    veh.x = x;
    veh.lane = lane;
    veh.target_lane = lane;
    veh.y = road.lane_center(lane);
    veh.v = v;
    t.world.vehicles.push_back(veh);
    t.target_speeds.push_back(v);
  };

  const double ego_x = std::min(200.0, 0.1 * road.length);
  add(ego_x, lane_dist(rng), scenario.desired_velocity);

  const double lo = std::max(0.0, ego_x - 200.0);
  const double hi = std::min(road.length, ego_x + 400.0);
  std::uniform_real_distribution<double> x_dist(lo, hi);
  constexpr int kMaxAttempts = 10'000;
  for (int i = 1; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const double x = x_dist(rng);
      const int lane = lane_dist(rng);
      const bool clear = std::none_of(t.world.vehicles.begin(), t.world.vehicles.end(), [&](const auto& o) {
        return o.lane == lane && std::abs(o.x - x) < kMinSpawnGap;
      });
      if (!clear) continue;
      const double v = std::clamp(scenario.desired_velocity + speed_jitter(rng), road.v_min, road.v_max);
      add(x, lane, v);
      placed = true;
    }
    if (!placed) {
      throw ConfigError("cannot place " + std::to_string(n) + " vehicles on the spawn window with " +
                        std::to_string(static_cast<int>(kMinSpawnGap)) + " m spacing");
    }
  }
  return t;
}

}  // namespace hv2i
