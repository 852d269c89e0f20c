#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hv2i/config.hpp"
#include "hv2i/highway.hpp"
#include "hv2i/radio.hpp"

namespace hv2i {

// Fixed base-station layout for one campaign. Station ids equal their index:
// RF stations first, then THz.
struct Scenario {
  int n_avs = 0;
  int n_rbs = 0;
  int n_tbs = 0;
  double desired_velocity = 0.0;
  std::vector<radio::BaseStation> stations;
};

// x uniform on [0, length], sorted per tier, sides alternating (right side
// first) at roadside_margin beyond the outer lane edges. Deterministic in seed.
Scenario generate_scenario(std::uint64_t seed, const RunConfig& cfg);

struct Traffic {
  highway::World world;
  std::vector<double> target_speeds;  // per vehicle; index 0 is the ego
};

// Ego (index 0) near the road start in a random lane at the desired
// velocity; the others inside a window around it at desired +- 5 m/s with
// at least kMinSpawnGap metres between same-lane vehicles.
inline constexpr double kMinSpawnGap = 25.0;
Traffic spawn_traffic(const Scenario& scenario, const RunConfig& cfg, std::mt19937_64& rng);

}  // namespace hv2i
