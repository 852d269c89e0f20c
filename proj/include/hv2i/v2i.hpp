#pragma once

#include <array>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hv2i/highway.hpp"
#include "hv2i/radio.hpp"

namespace hv2i::v2i {

// Stable integer encoding 0..2 (DDQN output head order).
enum class V2IAction : int {
  kMaxWeightedRate = 0,  // a1
  kCapacityAware = 1,    // a2
  kMaxRate = 2,          // a3
};

inline constexpr int kNumV2IActions = 3;

std::string_view to_string(V2IAction action);
std::optional<V2IAction> v2i_action_from_string(std::string_view name);
V2IAction v2i_action_from_index(int index);

struct V2IState {
  int n_rbs = 0;  // reachable RF stations
  int n_tbs = 0;  // reachable THz stations
  highway::AdAction ad_action = highway::AdAction::kIdle;
};

inline constexpr int kEncodedStateDim = 2 + highway::kNumAdActions;

// [n_rbs / total_rbs, n_tbs / total_tbs, one-hot(ad_action) x 5]. A zero
// total encodes its count as 0.
std::array<double, kEncodedStateDim> encode(const V2IState& state, int total_rbs, int total_tbs);

// Index of the hot AD slot in an encoded state; throws unless exactly one
// slot is hot.
highway::AdAction decode_ad_action(std::span<const double> encoded);

struct Candidate {
  int station_id = 0;
  radio::Tier tier = radio::Tier::kRf;
  int capacity = 1;
  double sinr = 0.0;
  double rate = 0.0;  // bit/s
};

struct ReachableSets {
  std::vector<Candidate> rbs;
  std::vector<Candidate> tbs;

  std::size_t total() const { return rbs.size() + tbs.size(); }
  std::vector<Candidate> all() const;  // rbs then tbs, each sorted by id
};

// A station is reachable iff its SINR to this AV is >= gamma_th (linear).
// sinr_row is indexed by station id.
ReachableSets reachable_sets(std::span<const radio::BaseStation> stations,
                             std::span<const double> sinr_row, double gamma_th);

struct HandoverPenalty {
  double rf = 0.1;
  double thz = 0.3;

  double of(radio::Tier tier) const { return tier == radio::Tier::kRf ? rf : thz; }
};

struct AssociationRecord {
  std::optional<int> serving_bs;
  std::deque<bool> window;  // trailing handover flags, newest at the back
  int ho_count_window = 0;
  double xi = 0.0;
};

struct AssociationOutcome {
  std::optional<int> station_id;
  bool handover = false;
  bool outage = false;
  double rate = 0.0;           // Shannon rate at the chosen station
  double weighted_rate = 0.0;  // weighted rate realised at the chosen station
};

// loads[id] is n_i for station id (the orchestrator passes the AVs it would
// serve with this AV attached, from the previous step's associations).
// The HO penalty is realised only when the choice is a handover.
AssociationOutcome apply_v2i_action(V2IAction action, const ReachableSets& reachable,
                                    std::span<const int> loads, const HandoverPenalty& penalty,
                                    const AssociationRecord& prev);

// wr * (1 - min(1, xi))
double v2i_reward(double weighted_rate, double xi);

AssociationRecord update_handover_rate(AssociationRecord record, bool handover, int window_len);

}  // namespace hv2i::v2i
