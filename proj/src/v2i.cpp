#include "hv2i/v2i.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hv2i/errors.hpp"

namespace hv2i::v2i {

namespace {

// Strictly better score wins; equal scores keep the lower station id.
template <typename Score>
std::optional<Candidate> argmax_by(const std::vector<Candidate>& candidates, Score score) {
  std::optional<Candidate> best;
  double best_score = 0.0;
  for (const auto& c : candidates) {
    const double s = score(c);
    if (!best || s > best_score || (s == best_score && c.station_id < best->station_id)) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

int load_of(std::span<const int> loads, int station_id) {
  if (station_id < 0 || static_cast<std::size_t>(station_id) >= loads.size()) {
    throw ContractViolation("apply_v2i_action: no load entry for station " + std::to_string(station_id));
  }
  return loads[station_id];
}

}  // namespace

std::string_view to_string(V2IAction action) {
  switch (action) {
    case V2IAction::kMaxWeightedRate:
      return "A1";
    case V2IAction::kCapacityAware:
      return "A2";
    case V2IAction::kMaxRate:
      return "A3";
  }
  return "A1";
}

std::optional<V2IAction> v2i_action_from_string(std::string_view name) {
  for (int i = 0; i < kNumV2IActions; ++i) {
    if (to_string(static_cast<V2IAction>(i)) == name) return static_cast<V2IAction>(i);
  }
  return std::nullopt;
}

V2IAction v2i_action_from_index(int index) {
  if (index < 0 || index >= kNumV2IActions) {
    throw ContractViolation("V2I action index out of range: " + std::to_string(index));
  }
  return static_cast<V2IAction>(index);
}

std::array<double, kEncodedStateDim> encode(const V2IState& state, int total_rbs, int total_tbs) {
  if (state.n_rbs < 0 || state.n_tbs < 0 || state.n_rbs > total_rbs || state.n_tbs > total_tbs) {
    throw ContractViolation("encode: reachable counts exceed station totals");
  }
  std::array<double, kEncodedStateDim> out{};
  out[0] = total_rbs > 0 ? static_cast<double>(state.n_rbs) / total_rbs : 0.0;
  out[1] = total_tbs > 0 ? static_cast<double>(state.n_tbs) / total_tbs : 0.0;
  out[2 + highway::to_index(state.ad_action)] = 1.0;
  return out;
}

highway::AdAction decode_ad_action(std::span<const double> encoded) {
  if (encoded.size() != kEncodedStateDim) throw ContractViolation("decode_ad_action: bad dimension");
  int hot = -1;
  for (int i = 0; i < highway::kNumAdActions; ++i) {
    if (encoded[2 + i] == 1.0) {
      if (hot >= 0) throw ContractViolation("decode_ad_action: several hot slots");
      hot = i;
    } else if (encoded[2 + i] != 0.0) {
      throw ContractViolation("decode_ad_action: slot is neither 0 nor 1");
    }
  }
  if (hot < 0) throw ContractViolation("decode_ad_action: no hot slot");
  return highway::ad_action_from_index(hot);
}

std::vector<Candidate> ReachableSets::all() const {
  std::vector<Candidate> out(rbs);
  out.insert(out.end(), tbs.begin(), tbs.end());
  return out;
}

ReachableSets reachable_sets(std::span<const radio::BaseStation> stations,
                             std::span<const double> sinr_row, double gamma_th) {
  if (!(gamma_th > 0.0)) throw ContractViolation("reachable_sets: threshold must be > 0");
  if (sinr_row.size() != stations.size()) {
    throw ContractViolation("reachable_sets: SINR row does not match station list");
  }
  ReachableSets out;
  for (std::size_t i = 0; i < stations.size(); ++i) {
    const auto& bs = stations[i];
    if (!(sinr_row[i] >= gamma_th)) continue;
    Candidate c{bs.id, bs.tier, bs.capacity, sinr_row[i], radio::shannon_rate(bs.bandwidth, sinr_row[i])};
    (bs.tier == radio::Tier::kRf ? out.rbs : out.tbs).push_back(c);
  }
  auto by_id = [](const Candidate& a, const Candidate& b) { return a.station_id < b.station_id; };
  std::sort(out.rbs.begin(), out.rbs.end(), by_id);
  std::sort(out.tbs.begin(), out.tbs.end(), by_id);
  return out;
}

AssociationOutcome apply_v2i_action(V2IAction action, const ReachableSets& reachable,
                                    std::span<const int> loads, const HandoverPenalty& penalty,
                                    const AssociationRecord& prev) {
  const std::vector<Candidate> candidates = reachable.all();
  AssociationOutcome out;
  if (candidates.empty()) {
    out.outage = true;
    return out;
  }

  auto is_handover = [&](const Candidate& c) {
    return prev.serving_bs.has_value() && *prev.serving_bs != c.station_id;
  };
  auto unpenalised_wr = [&](const Candidate& c) {
    return radio::weighted_rate(c.rate, c.capacity, load_of(loads, c.station_id), 0.0);
  };

  std::optional<Candidate> chosen;
  switch (action) {
    case V2IAction::kMaxWeightedRate:
      chosen = argmax_by(candidates, [&](const Candidate& c) {
        const double mu = is_handover(c) ? penalty.of(c.tier) : 0.0;
        return radio::weighted_rate(c.rate, c.capacity, load_of(loads, c.station_id), mu);
      });
      break;
    case V2IAction::kCapacityAware: {
      std::vector<Candidate> ranked = candidates;
      std::stable_sort(ranked.begin(), ranked.end(), [&](const Candidate& a, const Candidate& b) {
        const double wa = unpenalised_wr(a);
        const double wb = unpenalised_wr(b);
        return wa > wb || (wa == wb && a.station_id < b.station_id);
      });
      auto available = std::find_if(ranked.begin(), ranked.end(), [&](const Candidate& c) {
        return c.capacity >= load_of(loads, c.station_id);
      });
      chosen = available != ranked.end() ? *available : ranked.front();
      break;
    }
    case V2IAction::kMaxRate:
      chosen = argmax_by(candidates, [](const Candidate& c) { return c.rate; });
      break;
  }

  out.station_id = chosen->station_id;
  out.handover = is_handover(*chosen);
  out.rate = chosen->rate;
  out.weighted_rate =
      radio::weighted_rate(chosen->rate, chosen->capacity, load_of(loads, chosen->station_id),
                           out.handover ? penalty.of(chosen->tier) : 0.0);
  return out;
}

double v2i_reward(double weighted_rate, double xi) {
  if (!(weighted_rate >= 0.0)) throw ContractViolation("v2i_reward: negative weighted rate");
  if (!(xi >= 0.0)) throw ContractViolation("v2i_reward: negative handover rate");
  return weighted_rate * (1.0 - std::min(1.0, xi));
}

AssociationRecord update_handover_rate(AssociationRecord record, bool handover, int window_len) {
  if (window_len < 1) throw ContractViolation("update_handover_rate: window_len must be >= 1");
  record.window.push_back(handover);
  if (handover) ++record.ho_count_window;
  while (record.window.size() > static_cast<std::size_t>(window_len)) {
    if (record.window.front()) --record.ho_count_window;
    record.window.pop_front();
  }
  record.xi = static_cast<double>(record.ho_count_window) / window_len;
  return record;
}

}  // namespace hv2i::v2i
