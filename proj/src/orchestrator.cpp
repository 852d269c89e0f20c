#include "hv2i/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "hv2i/errors.hpp"
#include "hv2i/radio.hpp"
#include "hv2i/rng.hpp"

namespace hv2i {

using highway::AdAction;
using v2i::V2IAction;

std::vector<double> moving_average(std::span<const double> series, int window) {
  if (window < 1) throw ContractViolation("moving_average: window must be >= 1");
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    sum += series[t];
    if (t >= static_cast<std::size_t>(window)) sum -= series[t - window];
    out[t] = sum / static_cast<double>(std::min<std::size_t>(t + 1, window));
  }
  return out;
}

ConvergenceReport assess_convergence(std::span<const double> series, int window, double threshold) {
  ConvergenceReport report;
  report.moving_average = moving_average(series, window);
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t t = 2 * w - 1; t < series.size(); ++t) {
    const double now = report.moving_average[t];
    const double before = report.moving_average[t - w];
    if (std::abs(now - before) <= threshold * std::abs(before)) {
      report.converged = true;
      report.episode = static_cast<int>(t + 1);
      break;
    }
  }
  return report;
}

int settling_episode(std::span<const double> series, int window, double tolerance) {
  if (series.empty()) return 0;
  const auto ma = moving_average(series, window);
  const double final_value = ma.back();
  const double band = tolerance * std::abs(final_value);
  std::size_t t = ma.size();
  while (t > 0 && std::abs(ma[t - 1] - final_value) <= band) --t;
  return static_cast<int>(t + 1 > ma.size() ? ma.size() : t + 1);
}

double epsilon_for_episode(int episode, int n_episodes, const DdqnSection& ddqn) {
  const double horizon = ddqn.eps_decay_fraction * n_episodes;
  const double frac = std::max(0.0, 1.0 - episode / horizon);
  return ddqn.eps_end + (ddqn.eps_start - ddqn.eps_end) * frac;
}

std::vector<double> encode_ad_observation(const highway::AdObservation& obs, const highway::RoadConfig& road) {
  std::vector<double> out;
  out.reserve(obs.rows.size() * 5);
  const double width = road.n_lanes * road.lane_width;
  for (const auto& r : obs.rows) {
    out.push_back(r.present ? 1.0 : 0.0);
    out.push_back(r.x / 100.0);
    out.push_back(r.y / width);
    out.push_back(r.v / road.v_max);
    out.push_back(r.psi);
  }
  return out;
}

HybridLoop::HybridLoop(RunConfig cfg, std::unique_ptr<llm::TextBackend> backend)
    : cfg_(std::move(cfg)),
      backend_(std::move(backend)),
      pool_(cfg_.llm.pool_capacity),
      ad_policy_rng_(make_rng(cfg_.campaign.learner_seed, Stream::kAdPolicy)),
      v2i_policy_rng_(make_rng(cfg_.campaign.learner_seed, Stream::kExploration, 1)) {
  cfg_.validate();
  scenario_ = generate_scenario(cfg_.campaign.env_seed, cfg_);
  scripted_action_ = *highway::ad_action_from_string(cfg_.campaign.scripted_action);

  template_ = cfg_.llm.prompt_template.empty() ? llm::PromptTemplate::builtin()
                                               : load_prompt_template(cfg_.llm.prompt_template);
  prompt_options_.top_k = cfg_.llm.top_k;
  prompt_options_.char_budget = cfg_.llm.char_budget;
  prompt_options_.n_lanes = cfg_.highway.road.n_lanes;

  if (cfg_.campaign.ad_policy == AdPolicyKind::kLlm && !backend_) {
    auto backend_cfg = cfg_.llm.backend;
    backend_cfg.seed = cfg_.campaign.backend_seed;
    backend_ = llm::make_backend(backend_cfg, cfg_.highway.road);
  }
  if (cfg_.campaign.v2i_policy == V2IPolicyKind::kDdqn) {
    v2i_agent_ = std::make_unique<ddqn::DdqnAgent>(v2i::kEncodedStateDim, v2i::kNumV2IActions,
                                                   cfg_.ddqn.agent, cfg_.campaign.learner_seed);
  }
  if (cfg_.campaign.ad_policy == AdPolicyKind::kDdqn) {
    const int dim = 5 * (1 + cfg_.highway.n_observed);
    ad_agent_ = std::make_unique<ddqn::DdqnAgent>(dim, highway::kNumAdActions, cfg_.ddqn.agent,
                                                  cfg_.campaign.learner_seed ^ 0x9E3779B97F4A7C15ULL);
  }
}

void HybridLoop::begin_episode(int episode) {
  auto traffic_rng = make_rng(cfg_.campaign.env_seed, Stream::kTraffic, static_cast<std::uint64_t>(episode));
  Traffic traffic = spawn_traffic(scenario_, cfg_, traffic_rng);
  world_ = std::move(traffic.world);
  target_speeds_ = std::move(traffic.target_speeds);
  channel_rng_ = make_rng(cfg_.campaign.env_seed, Stream::kChannel, static_cast<std::uint64_t>(episode));
  assoc_.assign(world_.vehicles.size(), v2i::AssociationRecord{});
  loads_.assign(scenario_.stations.size(), 0);
  pending_v2i_.reset();
  metrics_ = EpisodeMetrics{};
  metrics_.episode = episode;
  epsilon_ = epsilon_for_episode(episode, cfg_.campaign.n_episodes, cfg_.ddqn);
  metrics_.epsilon = epsilon_;
  done_ = false;
}

AdAction HybridLoop::choose_ad_action(const highway::AdObservation& obs, StepRecord& record) {
  switch (cfg_.campaign.ad_policy) {
    case AdPolicyKind::kLlm: {
      llm::Decision d = llm::decide(obs, pool_, template_, prompt_options_, *backend_);
      if (d.trace.fallback_used) {
        ++metrics_.fallback_steps;
        spdlog::debug("episode {} step {}: fallback ({})", metrics_.episode, world_.step_index, d.trace.error);
      }
      record.decision = std::move(d.trace);
      return d.action;
    }
    case AdPolicyKind::kDdqn: {
      const auto enc = encode_ad_observation(obs, cfg_.highway.road);
      return highway::ad_action_from_index(ad_agent_->act(enc, epsilon_));
    }
    case AdPolicyKind::kRandom: {
      std::uniform_int_distribution<int> pick(0, highway::kNumAdActions - 1);
      return highway::ad_action_from_index(pick(ad_policy_rng_));
    }
    case AdPolicyKind::kScripted:
      return scripted_action_;
  }
  throw ContractViolation("unknown AD policy");
}

V2IAction HybridLoop::choose_v2i_action(std::span<const double> encoded) {
  switch (cfg_.campaign.v2i_policy) {
    case V2IPolicyKind::kDdqn:
      return v2i::v2i_action_from_index(v2i_agent_->act(encoded, epsilon_));
    case V2IPolicyKind::kRandom: {
      std::uniform_int_distribution<int> pick(0, v2i::kNumV2IActions - 1);
      return v2i::v2i_action_from_index(pick(v2i_policy_rng_));
    }
    case V2IPolicyKind::kFixedA1:
      return V2IAction::kMaxWeightedRate;
    case V2IPolicyKind::kFixedA2:
      return V2IAction::kCapacityAware;
    case V2IPolicyKind::kFixedA3:
      return V2IAction::kMaxRate;
  }
  throw ContractViolation("unknown V2I policy");
}

const StepRecord& HybridLoop::run_step() {
  if (done_) throw ContractViolation("run_step called on a finished episode (call begin_episode)");
  const auto& road = cfg_.highway.road;
  const std::size_t n = world_.vehicles.size();

  record_ = StepRecord{};
  record_.episode = metrics_.episode;
  record_.step = world_.step_index;

  // (1) observations: AD part for the ego, channel for every AV.
  const auto obs = highway::observe(world_, 0, static_cast<std::size_t>(cfg_.highway.n_observed));
  std::vector<radio::Position> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = {world_.vehicles[i].x, world_.vehicles[i].y};
  const auto table = radio::sample_sinr_table(positions, scenario_.stations, cfg_.radio.channel, channel_rng_);
  std::vector<v2i::ReachableSets> reachable(n);
  for (std::size_t i = 0; i < n; ++i) {
    reachable[i] = v2i::reachable_sets(scenario_.stations, table.sinr[i], cfg_.v2i.gamma_th);
  }

  // (2) AD decision.
  const AdAction ad_action = choose_ad_action(obs, record_);
  record_.ad_action = ad_action;

  // (3) V2I decision on [n_R, n_T, a_AD].
  const v2i::V2IState v2i_state{static_cast<int>(reachable[0].rbs.size()),
                                static_cast<int>(reachable[0].tbs.size()), ad_action};
  const auto encoded = v2i::encode(v2i_state, scenario_.n_rbs, scenario_.n_tbs);
  const std::vector<double> encoded_vec(encoded.begin(), encoded.end());
  if (v2i_agent_ && pending_v2i_) {
    v2i_agent_->observe({std::move(pending_v2i_->state), pending_v2i_->action, pending_v2i_->reward,
                         encoded_vec, false});
    pending_v2i_.reset();
  }
  const V2IAction v2i_action = choose_v2i_action(encoded_vec);
  record_.n_rbs = v2i_state.n_rbs;
  record_.n_tbs = v2i_state.n_tbs;
  record_.v2i_state = encoded;
  record_.v2i_action = v2i_action;

  // (4) apply both: highway step, then association in AV order against
  // the previous step's loads.
  std::vector<AdAction> actions(n, AdAction::kIdle);
  actions[0] = ad_action;
  for (std::size_t i = 1; i < n; ++i) {
    if (world_.vehicles[i].active()) {
      actions[i] = highway::car_following_action(world_, i, target_speeds_[i], road);
    }
  }
  highway::StepResult result = highway::step(world_, actions, road);

  std::vector<int> next_loads(scenario_.stations.size(), 0);
  v2i::AssociationOutcome ego_outcome;
  for (std::size_t i = 0; i < n; ++i) {
    auto& rec = assoc_[i];
    if (!world_.vehicles[i].active()) {
      rec.serving_bs.reset();
      continue;
    }
    // n_i counts this AV as attached: the other AVs served last step plus one.
    std::vector<int> n_i = loads_;
    for (auto& n : n_i) n += 1;
    if (rec.serving_bs) n_i[static_cast<std::size_t>(*rec.serving_bs)] -= 1;
    const V2IAction a = i == 0 ? v2i_action : cfg_.v2i.background_action;
    const auto outcome = v2i::apply_v2i_action(a, reachable[i], n_i, cfg_.v2i.penalty, rec);
    rec = v2i::update_handover_rate(std::move(rec), outcome.handover, cfg_.v2i.ho_window);
    rec.serving_bs = outcome.station_id;
    if (outcome.station_id) ++next_loads[static_cast<std::size_t>(*outcome.station_id)];
    metrics_.fleet_handovers += outcome.handover ? 1 : 0;
    metrics_.fleet_av_steps += 1;
    if (i == 0) ego_outcome = outcome;
  }
  loads_ = std::move(next_loads);

  const double v2i_r = ego_outcome.outage
                           ? 0.0
                           : v2i::v2i_reward(ego_outcome.weighted_rate / cfg_.v2i.rate_unit, assoc_[0].xi);
  record_.serving_bs = ego_outcome.station_id;
  record_.handover = ego_outcome.handover;
  record_.outage = ego_outcome.outage;
  record_.weighted_rate = ego_outcome.weighted_rate;
  record_.v2i_reward = v2i_r;

  // (5) example pools and replay.
  const auto& ego = result.world.vehicles[0];
  const auto& ev = result.events[0];
  const double ad_r = highway::ad_reward(ego, cfg_.highway.weights, road);
  const bool bad = ev.collision || ev.off_road || ev.truncation;
  done_ = bad || ev.reached_end || !ego.active();
  record_.ad_reward = ad_r;
  record_.bad_example = bad;
  record_.good_before = pool_.good().size();
  record_.bad_before = pool_.bad().size();
  llm::record_outcome(pool_, llm::Example{obs, ad_action, ad_r}, bad);
  record_.good_after = pool_.good().size();
  record_.bad_after = pool_.bad().size();

  if (ad_agent_) {
    const auto next_obs = highway::observe(result.world, 0, static_cast<std::size_t>(cfg_.highway.n_observed));
    ad_agent_->observe({encode_ad_observation(obs, road), highway::to_index(ad_action), ad_r,
                        encode_ad_observation(next_obs, road), done_});
  }
  if (v2i_agent_) {
    if (done_) {
      v2i_agent_->observe({encoded_vec, static_cast<int>(v2i_action), v2i_r, encoded_vec, true});
    } else {
      pending_v2i_ = PendingTransition{encoded_vec, static_cast<int>(v2i_action), v2i_r};
    }
  }

  world_ = std::move(result.world);
  metrics_.ad_return += ad_r;
  metrics_.v2i_return += v2i_r;
  metrics_.total_return = metrics_.ad_return + metrics_.v2i_return;
  metrics_.steps += 1;
  metrics_.handovers += ego_outcome.handover ? 1 : 0;
  metrics_.outage_steps += ego_outcome.outage ? 1 : 0;
  metrics_.collided = metrics_.collided || ev.collision;
  metrics_.off_road = metrics_.off_road || ev.off_road;
  metrics_.truncated = metrics_.truncated || ev.truncation;
  metrics_.reached_end = metrics_.reached_end || ev.reached_end;
  record_.done = done_;
  return record_;
}

EpisodeMetrics HybridLoop::run_episode(int episode, StepObserver* observer) {
  begin_episode(episode);
  try {
    while (!done_) {
      const StepRecord& rec = run_step();
      if (observer != nullptr) observer->on_step(rec);
    }
  } catch (const std::exception& e) {
    done_ = true;
    throw EpisodeAborted("episode " + std::to_string(episode) + " aborted at step " +
                             std::to_string(world_.step_index) + ": " + e.what(),
                         metrics_);
  }
  if (observer != nullptr) observer->on_episode(metrics_);
  return metrics_;
}

CampaignResult HybridLoop::run_campaign(StepObserver* observer) {
  CampaignResult result;
  std::vector<double> totals;
  const auto& k = cfg_.campaign;
  for (int ep = 0; ep < k.n_episodes; ++ep) {
    result.episodes.push_back(run_episode(ep, observer));
    totals.push_back(result.episodes.back().total_return);
    if (k.stop_on_convergence && !result.convergence.converged) {
      const auto report = assess_convergence(totals, k.convergence_window, k.convergence_threshold);
      if (report.converged) {
        result.stopped_early = ep + 1 < k.n_episodes;
        break;
      }
    }
  }
  result.convergence = assess_convergence(totals, k.convergence_window, k.convergence_threshold);
  return result;
}

}  // namespace hv2i
