#pragma once

#include <array>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "hv2i/backend.hpp"
#include "hv2i/config.hpp"
#include "hv2i/ddqn.hpp"
#include "hv2i/highway.hpp"
#include "hv2i/llm_policy.hpp"
#include "hv2i/scenario.hpp"
#include "hv2i/v2i.hpp"

namespace hv2i {

struct EpisodeMetrics {
  int episode = 0;
  double ad_return = 0.0;
  double v2i_return = 0.0;
  double total_return = 0.0;
  bool collided = false;
  bool off_road = false;
  bool truncated = false;
  bool reached_end = false;
  int handovers = 0;
  int steps = 0;
  int outage_steps = 0;
  int fallback_steps = 0;
  double epsilon = 0.0;

  // every active AV, ego included: handovers and AV-steps
  int fleet_handovers = 0;
  int fleet_av_steps = 0;

  double ho_probability() const { return steps > 0 ? static_cast<double>(handovers) / steps : 0.0; }
  double fleet_ho_probability() const {
    return fleet_av_steps > 0 ? static_cast<double>(fleet_handovers) / fleet_av_steps : 0.0;
  }
};

struct StepRecord {
  int episode = 0;
  int step = 0;
  int n_rbs = 0;  // reachable, ego
  int n_tbs = 0;
  highway::AdAction ad_action = highway::AdAction::kIdle;
  std::array<double, v2i::kEncodedStateDim> v2i_state{};
  v2i::V2IAction v2i_action = v2i::V2IAction::kMaxRate;
  std::optional<int> serving_bs;
  bool handover = false;
  bool outage = false;
  double weighted_rate = 0.0;  // bit/s
  double ad_reward = 0.0;
  double v2i_reward = 0.0;
  bool bad_example = false;
  std::size_t good_before = 0;
  std::size_t bad_before = 0;
  std::size_t good_after = 0;
  std::size_t bad_after = 0;
  bool done = false;
  std::optional<llm::DecisionTrace> decision;  // LLM policy only
};

class StepObserver {
 public:
  virtual ~StepObserver() = default;
  virtual void on_step(const StepRecord& record) = 0;
  virtual void on_episode(const EpisodeMetrics& metrics) = 0;
};

// Raised by run_episode when a component fails mid-episode. Steps already
// executed have been passed to the observer.
class EpisodeAborted : public std::runtime_error {
 public:
  EpisodeAborted(const std::string& what, EpisodeMetrics partial)
      : std::runtime_error(what), partial_(partial) {}
  const EpisodeMetrics& partial() const { return partial_; }

 private:
  EpisodeMetrics partial_;
};

// Trailing moving average; the first window-1 entries average what exists.
std::vector<double> moving_average(std::span<const double> series, int window);

struct ConvergenceReport {
  bool converged = false;
  int episode = -1;  // episodes run when the rule first held
  std::vector<double> moving_average;
};

// Converged at the first t >= 2w where |MA(t) - MA(t-w)| <= threshold * |MA(t-w)|,
// MA over full windows of w episodes.
ConvergenceReport assess_convergence(std::span<const double> series, int window, double threshold);

// Episodes needed before the moving average stays within tolerance *
// |final MA| of its final value for the rest of the series.
int settling_episode(std::span<const double> series, int window, double tolerance);

struct CampaignResult {
  std::vector<EpisodeMetrics> episodes;
  ConvergenceReport convergence;  // on total_return
  bool stopped_early = false;
};

double epsilon_for_episode(int episode, int n_episodes, const DdqnSection& ddqn);

// [present, x/100, y/(n_lanes*lane_width), v/v_max, psi] per row.
std::vector<double> encode_ad_observation(const highway::AdObservation& obs, const highway::RoadConfig& road);

class HybridLoop {
 public:
  // For the LLM AD policy a null backend is built from cfg.llm.backend.
  explicit HybridLoop(RunConfig cfg, std::unique_ptr<llm::TextBackend> backend = nullptr);

  void begin_episode(int episode);
  // One pass of the five sub-steps. Throws ContractViolation once the
  // episode is done.
  const StepRecord& run_step();
  bool episode_done() const { return done_; }
  const EpisodeMetrics& metrics() const { return metrics_; }

  EpisodeMetrics run_episode(int episode, StepObserver* observer = nullptr);
  CampaignResult run_campaign(StepObserver* observer = nullptr);

  const RunConfig& config() const { return cfg_; }
  const Scenario& scenario() const { return scenario_; }
  const highway::World& world() const { return world_; }
  const llm::ExamplePool& pool() const { return pool_; }
  const ddqn::DdqnAgent* v2i_agent() const { return v2i_agent_.get(); }
  const ddqn::DdqnAgent* ad_agent() const { return ad_agent_.get(); }
  const std::vector<v2i::AssociationRecord>& associations() const { return assoc_; }

 private:
  highway::AdAction choose_ad_action(const highway::AdObservation& obs, StepRecord& record);
  v2i::V2IAction choose_v2i_action(std::span<const double> encoded);

  struct PendingTransition {
    std::vector<double> state;
    int action = 0;
    double reward = 0.0;
  };

  RunConfig cfg_;
  Scenario scenario_;
  llm::PromptTemplate template_;
  llm::PromptOptions prompt_options_;
  std::unique_ptr<llm::TextBackend> backend_;
  llm::ExamplePool pool_;
  std::unique_ptr<ddqn::DdqnAgent> v2i_agent_;
  std::unique_ptr<ddqn::DdqnAgent> ad_agent_;
  highway::AdAction scripted_action_ = highway::AdAction::kIdle;
  std::mt19937_64 ad_policy_rng_;
  std::mt19937_64 v2i_policy_rng_;

  // per episode
  std::mt19937_64 channel_rng_;
  highway::World world_;
  std::vector<double> target_speeds_;
  std::vector<v2i::AssociationRecord> assoc_;
  std::vector<int> loads_;  // AVs served per station after the previous step
  std::optional<PendingTransition> pending_v2i_;
  EpisodeMetrics metrics_;
  StepRecord record_;
  double epsilon_ = 0.0;
  bool done_ = true;
};

}  // namespace hv2i
