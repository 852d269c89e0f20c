#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hv2i/backend.hpp"
#include "hv2i/ddqn.hpp"
#include "hv2i/highway.hpp"
#include "hv2i/llm_policy.hpp"
#include "hv2i/radio.hpp"
#include "hv2i/v2i.hpp"

namespace hv2i {

inline constexpr int kConfigSchemaVersion = 1;

enum class AdPolicyKind { kLlm, kDdqn, kRandom, kScripted };
enum class V2IPolicyKind { kDdqn, kRandom, kFixedA1, kFixedA2, kFixedA3 };

std::string_view to_string(AdPolicyKind kind);
std::string_view to_string(V2IPolicyKind kind);

struct HighwaySection {
  highway::RoadConfig road;
  highway::AdRewardWeights weights;
  int n_observed = 4;
};

struct RadioSection {
  radio::RadioConfig channel;
  double rf_frequency = 3.5e9;
  double thz_frequency = 0.3e12;
  double rf_tx_power = 1.0;
  double thz_tx_power = 0.5;
  double rf_tx_gain = 1.0;
  double rf_rx_gain = 1.0;
  double thz_tx_gain = 316.0;
  double thz_rx_gain = 31.6;
  double rf_bandwidth = 20e6;
  double thz_bandwidth = 1e9;
  int rf_capacity = 8;
  int thz_capacity = 4;
  double antenna_height = 10.0;
};

struct V2ISection {
  double gamma_th = 1.0;  // linear (0 dB)
  v2i::HandoverPenalty penalty;
  int ho_window = 10;
  double rate_unit = 1e9;  // bit/s per reward unit
  v2i::V2IAction background_action = v2i::V2IAction::kMaxRate;
};

struct DdqnSection {
  ddqn::AgentConfig agent;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.3;
};

struct LlmSection {
  llm::BackendConfig backend;
  std::size_t top_k = 3;
  std::size_t pool_capacity = 512;
  std::size_t char_budget = 12'000;
  std::string prompt_template;  // TOML file with the five template blocks; empty = built-in
};

struct CampaignSection {
  int n_episodes = 300;
  AdPolicyKind ad_policy = AdPolicyKind::kLlm;
  V2IPolicyKind v2i_policy = V2IPolicyKind::kDdqn;
  std::string scripted_action = "IDLE";  // for ad_policy = scripted
  std::uint64_t env_seed = 1;
  std::uint64_t learner_seed = 2;
  std::uint64_t backend_seed = 3;
  int n_avs = 21;
  int n_rbs = 5;
  int n_tbs = 20;
  double desired_velocity = 25.0;
  double roadside_margin = 10.0;
  int convergence_window = 50;
  double convergence_threshold = 0.01;
  int summary_window = 200;
  bool stop_on_convergence = false;
  bool write_traces = true;
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  HighwaySection highway;
  RadioSection radio;
  V2ISection v2i;
  DdqnSection ddqn;
  LlmSection llm;
  CampaignSection campaign;

  // Range checks across all sections; throws ConfigError.
  void validate() const;
  void set_seed(std::uint64_t seed);
};

// Keys missing from the file keep their defaults; unknown sections or keys
// are rejected with ConfigError.
RunConfig parse_config(std::string_view toml_text, std::string_view source_name = "<string>");
// load_config resolves a relative llm.prompt_template against the file's directory.
RunConfig load_config(const std::filesystem::path& path);

// Keys task, good_intro, bad_intro, state_intro, decision; all required.
llm::PromptTemplate load_prompt_template(const std::filesystem::path& path);

// Canonical text of the effective config (every key, sorted).
std::string serialize_config(const RunConfig& cfg);

// SHA-256 of serialize_config, plus the template file bytes when one is set.
std::string config_hash(const RunConfig& cfg);

}  // namespace hv2i
