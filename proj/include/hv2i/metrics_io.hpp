#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>

#include "hv2i/config.hpp"
#include "hv2i/orchestrator.hpp"

namespace hv2i {

// git describe of the source tree at configure time, or "unknown".
std::string build_id();

std::string metrics_row_json(const EpisodeMetrics& m, const std::string& config_hash);

inline constexpr const char* kSummaryHeader =
    "config_hash,build_id,ad_policy,v2i_policy,n_avs,desired_velocity,n_episodes,summary_episodes,"
    "ad_reward,v2i_reward,total_reward,collision_rate,ho_probability,steps,outage_rate,fleet_ho_probability";

// Header plus one row of means over the last summary_window episodes;
// header only when there are no episodes.
std::string summary_csv(std::span<const EpisodeMetrics> episodes, const RunConfig& cfg);

// Writes <dir>/metrics.jsonl, <dir>/summary.csv and <dir>/config.toml.
// Throws IoError naming the path on failure.
void export_metrics(std::span<const EpisodeMetrics> episodes, const RunConfig& cfg,
                    const std::filesystem::path& dir);

std::string convergence_json(const CampaignResult& result, const RunConfig& cfg);

// Streams steps.jsonl and (LLM policy) decisions.jsonl as the campaign runs,
// flushing every line so an aborted run leaves a usable partial trace.
class TraceWriter : public StepObserver {
 public:
  TraceWriter(const std::filesystem::path& dir, const RunConfig& cfg, bool write_steps);
  void on_step(const StepRecord& record) override;
  void on_episode(const EpisodeMetrics& metrics) override;

 private:
  std::string hash_;
  bool write_steps_;
  std::filesystem::path steps_path_;
  std::filesystem::path decisions_path_;
  std::ofstream steps_;
  std::ofstream decisions_;
};

// Opens for writing in binary mode or throws IoError.
std::ofstream open_output(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hv2i
