#include "hv2i/metrics_io.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hv2i/errors.hpp"

#ifndef HV2I_BUILD_ID
#define HV2I_BUILD_ID "unknown"
#endif

namespace hv2i {

using json = nlohmann::json;

namespace {

std::string num(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string build_id() { return HV2I_BUILD_ID; }

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::string metrics_row_json(const EpisodeMetrics& m, const std::string& config_hash) {
  json j = {
      {"episode", m.episode},
      {"ad_return", m.ad_return},
      {"v2i_return", m.v2i_return},
      {"total_return", m.total_return},
      {"collided", m.collided},
      {"off_road", m.off_road},
      {"truncated", m.truncated},
      {"reached_end", m.reached_end},
      {"handovers", m.handovers},
      {"ho_probability", m.ho_probability()},
      {"fleet_ho_probability", m.fleet_ho_probability()},
      {"steps", m.steps},
      {"outage_steps", m.outage_steps},
      {"fallback_steps", m.fallback_steps},
      {"epsilon", m.epsilon},
      {"config_hash", config_hash},
  };
  return j.dump();
}

std::string summary_csv(std::span<const EpisodeMetrics> episodes, const RunConfig& cfg) {
  std::string out = std::string(kSummaryHeader) + "\n";
  if (episodes.empty()) return out;
  const std::size_t n = std::min<std::size_t>(episodes.size(), static_cast<std::size_t>(cfg.campaign.summary_window));
  const auto tail = episodes.subspan(episodes.size() - n);
  double ad = 0, v2i = 0, total = 0, coll = 0, ho = 0, steps = 0, outage = 0, fleet_ho = 0;
  for (const auto& m : tail) {
    ad += m.ad_return;
    v2i += m.v2i_return;
    total += m.total_return;
    coll += m.collided ? 1.0 : 0.0;
    ho += m.ho_probability();
    fleet_ho += m.fleet_ho_probability();
    steps += m.steps;
    outage += m.steps > 0 ? static_cast<double>(m.outage_steps) / m.steps : 0.0;
  }
  const double d = static_cast<double>(n);
  std::ostringstream row;
  row << config_hash(cfg) << ',' << build_id() << ',' << to_string(cfg.campaign.ad_policy) << ','
      << to_string(cfg.campaign.v2i_policy) << ',' << cfg.campaign.n_avs << ','
      << num(cfg.campaign.desired_velocity) << ',' << episodes.size() << ',' << n << ',' << num(ad / d) << ','
      << num(v2i / d) << ',' << num(total / d) << ',' << num(coll / d) << ',' << num(ho / d) << ','
      << num(steps / d) << ',' << num(outage / d) << ',' << num(fleet_ho / d) << '\n';
  return out + row.str();
}

void export_metrics(std::span<const EpisodeMetrics> episodes, const RunConfig& cfg,
                    const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const std::string hash = config_hash(cfg);
  std::string rows;
  for (const auto& m : episodes) rows += metrics_row_json(m, hash) + "\n";
  write_text(dir / "metrics.jsonl", rows);
  write_text(dir / "summary.csv", summary_csv(episodes, cfg));
  write_text(dir / "config.toml", serialize_config(cfg));
}

std::string convergence_json(const CampaignResult& result, const RunConfig& cfg) {
  std::vector<double> v2i;
  for (const auto& m : result.episodes) v2i.push_back(m.v2i_return);
  const auto& k = cfg.campaign;
  const auto v2i_report = assess_convergence(v2i, k.convergence_window, k.convergence_threshold);
  json j = {
      {"config_hash", config_hash(cfg)},
      {"episodes", result.episodes.size()},
      {"window", k.convergence_window},
      {"threshold", k.convergence_threshold},
      {"total_return_converged", result.convergence.converged},
      {"total_return_episode", result.convergence.episode},
      {"v2i_return_converged", v2i_report.converged},
      {"v2i_return_episode", v2i_report.episode},
      {"stopped_early", result.stopped_early},
  };
  return j.dump(2) + "\n";
}

TraceWriter::TraceWriter(const std::filesystem::path& dir, const RunConfig& cfg, bool write_steps)
    : hash_(config_hash(cfg)),
      write_steps_(write_steps),
      steps_path_(dir / "steps.jsonl"),
      decisions_path_(dir / "decisions.jsonl") {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  if (write_steps_) steps_ = open_output(steps_path_);
  if (cfg.campaign.ad_policy == AdPolicyKind::kLlm) decisions_ = open_output(decisions_path_);
}

void TraceWriter::on_step(const StepRecord& r) {
  if (write_steps_) {
    json j = {
        {"episode", r.episode},
        {"step", r.step},
        {"ad_action", highway::to_string(r.ad_action)},
        {"v2i_state", r.v2i_state},
        {"v2i_action", v2i::to_string(r.v2i_action)},
        {"n_rbs", r.n_rbs},
        {"n_tbs", r.n_tbs},
        {"serving_bs", r.serving_bs ? json(*r.serving_bs) : json(nullptr)},
        {"handover", r.handover},
        {"outage", r.outage},
        {"weighted_rate", r.weighted_rate},
        {"ad_reward", r.ad_reward},
        {"v2i_reward", r.v2i_reward},
        {"bad_example", r.bad_example},
        {"good_pool", {r.good_before, r.good_after}},
        {"bad_pool", {r.bad_before, r.bad_after}},
        {"done", r.done},
        {"config_hash", hash_},
    };
    steps_ << j.dump() << '\n' << std::flush;
    if (!steps_) throw IoError("write failed: " + steps_path_.string());
  }
  if (r.decision && decisions_.is_open()) {
    const auto& d = *r.decision;
    json j = {
        {"episode", r.episode},
        {"step", r.step},
        {"prompt_hash", d.prompt_hash},
        {"response", d.response},
        {"parsed_action", d.parsed ? json(highway::to_string(*d.parsed)) : json(nullptr)},
        {"action", highway::to_string(d.action)},
        {"fallback_used", d.fallback_used},
        {"error", d.error},
        {"latency_ms", d.latency_ms},
        {"config_hash", hash_},
    };
    decisions_ << j.dump() << '\n' << std::flush;
    if (!decisions_) throw IoError("write failed: " + decisions_path_.string());
  }
}

void TraceWriter::on_episode(const EpisodeMetrics&) {}

}  // namespace hv2i
