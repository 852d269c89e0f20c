#include "hv2i/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "hv2i/errors.hpp"
#include "hv2i/hash.hpp"

namespace hv2i::llm {

using highway::AdAction;
using json = nlohmann::json;

void BackendConfig::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("llm.temperature must be >= 0");
  if (kind == BackendKind::kScripted) {
    if (script.empty()) throw ConfigError("llm.script must name a scripted policy");
    return;
  }
  if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
    throw ConfigError("llm.endpoint must be an http:// or https:// URL");
  }
  if (model.empty()) throw ConfigError("llm.model must not be empty");
  if (!(timeout_s > 0.0)) throw ConfigError("llm.timeout_s must be > 0");
  if (max_retries < 0) throw ConfigError("llm.max_retries must be >= 0");
  if (max_tokens < 1) throw ConfigError("llm.max_tokens must be >= 1");
}

// ---- heuristic stand-in -------------------------------------------------

namespace {

struct LaneView {
  double gap_ahead = std::numeric_limits<double>::infinity();
  double speed_ahead = 0.0;
  double gap_behind = std::numeric_limits<double>::infinity();
  double speed_behind = 0.0;
};

LaneView view_lane(const highway::AdObservation& obs, double lateral_offset,
                   const highway::RoadConfig& road) {
  LaneView view;
  for (std::size_t i = 1; i < obs.rows.size(); ++i) {
    const auto& r = obs.rows[i];
    if (!r.present || std::abs(r.y - lateral_offset) >= 0.5 * road.lane_width + road.vehicle_width * 0.5) {
      continue;
    }
    const double gap = std::abs(r.x) - road.vehicle_length;
    if (r.x >= 0.0 && gap < view.gap_ahead) {
      view.gap_ahead = gap;
      view.speed_ahead = r.v;
    } else if (r.x < 0.0 && gap < view.gap_behind) {
      view.gap_behind = gap;
      view.speed_behind = r.v;
    }
  }
  return view;
}

}  // namespace

AdAction heuristic_driving_action(const highway::AdObservation& obs, const highway::RoadConfig& road) {
  if (obs.rows.empty()) return AdAction::kIdle;
  const auto& ego = obs.rows.front();
  if (std::abs(ego.psi) > 1e-9) return AdAction::kIdle;  // lane change in progress

  const int lane = std::clamp(static_cast<int>(std::lround(ego.y / road.lane_width)), 0, road.n_lanes - 1);
  const double v = ego.v;
  const double headway = 1.5 * v;  // desired free gap, m

  auto safe_to_enter = [&](int direction) {
    const int target = lane + direction;
    if (target < 0 || target >= road.n_lanes) return false;
    const LaneView t = view_lane(obs, direction * road.lane_width, road);
    const double lc_time = road.lane_change_duration;
    const bool front_ok = t.gap_ahead > std::max(road.vehicle_length, (v - t.speed_ahead) * lc_time) + 0.75 * v;
    const bool back_ok = t.gap_behind > std::max(road.vehicle_length, (t.speed_behind - v) * lc_time) + 0.5 * v;
    return front_ok && back_ok;
  };

  const LaneView own = view_lane(obs, 0.0, road);
  const bool blocked = own.gap_ahead < headway && own.speed_ahead <= v + 0.5;
  if (blocked) {
    if (safe_to_enter(+1) && view_lane(obs, road.lane_width, road).gap_ahead > own.gap_ahead) {
      return AdAction::kLaneLeft;
    }
    if (safe_to_enter(-1) && view_lane(obs, -road.lane_width, road).gap_ahead > own.gap_ahead) {
      return AdAction::kLaneRight;
    }
    return AdAction::kSlower;
  }
  if (lane > 0 && safe_to_enter(-1) && view_lane(obs, -road.lane_width, road).gap_ahead > 2.0 * headway) {
    return AdAction::kLaneRight;
  }
  // Cruise below v_max: leaders outside the observed set are invisible.
  const double cruise = road.v_min + (2.0 / 3.0) * (road.v_max - road.v_min);
  if (v + road.accel_delta <= cruise && own.gap_ahead > 2.0 * headway) return AdAction::kFaster;
  if (v > cruise) return AdAction::kSlower;
  return AdAction::kIdle;
}

std::unique_ptr<TextBackend> make_heuristic_backend(const highway::RoadConfig& road) {
  return std::make_unique<ScriptedBackend>([road](const PromptBundle& bundle) {
    return "Keeping a safe gap and preferring the right-most lane, my decision is: " +
           std::string(highway::to_string(heuristic_driving_action(bundle.state, road)));
  });
}

std::unique_ptr<TextBackend> make_constant_backend(std::string response) {
  return std::make_unique<ScriptedBackend>([response](const PromptBundle&) { return response; });
}

// ---- HTTP chat-completions ------------------------------------------------

HttpChatBackend::HttpChatBackend(BackendConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto scheme_end = config_.endpoint.find("://");
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : config_.endpoint.substr(path_start);
}

std::string HttpChatBackend::request_body(const std::string& prompt_text) const {
  json body = {
      {"model", config_.model},
      {"messages",
       json::array({{{"role", "system"}, {"content", config_.system_prompt}},
                    {{"role", "user"}, {"content", prompt_text}}})},
      {"temperature", config_.temperature},
      {"max_tokens", config_.max_tokens},
      {"seed", config_.seed},
  };
  return body.dump();
}

std::string HttpChatBackend::extract_content(std::string_view response_body) {
  try {
    const json j = json::parse(response_body);
    if (j.contains("error")) throw BackendError("endpoint returned error: " + j.at("error").dump());
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw BackendError("message content is not a string");
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed chat-completions response: ") + e.what());
  }
}

std::string HttpChatBackend::complete(const PromptBundle& prompt) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme_host_port_.rfind("https://", 0) == 0) {
    throw BackendError("https endpoint requested but built without TLS support");
  }
#endif
  httplib::Client client(scheme_host_port_);
  const auto t_sec = static_cast<time_t>(config_.timeout_s);
  const auto t_usec = static_cast<time_t>((config_.timeout_s - static_cast<double>(t_sec)) * 1e6);
  client.set_connection_timeout(t_sec, t_usec);
  client.set_read_timeout(t_sec, t_usec);
  client.set_write_timeout(t_sec, t_usec);

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = request_body(prompt.text());

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double wait = config_.retry_backoff_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      spdlog::debug("chat backend attempt {}: {}", attempt + 1, last_error);
      continue;
    }
    if (res->status == 200) return extract_content(res->body);
    last_error = "HTTP " + std::to_string(res->status);
    if (res->status != 429 && res->status < 500) break;  // client errors are not retried
  }
  throw BackendError("chat backend gave up after retries: " + last_error);
}

// ---- replay / record ------------------------------------------------------

ReplayBackend::ReplayBackend(std::vector<std::string> responses, std::vector<std::string> errors)
    : responses_(std::move(responses)), errors_(std::move(errors)) {
  errors_.resize(responses_.size());
}

ReplayBackend ReplayBackend::from_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open replay fixture: " + path.string());
  std::vector<std::string> responses, errors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      std::string response = j.value("response", std::string());
      std::string error = j.value("error", std::string());
      if (!j.contains("response") && error.empty()) continue;
      // only a failure with no text to parse is a transport error
      if (!response.empty()) error.clear();
      responses.push_back(std::move(response));
      errors.push_back(std::move(error));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ReplayBackend(std::move(responses), std::move(errors));
}

std::string ReplayBackend::complete(const PromptBundle&) {
  if (next_ >= responses_.size()) throw BackendError("replay fixture exhausted");
  const std::size_t i = next_++;
  if (!errors_[i].empty()) throw BackendError("recorded failure: " + errors_[i]);
  return responses_[i];
}

RecordingBackend::RecordingBackend(TextBackend& inner, std::filesystem::path fixture)
    : inner_(inner), fixture_(std::move(fixture)) {}

std::string RecordingBackend::complete(const PromptBundle& prompt) {
  auto append = [this](const json& row) {
    std::ofstream out(fixture_, std::ios::app);
    if (!out) throw IoError("cannot append to fixture: " + fixture_.string());
    out << row.dump() << "\n";
  };
  const std::string hash = sha256_hex(prompt.text());
  std::string response;
  try {
    response = inner_.complete(prompt);
  } catch (const BackendError& e) {
    append({{"prompt_hash", hash}, {"error", e.what()}});
    throw;
  }
  append({{"prompt_hash", hash}, {"response", response}});
  return response;
}

std::unique_ptr<TextBackend> make_backend(const BackendConfig& config, const highway::RoadConfig& road) {
  config.validate();
  if (config.kind == BackendKind::kHttpChat) return std::make_unique<HttpChatBackend>(config);
  if (config.script == "heuristic") return make_heuristic_backend(road);
  if (config.script == "idle") return make_constant_backend("IDLE");
  if (auto action = highway::ad_action_from_string(config.script)) {
    return make_constant_backend(std::string(highway::to_string(*action)));
  }
  throw ConfigError("unknown scripted backend: " + config.script);
}

}  // namespace hv2i::llm
