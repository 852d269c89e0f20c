#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "hv2i/backend.hpp"
#include "hv2i/config.hpp"
#include "hv2i/errors.hpp"
#include "hv2i/metrics_io.hpp"
#include "hv2i/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace hv2i;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string backend;  // scripted[:SCRIPT] | http
  std::optional<int> episodes;
};

void add_common(CLI::App* cmd, CommonOptions& o, const std::string& default_out) {
  o.out = default_out;
  cmd->add_option("--config", o.config, "run config (TOML); built-in defaults when omitted");
  cmd->add_option("--seed", o.seed, "sets env, learner and backend seeds");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--backend", o.backend, "LLM backend: scripted[:heuristic|idle|ACTION] or http");
  cmd->add_option("--episodes", o.episodes, "override campaign.n_episodes")->check(CLI::PositiveNumber);
}

RunConfig effective_config(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (o.episodes) cfg.campaign.n_episodes = *o.episodes;
  if (!o.backend.empty()) {
    const auto colon = o.backend.find(':');
    const std::string kind = o.backend.substr(0, colon);
    if (kind == "http") {
      cfg.llm.backend.kind = llm::BackendKind::kHttpChat;
    } else if (kind == "scripted") {
      cfg.llm.backend.kind = llm::BackendKind::kScripted;
      if (colon != std::string::npos) cfg.llm.backend.script = o.backend.substr(colon + 1);
    } else {
      throw ConfigError("--backend must be scripted[:SCRIPT] or http, got '" + o.backend + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs one campaign into `out`. Returns the campaign result; on an episode
// abort the completed episodes are still exported before rethrowing.
CampaignResult run_into(const RunConfig& cfg, const fs::path& out, std::unique_ptr<llm::TextBackend> backend) {
  fs::create_directories(out);
  HybridLoop loop(cfg, std::move(backend));
  TraceWriter trace(out, cfg, cfg.campaign.write_traces);
  struct Collector : StepObserver {
    TraceWriter* inner;
    std::vector<EpisodeMetrics> episodes;
    void on_step(const StepRecord& r) override { inner->on_step(r); }
    void on_episode(const EpisodeMetrics& m) override {
      episodes.push_back(m);
      if (m.episode % 25 == 0) {
        spdlog::info("episode {}: total {:.3f} (ad {:.3f}, v2i {:.3f}), steps {}", m.episode, m.total_return,
                     m.ad_return, m.v2i_return, m.steps);
      }
    }
  } collector;
  collector.inner = &trace;
  try {
    CampaignResult result = loop.run_campaign(&collector);
    export_metrics(result.episodes, cfg, out);
    write_text(out / "convergence.json", convergence_json(result, cfg));
    return result;
  } catch (const EpisodeAborted&) {
    export_metrics(collector.episodes, cfg, out);
    throw;
  }
}

int cmd_run(const CommonOptions& o) {
  const RunConfig cfg = effective_config(o);
  spdlog::info("config {} -> {}", config_hash(cfg), o.out);
  const auto result = run_into(cfg, o.out, nullptr);
  std::cout << summary_csv(result.episodes, cfg);
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_sweep(const CommonOptions& o, const std::string& n_avs_list, const std::string& velocity_list, int jobs) {
  const RunConfig base = effective_config(o);
  std::vector<int> n_avs;
  std::vector<double> velocities;
  for (const auto& s : split_list(n_avs_list)) n_avs.push_back(std::stoi(s));
  for (const auto& s : split_list(velocity_list)) velocities.push_back(std::stod(s));
  if (n_avs.empty()) n_avs.push_back(base.campaign.n_avs);
  if (velocities.empty()) velocities.push_back(base.campaign.desired_velocity);

  struct Cell {
    RunConfig cfg;
    fs::path dir;
  };
  std::vector<Cell> cells;
  for (int n : n_avs) {
    for (double v : velocities) {
      RunConfig cfg = base;
      cfg.campaign.n_avs = n;
      cfg.campaign.desired_velocity = v;
      cfg.validate();
      std::ostringstream name;
      name << "n_avs_" << n << "_v_" << v;
      cells.push_back({cfg, fs::path(o.out) / name.str()});
    }
  }
  spdlog::info("sweep: {} cells, {} job(s)", cells.size(), jobs);

  int failures = 0;
  if (jobs <= 1) {
    for (const auto& c : cells) run_into(c.cfg, c.dir, nullptr);
  } else {
    std::size_t next = 0;
    int running = 0;
    std::fflush(nullptr);
    while (next < cells.size() || running > 0) {
      while (running < jobs && next < cells.size()) {
        const pid_t pid = fork();
        if (pid < 0) throw IoError("fork failed");
        if (pid == 0) {
          int code = 0;
          try {
            run_into(cells[next].cfg, cells[next].dir, nullptr);
          } catch (const std::exception& e) {
            std::cerr << "hv2i: " << cells[next].dir.string() << ": " << e.what() << "\n";
            code = 1;
          }
          std::fflush(nullptr);
          _exit(code);
        }
        ++next;
        ++running;
      }
      int status = 0;
      if (wait(&status) > 0) {
        --running;
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failures;
      }
    }
  }

  std::string table = std::string(kSummaryHeader) + "\n";
  for (const auto& c : cells) {
    const std::string summary = read_file(c.dir / "summary.csv");
    const auto nl = summary.find('\n');
    table += summary.substr(nl + 1);
  }
  write_text(fs::path(o.out) / "sweep.csv", table);
  std::cout << table;
  return failures == 0 ? 0 : 1;
}

int cmd_replay(const CommonOptions& o, const fs::path& trace) {
  const fs::path run_dir = fs::is_directory(trace) ? trace : trace.parent_path();
  const fs::path trace_file = fs::is_directory(trace) ? trace / "decisions.jsonl" : trace;
  const RunConfig cfg = load_config(run_dir / "config.toml");
  const std::string hash = config_hash(cfg);

  std::unique_ptr<llm::TextBackend> backend;
  if (cfg.campaign.ad_policy == AdPolicyKind::kLlm) {
    std::ifstream in(trace_file);
    if (!in) throw IoError("cannot open trace " + trace_file.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (j.value("config_hash", hash) != hash) {
        throw ConfigError(trace_file.string() + ": trace config hash does not match " +
                          (run_dir / "config.toml").string());
      }
    }
    backend = std::make_unique<llm::ReplayBackend>(llm::ReplayBackend::from_jsonl(trace_file));
  }

  const fs::path out = o.out;
  if (fs::exists(out) && fs::equivalent(out, run_dir)) throw ConfigError("--out must differ from the replayed run");
  run_into(cfg, out, std::move(backend));
  const bool same = read_file(out / "metrics.jsonl") == read_file(run_dir / "metrics.jsonl");
  std::cout << (same ? "replay: metrics identical" : "replay: metrics differ") << " (config " << hash << ")\n";
  return same ? 0 : 1;
}

int cmd_validate(const CommonOptions& o) {
  const RunConfig cfg = effective_config(o);
  std::cout << "ok " << config_hash(cfg) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid LLM/DDQN highway V2I simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  CommonOptions run_opts, sweep_opts, replay_opts, validate_opts;
  auto* run = app.add_subcommand("run", "run one campaign");
  add_common(run, run_opts, "out/run");

  auto* sweep = app.add_subcommand("sweep", "run a grid over n_avs and desired velocity");
  add_common(sweep, sweep_opts, "out/sweep");
  std::string n_avs_list, velocity_list;
  int jobs = 1;
  sweep->add_option("--n-avs", n_avs_list, "comma-separated n_avs values, e.g. 10,20,30");
  sweep->add_option("--velocities", velocity_list, "comma-separated desired velocities, e.g. 15,20,25,30");
  sweep->add_option("--jobs", jobs, "parallel worker processes")->check(CLI::PositiveNumber);

  auto* replay = app.add_subcommand("replay", "re-run a recorded campaign and compare metrics");
  add_common(replay, replay_opts, "out/replay");
  std::string trace;
  replay->add_option("--trace", trace, "run directory or its decisions.jsonl")->required();

  auto* validate = app.add_subcommand("validate-config", "load and validate a config, print its hash");
  add_common(validate, validate_opts, "");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
  try {
    if (*run) return cmd_run(run_opts);
    if (*sweep) return cmd_sweep(sweep_opts, n_avs_list, velocity_list, jobs);
    if (*replay) {
      if (!replay_opts.config.empty() || replay_opts.seed || !replay_opts.backend.empty() || replay_opts.episodes) {
        throw ConfigError("replay takes its config from the recorded run; only --trace and --out apply");
      }
      return cmd_replay(replay_opts, trace);
    }
    if (*validate) return cmd_validate(validate_opts);
  } catch (const std::exception& e) {
    std::cerr << "hv2i: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
