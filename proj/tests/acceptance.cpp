// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   hv2i_acceptance                 all criteria (criterion 7 takes several minutes)
//   hv2i_acceptance --only 1,2,3    a subset
//
// Criterion 9 always runs offline against a local mock server and the
// recorded fixture. With HV2I_LLM_ENDPOINT set it also runs 100 live calls,
// recording them to <work>/live_fixture.jsonl and replaying that offline.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "ddqn_oracles.hpp"
#include "generators.hpp"
#include "hv2i/backend.hpp"
#include "hv2i/config.hpp"
#include "hv2i/ddqn.hpp"
#include "hv2i/errors.hpp"
#include "hv2i/llm_policy.hpp"
#include "hv2i/metrics_io.hpp"
#include "hv2i/orchestrator.hpp"
#include "hv2i/radio.hpp"
#include "hv2i/v2i.hpp"
#include "mock_chat_server.hpp"
#include "oracles.hpp"
#include "wilcoxon.hpp"

namespace fs = std::filesystem;
using namespace hv2i;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string fmt_double(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// 1. ------------------------------------------------------------------------

Outcome formula_oracles() {
  using namespace hv2i::radio;
  const auto t0 = Clock::now();
  constexpr int kTrials = 1000;
  constexpr double kTol = 1e-10;
  std::map<std::string, int> bad;
  std::mt19937_64 rng(2024);

  std::uniform_real_distribution<double> pos(-800.0, 800.0), alpha(2.0, 4.5), ka(0.0, 0.1);
  std::exponential_distribution<double> fade(1.0);
  std::uniform_int_distribution<int> n_int(0, 6);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < kTrials; ++i) {
    RfChannelParams p;
    p.path_loss_exponent = alpha(rng);
    p.noise_power = std::pow(10.0, std::uniform_real_distribution<double>(-16.0, -10.0)(rng));
    const auto s = gen::random_station(rng, Tier::kRf, 0);
    std::vector<RfInterferer> ints;
    for (int k = n_int(rng); k > 0; --k) ints.push_back({gen::random_station(rng, Tier::kRf, k), fade(rng)});
    const double x = pos(rng), y = pos(rng), h = fade(rng) + 1e-9;
    if (!oracle::rel_close(rf_sinr(s, {x, y}, p, h, ints),
                           oracle::rf_sinr(s, x, y, p.path_loss_exponent, p.noise_power, h, ints), kTol)) {
      ++bad["rf_sinr"];
    }
  }
  std::uniform_real_distribution<double> tpos(-300.0, 300.0);
  for (int i = 0; i < kTrials; ++i) {
    ThzChannelParams p;
    p.absorption_coeff = ka(rng);
    p.noise_power = std::pow(10.0, std::uniform_real_distribution<double>(-14.0, -10.0)(rng));
    const auto s = gen::random_station(rng, Tier::kThz, 0);
    std::vector<ThzInterferer> ints;
    for (int k = n_int(rng); k > 0; --k) ints.push_back({gen::random_station(rng, Tier::kThz, k), coin(rng)});
    const double x = tpos(rng), y = tpos(rng);
    if (!oracle::rel_close(thz_sinr(s, {x, y}, p, ints),
                           oracle::thz_sinr(s, x, y, p.absorption_coeff, p.noise_power, ints), kTol)) {
      ++bad["thz_sinr"];
    }
  }
  std::uniform_real_distribution<double> log_sinr(-8.0, 6.0), bw(1e3, 1e10);
  for (int i = 0; i < kTrials; ++i) {
    const double w = bw(rng), s = std::pow(10.0, log_sinr(rng));
    if (!oracle::rel_close(shannon_rate(w, s), oracle::shannon(w, s), kTol)) ++bad["shannon_rate"];
  }
  std::uniform_real_distribution<double> rate(0.0, 1e10), mu(0.0, 1.0);
  std::uniform_int_distribution<int> q(1, 12), n(0, 20);
  for (int i = 0; i < kTrials; ++i) {
    const double r = rate(rng), m = mu(rng);
    const int qi = q(rng), ni = n(rng);
    if (!oracle::rel_close(weighted_rate(r, qi, ni, m), oracle::weighted_rate(r, qi, ni, m), kTol)) {
      ++bad["weighted_rate"];
    }
  }
  const highway::RoadConfig road;
  std::uniform_real_distribution<double> v(road.v_min, road.v_max), w(0.0, 10.0);
  std::uniform_int_distribution<int> lane(0, road.n_lanes - 1);
  for (int i = 0; i < kTrials; ++i) {
    highway::AdRewardWeights wts;
    // keep the required ordering c2 > c1 > c4 > c3 > 0
    wts.c3 = 0.1 + w(rng);
    wts.c4 = wts.c3 + 0.1 + w(rng);
    wts.c1 = wts.c4 + 0.1 + w(rng);
    wts.c2 = wts.c1 + 0.1 + w(rng);
    highway::VehicleState s;
    s.v = v(rng);
    s.lane = lane(rng);
    s.y = road.lane_center(s.lane);
    s.collided = coin(rng);
    s.on_road = coin(rng);
    const double got = highway::ad_reward(s, wts, road);
    const double expect = oracle::ad_reward(s.v, s.collided, s.on_road, s.lane, wts.c1, wts.c2, wts.c3, wts.c4,
                                            road.v_min, road.v_max, road.n_lanes);
    if (!oracle::rel_close(got, expect, kTol)) ++bad["ad_reward"];
  }
  std::uniform_real_distribution<double> wr(0.0, 50.0), xi(0.0, 1.2);
  for (int i = 0; i < kTrials; ++i) {
    const double a = wr(rng), b = xi(rng);
    if (!oracle::rel_close(v2i::v2i_reward(a, b), oracle::v2i_reward(a, b), kTol)) ++bad["v2i_reward"];
  }

  const double secs = seconds_since(t0);
  int mismatches = 0;
  std::string which;
  for (const auto& [name, count] : bad) {
    mismatches += count;
    which += " " + name + "=" + std::to_string(count);
  }
  return {mismatches == 0 && secs < 10.0,
          "6 formulas x " + std::to_string(kTrials) + " inputs, tol 1e-10, mismatches " + std::to_string(mismatches) +
              which + ", " + fmt_double(secs, 3) + " s (limit 10 s)"};
}

// 2. ------------------------------------------------------------------------

Outcome ddqn_correctness() {
  using namespace hv2i::ddqn;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n01;
  double worst_grad = 0.0;
  for (auto act : {Activation::kTanh, Activation::kRelu, Activation::kLeakyRelu}) {
    for (int trial = 0; trial < 10; ++trial) {
      QNetwork net = QNetwork::random({5, 6, 4, 3}, act, rng);
      for (auto& l : net.layers()) {
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.1 * n01(rng);
      }
      const int batch = 8;
      Eigen::MatrixXd states(5, batch);
      for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = n01(rng);
      std::vector<int> actions(batch);
      for (auto& a : actions) a = std::uniform_int_distribution<int>(0, 2)(rng);
      Eigen::VectorXd targets(batch);
      for (Eigen::Index i = 0; i < batch; ++i) targets(i) = n01(rng);
      const auto lg = mse_loss_and_gradients(net, states, actions, targets);
      worst_grad = std::max(worst_grad, oracle::fd_worst_relative_error(net, states, actions, targets, lg));
    }
  }

  const auto t1 = Clock::now();
  const double gamma = 0.9;
  const auto q_star = oracle::chain_q_star(gamma);
  const DdqnAgent agent = oracle::train_chain(gamma, 123, 5);
  double worst_q = 0.0;
  for (int s = 0; s < 3; ++s) {
    const auto qv = predict_q(agent.eval_net(), oracle::Chain::onehot(s));
    for (int a = 0; a < 2; ++a) worst_q = std::max(worst_q, std::abs(qv(a) - q_star[s][a]) / std::abs(q_star[s][a]));
  }
  const double chain_secs = seconds_since(t1);
  const bool pass = worst_grad < 1e-4 && worst_q < 0.05 && chain_secs < 60.0;
  return {pass, "worst gradient rel. error " + fmt_double(worst_grad, 3) + " (limit 1e-4); chain MDP worst |Q-Q*|/Q* " +
                    fmt_double(worst_q, 3) + " (limit 0.05) in " + fmt_double(chain_secs, 3) + " s (limit 60 s); total " +
                    fmt_double(seconds_since(t0), 3) + " s"};
}

// 3. ------------------------------------------------------------------------

Outcome retrieval_oracle() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> pool_size(0, 300), k_dist(0, 10), coarse_reward(0, 3);
  std::uniform_real_distribution<double> reward(-2.0, 2.0);
  std::bernoulli_distribution bad_coin(0.3);
  int mismatches = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    const bool coarse = trial % 2 == 1;
    llm::ExamplePool pool(256);  // some instances overflow and evict
    const int n = pool_size(rng);
    for (int i = 0; i < n; ++i) {
      const auto st = coarse ? gen::coarse_obs(rng, 5) : gen::random_obs(rng, 5);
      llm::record_outcome(pool, {st, highway::AdAction::kIdle, coarse ? 1.0 * coarse_reward(rng) : reward(rng), 0},
                          bad_coin(rng));
    }
    const auto state = coarse ? gen::coarse_obs(rng, 5) : gen::random_obs(rng, 5);
    const auto k = static_cast<std::size_t>(k_dist(rng));
    for (const auto* side : {&pool.good(), &pool.bad()}) {
      std::vector<std::uint64_t> got;
      for (const auto& e : llm::select_top_k(*side, state, k)) got.push_back(e.sequence);
      if (got != oracle::top_k_sequences(*side, state, k)) ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(2 * trials) + " (pool, state, K) instances vs exhaustive sort, " +
                               std::to_string(mismatches) + " mismatches"};
}

// 4. and 5. -----------------------------------------------------------------

struct StepLog : StepObserver {
  std::vector<StepRecord> steps;
  std::vector<EpisodeMetrics> episodes;
  void on_step(const StepRecord& r) override { steps.push_back(r); }
  void on_episode(const EpisodeMetrics& m) override { episodes.push_back(m); }
};

Outcome pool_semantics() {
  int violations = 0;
  int steps = 0, bad_steps = 0, episodes = 0;
  for (auto policy : {AdPolicyKind::kLlm, AdPolicyKind::kRandom}) {
    RunConfig cfg;
    cfg.campaign.ad_policy = policy;
    cfg.campaign.n_episodes = 10;
    cfg.llm.pool_capacity = 1'000'000;  // no eviction: growth is visible in the sizes
    HybridLoop loop(cfg);
    StepLog log;
    loop.run_campaign(&log);
    std::size_t cursor = 0;
    for (const auto& m : log.episodes) {
      ++episodes;
      const bool ended_badly = m.collided || m.off_road || m.truncated;
      for (int t = 0; t < m.steps; ++t, ++cursor) {
        const auto& r = log.steps[cursor];
        const bool last = t + 1 == m.steps;
        const bool expect_bad = last && ended_badly;
        ++steps;
        bad_steps += r.bad_example ? 1 : 0;
        if (r.bad_example != expect_bad) ++violations;
        if (expect_bad) {
          if (r.bad_after != r.bad_before + 1 || r.good_after != r.good_before) ++violations;
        } else {
          if (r.good_after != r.good_before + 1 || r.bad_after != r.bad_before) ++violations;
        }
      }
    }
    if (cursor != log.steps.size() || loop.pool().size() != log.steps.size()) ++violations;
  }
  return {violations == 0 && bad_steps > 0,
          std::to_string(steps) + " steps over " + std::to_string(episodes) + " episodes (LLM and random AD), " +
              std::to_string(bad_steps) + " bad, " + std::to_string(violations) + " violations"};
}

Outcome pipeline_dataflow(const fs::path& work) {
  int audited = 0, mismatches = 0;
  for (auto policy : {AdPolicyKind::kLlm, AdPolicyKind::kDdqn}) {
    RunConfig cfg;
    cfg.campaign.ad_policy = policy;
    cfg.campaign.n_episodes = 5;
    const fs::path dir = work / ("dataflow_" + std::string(to_string(policy)));
    fs::remove_all(dir);
    {
      HybridLoop loop(cfg);
      TraceWriter trace(dir, cfg, true);
      loop.run_campaign(&trace);
    }
    std::ifstream in(dir / "steps.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      const auto state = j.at("v2i_state").get<std::vector<double>>();
      const auto action = highway::ad_action_from_string(j.at("ad_action").get<std::string>());
      ++audited;
      if (!action || state.size() != v2i::kEncodedStateDim) {
        ++mismatches;
        continue;
      }
      // slots 2.. are the one-hot AD action
      for (int a = 0; a < highway::kNumAdActions; ++a) {
        const double expect = a == highway::to_index(*action) ? 1.0 : 0.0;
        if (state[static_cast<std::size_t>(2 + a)] != expect) {
          ++mismatches;
          break;
        }
      }
    }
  }
  return {audited > 0 && mismatches == 0, "trace audit of " + std::to_string(audited) +
                                              " steps (LLM and DDQN AD): AD slot matched " +
                                              fmt_double(100.0 * (audited - mismatches) / std::max(audited, 1), 5) + "%"};
}

// 6. ------------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
  RunConfig cfg;  // default scenario, LLM policy on the scripted heuristic backend
  cfg.campaign.n_episodes = 5;
  cfg.set_seed(11);
  const auto run = [&](const fs::path& dir) {
    fs::remove_all(dir);
    HybridLoop loop(cfg);
    TraceWriter trace(dir, cfg, true);
    const auto result = loop.run_campaign(&trace);
    export_metrics(result.episodes, cfg, dir);
  };
  run(work / "det_a");
  run(work / "det_b");
  int differing = 0;
  std::string files;
  for (const char* f : {"metrics.jsonl", "summary.csv", "steps.jsonl", "config.toml"}) {
    if (read_file(work / "det_a" / f) != read_file(work / "det_b" / f)) {
      ++differing;
      files += std::string(" ") + f;
    }
  }
  // the decision trace records wall-clock latency; everything else must match
  const auto without_latency = [](const fs::path& p) {
    std::ifstream in(p);
    std::string line, out;
    while (std::getline(in, line)) {
      auto j = nlohmann::json::parse(line);
      j.erase("latency_ms");
      out += j.dump() + "\n";
    }
    return out;
  };
  if (without_latency(work / "det_a" / "decisions.jsonl") != without_latency(work / "det_b" / "decisions.jsonl")) {
    ++differing;
    files += " decisions.jsonl";
  }
  const bool scenario_ok = cfg.campaign.n_avs == 21 && cfg.highway.road.n_lanes == 4 &&
                           cfg.highway.road.length == 3000.0 && cfg.campaign.n_rbs == 5 && cfg.campaign.n_tbs == 20;
  return {differing == 0 && scenario_ok,
          "21 AVs, 4 lanes, 3 km, 5 RBS, 20 TBS, 5 episodes twice: " + std::to_string(differing) +
              " of 5 output files differ (decisions.jsonl compared without latency_ms)" + files};
}

// 7. ------------------------------------------------------------------------

struct CampaignSeries {
  std::vector<double> v2i;
};

CampaignSeries run_series(RunConfig cfg) {
  HybridLoop loop(std::move(cfg));
  CampaignSeries out;
  for (const auto& m : loop.run_campaign().episodes) out.v2i.push_back(m.v2i_return);
  return out;
}

Outcome convergence_speed(int n_seeds, int n_episodes) {
  const auto t0 = Clock::now();
  std::vector<double> base_ep, hybrid_ep, diffs;
  std::vector<double> base_settle, hybrid_settle;
  std::ostringstream per_seed;
  int hybrid_faster = 0;
  for (int s = 1; s <= n_seeds; ++s) {
    RunConfig hybrid;
    hybrid.campaign.n_episodes = n_episodes;
    hybrid.campaign.write_traces = false;
    hybrid.set_seed(static_cast<std::uint64_t>(s));
    RunConfig baseline = hybrid;
    baseline.campaign.ad_policy = AdPolicyKind::kDdqn;

    const auto& k = hybrid.campaign;
    auto episode_of = [&](const CampaignSeries& c) {
      const auto r = assess_convergence(c.v2i, k.convergence_window, k.convergence_threshold);
      return r.converged ? r.episode : n_episodes + 1;  // never converged ranks last
    };
    const auto h = run_series(hybrid);
    const auto b = run_series(baseline);
    const int he = episode_of(h), be = episode_of(b);
    hybrid_ep.push_back(he);
    base_ep.push_back(be);
    diffs.push_back(static_cast<double>(be - he));
    hybrid_faster += he < be ? 1 : 0;
    hybrid_settle.push_back(settling_episode(h.v2i, k.convergence_window, 0.05));
    base_settle.push_back(settling_episode(b.v2i, k.convergence_window, 0.05));
    per_seed << " " << s << ":" << he << "/" << be;
    spdlog::info("criterion 7 seed {}: hybrid converged at {}, baseline at {}", s, he, be);
  }
  const auto w = stats::wilcoxon_signed_rank_greater(diffs);
  std::vector<double> settle_diff;
  for (std::size_t i = 0; i < base_settle.size(); ++i) settle_diff.push_back(base_settle[i] - hybrid_settle[i]);
  const auto ws = stats::wilcoxon_signed_rank_greater(settle_diff);
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << n_seeds << " seed pairs x " << n_episodes << " episodes, convergence episode hybrid/baseline:" << per_seed.str()
    << "; hybrid earlier in " << hybrid_faster << "/" << n_seeds << ", Wilcoxon W+ = " << w.w_plus << " (n = " << w.n
    << "), one-sided p = " << fmt_double(w.p_value) << " (limit 0.05); secondary, 5% settling: p = "
    << fmt_double(ws.p_value) << "; " << fmt_double(secs / 60.0, 3) << " min (target 30)";
  return {w.p_value < 0.05, d.str()};
}

// 8. ------------------------------------------------------------------------

// HO probability here is fleet-wide (handovers per active AV-step over all
// AVs): the trend concerns handovers among the travelling vehicles. The ego
// alone slows in dense traffic and covers less road per step, so its rate is
// reported alongside but not judged.
Outcome sweep_trend(const fs::path& config_path, int n_seeds) {
  const RunConfig base = load_config(config_path);
  const std::vector<int> sizes = {10, 20, 30};
  std::vector<double> totals(sizes.size()), fleet_ho(sizes.size()), ego_ho(sizes.size());
  int seeds_monotone = 0;
  for (int seed = 1; seed <= n_seeds; ++seed) {
    std::vector<double> t_seed, f_seed;
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      RunConfig cfg = base;
      cfg.campaign.n_avs = sizes[j];
      cfg.set_seed(static_cast<std::uint64_t>(seed));
      HybridLoop loop(cfg);
      const auto eps = loop.run_campaign().episodes;
      const std::size_t tail =
          std::min<std::size_t>(eps.size(), static_cast<std::size_t>(cfg.campaign.summary_window));
      double t = 0.0, f = 0.0, e = 0.0;
      for (std::size_t i = eps.size() - tail; i < eps.size(); ++i) {
        t += eps[i].total_return;
        f += eps[i].fleet_ho_probability();
        e += eps[i].ho_probability();
      }
      t_seed.push_back(t / tail);
      f_seed.push_back(f / tail);
      totals[j] += t / tail / n_seeds;
      fleet_ho[j] += f / tail / n_seeds;
      ego_ho[j] += e / tail / n_seeds;
    }
    if (t_seed[0] >= t_seed[1] && t_seed[1] >= t_seed[2] && f_seed[0] <= f_seed[1] && f_seed[1] <= f_seed[2]) {
      ++seeds_monotone;
    }
  }
  std::ostringstream d;
  d << fs::path(config_path).filename().string() << " (" << to_string(base.campaign.ad_policy) << " "
    << base.campaign.scripted_action << " / " << to_string(base.campaign.v2i_policy) << ", "
    << base.campaign.n_episodes << " episodes), means over " << n_seeds << " seeds:";
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    d << " n_avs " << sizes[j] << ": total " << fmt_double(totals[j], 6) << ", fleet HO " << fmt_double(fleet_ho[j])
      << " (ego " << fmt_double(ego_ho[j]) << ");";
  }
  const bool total_ok = totals[0] >= totals[1] && totals[1] >= totals[2];
  const bool ho_ok = fleet_ho[0] <= fleet_ho[1] && fleet_ho[1] <= fleet_ho[2];
  d << " total non-increasing " << (total_ok ? "yes" : "no") << ", fleet HO non-decreasing " << (ho_ok ? "yes" : "no")
    << "; both trends hold within " << seeds_monotone << "/" << n_seeds << " single seeds";
  return {total_ok && ho_ok, d.str()};
}

// 9. ------------------------------------------------------------------------

struct DecideStats {
  int calls = 0;
  int parsed = 0;
  int fallback = 0;
  int fallback_wrong = 0;  // fallback engaged when it should not have, or the other way round
  std::vector<std::string> responses;
  std::vector<highway::AdAction> actions;
};

DecideStats hundred_decisions(llm::TextBackend& backend) {
  DecideStats st;
  std::mt19937_64 rng(9);
  llm::ExamplePool pool(64);
  const auto tmpl = llm::PromptTemplate::builtin();
  const llm::PromptOptions options;
  for (int i = 0; i < 100; ++i) {
    const auto state = gen::random_obs(rng, 5);
    const auto d = llm::decide(state, pool, tmpl, options, backend);
    ++st.calls;
    st.responses.push_back(d.trace.response);
    st.actions.push_back(d.action);
    bool parseable = false;
    highway::AdAction parsed_action = llm::kFallbackAction;
    try {
      parsed_action = llm::parse_action(d.trace.response);
      parseable = true;
    } catch (const UnparseableResponse&) {
    }
    if (parseable) {
      ++st.parsed;
      if (d.trace.fallback_used || d.action != parsed_action) ++st.fallback_wrong;
    } else {
      ++st.fallback;
      if (!d.trace.fallback_used || d.action != llm::kFallbackAction) ++st.fallback_wrong;
    }
    // grow the pools so later prompts carry examples
    llm::record_outcome(pool, {state, d.action, 0.1 * (i % 7), 0}, i % 5 == 0);
  }
  return st;
}

llm::BackendConfig http_config(const std::string& endpoint) {
  llm::BackendConfig c;
  c.kind = llm::BackendKind::kHttpChat;
  c.endpoint = endpoint;
  c.timeout_s = 30.0;
  c.max_retries = 2;
  c.retry_backoff_s = 0.0;
  if (const char* m = std::getenv("HV2I_LLM_MODEL")) c.model = m;
  if (const char* k = std::getenv("HV2I_LLM_API_KEY_ENV")) c.api_key_env = k;
  return c;
}

bool replays_identically(const fs::path& fixture, const DecideStats& live) {
  auto replay = llm::ReplayBackend::from_jsonl(fixture);
  const auto again = hundred_decisions(replay);
  return again.actions == live.actions && again.parsed == live.parsed && again.fallback == live.fallback;
}

Outcome llm_integration(const fs::path& work) {
  const fs::path fixture = fs::path(HV2I_SOURCE_DIR) / "tests/fixtures/chat_replay.jsonl";
  std::ostringstream d;
  bool pass = true;
  {
    mock::ChatServer server(mock::fixture_handler(fixture.string()));
    auto cfg = http_config(server.endpoint());
    cfg.timeout_s = 5.0;
    llm::HttpChatBackend http(cfg);
    const auto st = hundred_decisions(http);
    const bool ok = st.parsed >= 95 && st.fallback_wrong == 0 && replays_identically(fixture, st);
    pass = pass && ok;
    d << "offline fixture over HTTP: " << st.parsed << "/100 parseable, fallback on " << st.fallback
      << ", misrouted " << st.fallback_wrong << ", replay " << (ok ? "identical" : "differs");
  }
  if (const char* endpoint = std::getenv("HV2I_LLM_ENDPOINT")) {
    const fs::path live_path = work / "live_fixture.jsonl";
    fs::remove(live_path);
    llm::HttpChatBackend http(http_config(endpoint));
    llm::RecordingBackend rec(http, live_path);
    const auto st = hundred_decisions(rec);
    const bool ok = st.parsed >= 95 && st.fallback_wrong == 0 && replays_identically(live_path, st);
    pass = pass && ok;
    d << "; live " << endpoint << ": " << st.parsed << "/100 parseable, fallback on " << st.fallback
      << ", misrouted " << st.fallback_wrong << ", recorded to " << live_path.string();
  } else {
    d << "; live endpoint skipped (HV2I_LLM_ENDPOINT unset)";
  }
  return {pass, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the hybrid highway V2I simulator"};
  std::vector<int> only;
  int seeds = 10;
  int episodes = 300;
  std::string work = (fs::temp_directory_path() / "hv2i_acceptance").string();
  std::string sweep_config = (fs::path(HV2I_SOURCE_DIR) / "configs/sweep_fixed.toml").string();
  app.add_option("--only", only, "criteria to run, e.g. --only 1,2,3")->delimiter(',')->check(CLI::Range(1, 9));
  app.add_option("--seeds", seeds, "seed pairs for criterion 7")->check(CLI::Range(1, 1000))->capture_default_str();
  app.add_option("--episodes", episodes, "episodes per campaign for criterion 7")
      ->check(CLI::Range(100, 100000))
      ->capture_default_str();
  app.add_option("--work", work, "scratch directory")->capture_default_str();
  int sweep_seeds = 5;
  app.add_option("--sweep-config", sweep_config, "config for criterion 8")->capture_default_str();
  app.add_option("--sweep-seeds", sweep_seeds, "scenario seeds averaged in criterion 8")
      ->check(CLI::Range(1, 1000))
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);
  if (std::getenv("HV2I_ACCEPTANCE_VERBOSE") != nullptr) spdlog::set_level(spdlog::level::info);

  const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9}
                                              : std::set<int>(only.begin(), only.end());
  fs::create_directories(work);
  const fs::path w(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"formula oracles", formula_oracles},
      {"DDQN correctness", ddqn_correctness},
      {"retrieval oracle", retrieval_oracle},
      {"pool semantics", pool_semantics},
      {"pipeline dataflow", [&] { return pipeline_dataflow(w); }},
      {"end-to-end determinism", [&] { return determinism(w); }},
      {"convergence speed, hybrid vs DDQN baseline", [&] { return convergence_speed(seeds, episodes); }},
      {"n_avs sweep trend", [&] { return sweep_trend(sweep_config, sweep_seeds); }},
      {"LLM backend integration", [&] { return llm_integration(w); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (selected.count(id) == 0) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
