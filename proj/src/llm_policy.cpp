#include "hv2i/llm_policy.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <regex>

#include "hv2i/backend.hpp"
#include "hv2i/errors.hpp"
#include "hv2i/hash.hpp"

namespace hv2i::llm {

using highway::AdAction;
using highway::AdObservation;

namespace {

std::string fixed(double value, int decimals) {
  if (std::abs(value) < 0.5 * std::pow(10.0, -decimals)) value = 0.0;  // no "-0.00"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

std::string render_row(const highway::ObservedVehicle& row) {
  // vx = v and vy = v * tan(psi) recover the longitudinal and lateral rates.
  return "x=" + fixed(row.x, 2) + ", y=" + fixed(row.y, 2) + ", vx=" + fixed(row.v, 2) +
         ", vy=" + fixed(row.v * std::tan(row.psi), 2);
}

std::string render_inline(const AdObservation& state) {
  std::string out = "[";
  for (std::size_t i = 0; i < state.rows.size(); ++i) {
    if (!state.rows[i].present) continue;
    if (i > 0) out += "; ";
    out += (i == 0 ? std::string("ego: ") : "vehicle " + std::to_string(i) + ": ");
    out += render_row(state.rows[i]);
  }
  return out + "]";
}

std::string render_examples(const std::string& intro, const std::vector<Example>& examples) {
  std::string out = intro;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    out += std::to_string(i + 1) + ". state: " + render_inline(e.state) + " -> action: " +
           std::string(highway::to_string(e.action)) + " -> reward: " + fixed(e.reward, 3) + "\n";
  }
  return out;
}

void replace_all(std::string& text, const std::string& from, const std::string& to) {
  for (std::size_t pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
}

struct Scored {
  const Example* example;
  double distance;
};

}  // namespace

ExamplePool::ExamplePool(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ContractViolation("ExamplePool capacity must be >= 1");
}

void ExamplePool::record(Example example, bool terminated_badly) {
  for (const auto& row : example.state.rows) {
    if (!std::isfinite(row.x) || !std::isfinite(row.y) || !std::isfinite(row.v) || !std::isfinite(row.psi)) {
      throw ContractViolation("ExamplePool: non-finite example state");
    }
  }
  if (!std::isfinite(example.reward)) throw ContractViolation("ExamplePool: non-finite example reward");
  auto& target = terminated_badly ? bad_ : good_;
  example.sequence = next_sequence_++;
  target.push_back(std::move(example));
  if (target.size() > capacity_) target.pop_front();
}

void record_outcome(ExamplePool& pool, Example example, bool terminated_badly) {
  pool.record(std::move(example), terminated_badly);
}

double euclidean_distance(const AdObservation& state, const AdObservation& example_state) {
  if (state.rows.size() != example_state.rows.size()) {
    throw ContractViolation("euclidean_distance: observations have " + std::to_string(state.rows.size()) +
                            " and " + std::to_string(example_state.rows.size()) + " rows");
  }
  double d = 0.0;
  for (std::size_t j = 0; j < state.rows.size(); ++j) {
    const auto& a = state.rows[j];
    const auto& b = example_state.rows[j];
    const double dx = a.x - b.x, dy = a.y - b.y, dv = a.v - b.v, dpsi = a.psi - b.psi;
    d += std::sqrt(dx * dx + dy * dy + dv * dv + dpsi * dpsi);
  }
  return d;
}

std::vector<Example> select_top_k(const std::deque<Example>& pool, const AdObservation& state,
                                  std::size_t k) {
  std::vector<Scored> scored;
  scored.reserve(pool.size());
  for (const auto& e : pool) scored.push_back({&e, euclidean_distance(state, e.state)});

  const std::size_t n = std::min(k, scored.size());
  auto nearer = [](const Scored& a, const Scored& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.example->sequence > b.example->sequence;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), nearer);
  scored.resize(n);
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.example->reward != b.example->reward) return a.example->reward > b.example->reward;
    return nearer(a, b);
  });

  std::vector<Example> out;
  out.reserve(n);
  for (const auto& s : scored) out.push_back(*s.example);
  return out;
}

PromptTemplate PromptTemplate::builtin() {
  PromptTemplate t;
  t.task =
      "Task Description: Assist in driving the ego vehicle on a {n_lanes} lanes single direction highway.\n"
      "Task Goal: 1) Achieve maximum velocity for the ego vehicle while minimizing collisions. "
      "2) Reduce redundant lane changes (LANE_RIGHT, LANE_LEFT) unless required for safety. "
      "3) Prefer keeping the vehicle in the right-most lane when safe to do so.\n"
      "Task Definition: Consider the specific Environment features below.\n"
      "1) 'x': Horizontal offset of the vehicle relative to the ego vehicle along the x-axis.\n"
      "2) 'y': Vertical offset of the vehicle relative to the ego vehicle along the y-axis.\n"
      "3) 'vx': Velocity of the vehicle along the x-axis.\n"
      "4) 'vy': Velocity of the vehicle along the y-axis. A non-zero value indicates lane changes.\n";
  t.good_intro =
      "Here are some examples of good previous experiences. Consider trying a higher reward action "
      "based on these examples:\n";
  t.bad_intro =
      "Here are some examples of poor previous experiences. It is suggested to avoid selecting these "
      "actions based on these examples:\n";
  t.state_intro =
      "Current state (the ego row reports its own lateral position as y; y=0.00 is the centre of the "
      "right-most lane and y grows to the left):\n";
  t.decision = "Decisions: Choose one action from FASTER, SLOWER, LANE_RIGHT, LANE_LEFT, or IDLE.\n";
  return t;
}

void PromptTemplate::validate() const {
  for (const char* header : {"Task Description", "Task Goal", "Task Definition"}) {
    if (task.find(header) == std::string::npos) {
      throw ConfigError(std::string("prompt template is missing the \"") + header + "\" section");
    }
  }
  if (decision.find("Decisions") == std::string::npos) {
    throw ConfigError("prompt template is missing the \"Decisions\" section");
  }
}

std::string PromptBundle::text() const {
  return task_description + "\n" + good_block + "\n" + bad_block + "\n" + state_block + "\n" +
         decision_instruction;
}

std::string render_observation(const AdObservation& state) {
  std::string out;
  for (std::size_t i = 0; i < state.rows.size(); ++i) {
    if (!state.rows[i].present) continue;
    out += (i == 0 ? std::string("ego: ") : "vehicle " + std::to_string(i) + ": ");
    out += render_row(state.rows[i]) + "\n";
  }
  return out;
}

PromptBundle build_prompt(const AdObservation& state, const ExamplePool& pools,
                          const PromptTemplate& tmpl, const PromptOptions& options) {
  tmpl.validate();
  std::vector<Example> good = select_top_k(pools.good(), state, options.top_k);
  std::vector<Example> bad = select_top_k(pools.bad(), state, options.top_k);

  PromptBundle bundle;
  bundle.task_description = tmpl.task;
  replace_all(bundle.task_description, "{n_lanes}", std::to_string(options.n_lanes));
  bundle.state_block = tmpl.state_intro + render_observation(state);
  bundle.decision_instruction = tmpl.decision;
  bundle.state = state;

  while (true) {
    bundle.good_block = render_examples(tmpl.good_intro, good);
    bundle.bad_block = render_examples(tmpl.bad_intro, bad);
    bundle.good_examples = good.size();
    bundle.bad_examples = bad.size();
    if (bundle.text().size() <= options.char_budget) return bundle;
    if (good.empty() && bad.empty()) {
      throw PromptBudgetExceeded("prompt needs " + std::to_string(bundle.text().size()) +
                                 " characters with no examples; budget is " +
                                 std::to_string(options.char_budget));
    }
    // Drop the farthest remaining example (ties: the older one).
    auto farthest_in = [&](std::vector<Example>& v) {
      auto it = std::max_element(v.begin(), v.end(), [&](const Example& a, const Example& b) {
        const double da = euclidean_distance(state, a.state), db = euclidean_distance(state, b.state);
        return da != db ? da < db : a.sequence > b.sequence;
      });
      return it;
    };
    auto g = farthest_in(good);
    auto b = farthest_in(bad);
    const double dg = g != good.end() ? euclidean_distance(state, g->state) : -1.0;
    const double db = b != bad.end() ? euclidean_distance(state, b->state) : -1.0;
    if (dg >= db) {
      good.erase(g);
    } else {
      bad.erase(b);
    }
  }
}

AdAction parse_action(const std::string& response_text) {
  std::string norm;
  norm.reserve(response_text.size());
  for (unsigned char c : response_text) {
    norm.push_back(std::isalnum(c) || c == '_' ? static_cast<char>(std::toupper(c)) : ' ');
  }
  static const std::regex lane_phrase(R"(\bLANE[ _]+(LEFT|RIGHT)\b)");
  norm = std::regex_replace(norm, lane_phrase, "LANE_$1");

  std::optional<AdAction> last;
  std::size_t i = 0;
  while (i < norm.size()) {
    while (i < norm.size() && norm[i] == ' ') ++i;
    std::size_t j = i;
    while (j < norm.size() && norm[j] != ' ') ++j;
    if (j > i) {
      if (auto a = highway::ad_action_from_string(std::string_view(norm).substr(i, j - i))) last = a;
    }
    i = j;
  }
  if (!last) throw UnparseableResponse("no action token in response");
  return *last;
}

Decision decide(const AdObservation& state, const ExamplePool& pools, const PromptTemplate& tmpl,
                const PromptOptions& options, TextBackend& backend) {
  Decision d;
  const auto start = std::chrono::steady_clock::now();
  try {
    PromptBundle bundle = build_prompt(state, pools, tmpl, options);
    d.trace.prompt = bundle.text();
    d.trace.prompt_hash = sha256_hex(d.trace.prompt);
    d.trace.response = backend.complete(bundle);
    d.trace.parsed = parse_action(d.trace.response);
    d.action = *d.trace.parsed;
  } catch (const std::exception& e) {
    d.action = kFallbackAction;
    d.trace.fallback_used = true;
    d.trace.error = e.what();
  } catch (...) {
    d.action = kFallbackAction;
    d.trace.fallback_used = true;
    d.trace.error = "unknown error";
  }
  d.trace.action = d.action;
  d.trace.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return d;
}

}  // namespace hv2i::llm
