#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "hv2i/highway.hpp"

namespace hv2i::llm {

struct Example {
  highway::AdObservation state;
  highway::AdAction action = highway::AdAction::kIdle;
  double reward = 0.0;
  std::uint64_t sequence = 0;  // insertion order across both pools, assigned by the pool
};

// Good and bad demonstration stores with FIFO eviction at capacity.
class ExamplePool {
 public:
  explicit ExamplePool(std::size_t capacity = 512);

  const std::deque<Example>& good() const { return good_; }
  const std::deque<Example>& bad() const { return bad_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return good_.size() + bad_.size(); }
  // Total examples ever recorded (ignores eviction).
  std::uint64_t recorded() const { return next_sequence_; }

  void record(Example example, bool terminated_badly);

 private:
  std::size_t capacity_;
  std::deque<Example> good_;
  std::deque<Example> bad_;
  std::uint64_t next_sequence_ = 0;
};

// Bad outcome (collision or truncation) goes to the bad pool, otherwise
// to the good pool; the other pool is left untouched.
void record_outcome(ExamplePool& pool, Example example, bool terminated_badly);

// Sum over vehicle rows of the Euclidean norm of the (x, y, v, psi)
// difference. Throws ContractViolation on a row-count mismatch.
double euclidean_distance(const highway::AdObservation& state,
                          const highway::AdObservation& example_state);

// The K nearest entries (distance ties: newest first), returned in
// descending-reward order (ties: nearer, then newer, first).
std::vector<Example> select_top_k(const std::deque<Example>& pool,
                                  const highway::AdObservation& state, std::size_t k);

struct PromptTemplate {
  std::string task;            // Task Description, Task Goal, Task Definition
  std::string good_intro;
  std::string bad_intro;
  std::string state_intro;
  std::string decision;        // Decisions

  // Occurrences of "{n_lanes}" in `task` are replaced at render time.
  static PromptTemplate builtin();
  void validate() const;
};

struct PromptBundle {
  std::string task_description;
  std::string good_block;
  std::string bad_block;
  std::string state_block;
  std::string decision_instruction;
  highway::AdObservation state;  // structured copy for scripted backends
  std::size_t good_examples = 0;
  std::size_t bad_examples = 0;

  std::string text() const;
};

struct PromptOptions {
  std::size_t top_k = 3;
  std::size_t char_budget = 12'000;
  int n_lanes = 4;
};

// Deterministic for fixed inputs. When the text exceeds the character
// budget the farthest selected examples are dropped first; throws
// PromptBudgetExceeded if it still does not fit with none left.
PromptBundle build_prompt(const highway::AdObservation& state, const ExamplePool& pools,
                          const PromptTemplate& tmpl, const PromptOptions& options);

std::string render_observation(const highway::AdObservation& state);

// Case-insensitive search for the action tokens (markup and punctuation
// ignored, "LANE LEFT" accepted). The last occurrence wins. Throws
// UnparseableResponse when none is present.
highway::AdAction parse_action(const std::string& response_text);

class TextBackend;

struct DecisionTrace {
  std::string prompt;
  std::string prompt_hash;
  std::string response;
  std::optional<highway::AdAction> parsed;
  highway::AdAction action = highway::AdAction::kIdle;
  bool fallback_used = false;
  std::string error;
  double latency_ms = 0.0;
};

struct Decision {
  highway::AdAction action = highway::AdAction::kIdle;
  DecisionTrace trace;
};

inline constexpr highway::AdAction kFallbackAction = highway::AdAction::kIdle;

// Prompt -> backend -> parse. Never throws: every failure yields the
// fallback action with trace.fallback_used set.
Decision decide(const highway::AdObservation& state, const ExamplePool& pools,
                const PromptTemplate& tmpl, const PromptOptions& options, TextBackend& backend);

}  // namespace hv2i::llm
