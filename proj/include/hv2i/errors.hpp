#pragma once

#include <stdexcept>
#include <string>

namespace hv2i {

// Caller broke a documented precondition (size mismatch, wrong tier, bad index).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Simulation state became non-finite.
class SimulationCorruption : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Zero link distance between a vehicle and a base station.
class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text-generation backend failed (network, timeout, malformed payload).
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model response contained none of the action tokens.
class UnparseableResponse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Prompt still exceeds its character budget after dropping every example.
class PromptBudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hv2i
