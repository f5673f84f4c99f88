// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dxloop/catalog.hpp"

namespace dxloop {

struct EpisodeConfig {
  /// Transitions allowed before the episode is cut off. Stands in for a
  /// generation-length limit.
  int step_budget = 25;
  /// Consecutive rejected actions tolerated; one more ends the episode.
  int retry_budget = 3;

  std::string unavailable_text =
      "The requested test is not available. Please choose a different action.";
  std::string duplicate_text =
      "This test was already requested. Please choose a different action.";
  std::string invalid_text = "Invalid action. Please choose a different action.";
};

/// What the agents can see after `step` transitions.
struct ObservedState {
  std::string history;
  /// Revealed results in reveal order.
  std::vector<std::pair<std::string, std::string>> revealed;
  /// Catalog tests asked for so far, whether or not they were available.
  std::set<std::string> requested;
  int step = 0;
  /// Consecutive rejected actions since the last successful reveal.
  int retries_used = 0;
  bool terminal = false;

  const std::string* result_for(const std::string& test) const;

  friend bool operator==(const ObservedState&, const ObservedState&) = default;
};

struct RequestTest {
  std::string name;
  friend bool operator==(const RequestTest&, const RequestTest&) = default;
};
struct Diagnose {
  std::string label;
  friend bool operator==(const Diagnose&, const Diagnose&) = default;
};
struct Malformed {
  std::string reason;
  friend bool operator==(const Malformed&, const Malformed&) = default;
};

/// Names and labels are validated by `Environment::step`, not here.
using EnvAction = std::variant<RequestTest, Diagnose, Malformed>;

std::string describe(const EnvAction& action);

enum class ObservationKind { TestResult, Unavailable, Duplicate, Invalid, Final };

struct Observation {
  ObservationKind kind = ObservationKind::Final;
  std::string text;
  friend bool operator==(const Observation&, const Observation&) = default;
};

enum class OutcomeKind { CorrectDiagnosis, WrongDiagnosis, InvalidTermination, BudgetExhausted };

struct EpisodeOutcome {
  OutcomeKind kind = OutcomeKind::InvalidTermination;
  std::optional<std::string> predicted;
  int tests_used = 0;
  friend bool operator==(const EpisodeOutcome&, const EpisodeOutcome&) = default;
};

const char* to_string(ObservationKind kind);
const char* to_string(OutcomeKind kind);

struct StepResult {
  ObservedState state;
  Observation observation;
  bool terminal = false;
  std::optional<EpisodeOutcome> outcome;
};

/// Deterministic episode state machine over one patient record. Holds no
/// per-episode state; every call maps (record, state, action) to a new state.
class Environment {
 public:
  explicit Environment(TestCatalog catalog, EpisodeConfig config = {});

  const TestCatalog& catalog() const { return catalog_; }
  const EpisodeConfig& config() const { return config_; }

  /// Initial state: history only. Throws ConfigError for invalid records.
  ObservedState reset(const PatientRecord& record) const;

  /// Throws UsageError when `state` is already terminal.
  StepResult step(const PatientRecord& record, const ObservedState& state,
                  const EnvAction& action) const;

 private:
  TestCatalog catalog_;
  EpisodeConfig config_;
};

/// Record tests not yet revealed. Debugging and oracle support only.
std::set<std::string> available_tests(const ObservedState& state, const PatientRecord& record);

}  // namespace dxloop
