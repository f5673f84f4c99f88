// SPDX-License-Identifier: Apache-2.0
#include "dxloop/environment.hpp"

#include "dxloop/errors.hpp"

namespace dxloop {

const std::string* ObservedState::result_for(const std::string& test) const {
  for (const auto& [name, result] : revealed) {
    if (name == test) return &result;
  }
  return nullptr;
}

std::string describe(const EnvAction& action) {
  struct Visitor {
    std::string operator()(const RequestTest& a) const { return "Test: " + a.name; }
    std::string operator()(const Diagnose& a) const { return "Diagnosis: " + a.label; }
    std::string operator()(const Malformed& a) const { return "Malformed: " + a.reason; }
  };
  return std::visit(Visitor{}, action);
}

const char* to_string(ObservationKind kind) {
  switch (kind) {
    case ObservationKind::TestResult: return "test_result";
    case ObservationKind::Unavailable: return "unavailable";
    case ObservationKind::Duplicate: return "duplicate";
    case ObservationKind::Invalid: return "invalid";
    case ObservationKind::Final: return "final";
  }
  return "unknown";
}

const char* to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::CorrectDiagnosis: return "correct_diagnosis";
    case OutcomeKind::WrongDiagnosis: return "wrong_diagnosis";
    case OutcomeKind::InvalidTermination: return "invalid_termination";
    case OutcomeKind::BudgetExhausted: return "budget_exhausted";
  }
  return "unknown";
}

Environment::Environment(TestCatalog catalog, EpisodeConfig config)
    : catalog_(std::move(catalog)), config_(std::move(config)) {
  if (config_.step_budget < 0 || config_.retry_budget < 0) {
    throw ConfigError("episode budgets must be non-negative");
  }
}

ObservedState Environment::reset(const PatientRecord& record) const {
  validate_record(record, catalog_);
  ObservedState state;
  state.history = record.history;
  return state;
}

StepResult Environment::step(const PatientRecord& record, const ObservedState& state,
                             const EnvAction& action) const {
  if (state.terminal) throw UsageError("step called on a terminal state");

  StepResult out;
  out.state = state;
  ObservedState& next = out.state;
  ++next.step;

  const auto reject = [&](ObservationKind kind, const std::string& text) {
    out.observation = {kind, text};
    ++next.retries_used;
  };

  if (const auto* request = std::get_if<RequestTest>(&action)) {
    if (!catalog_.test_index(request->name)) {
      reject(ObservationKind::Invalid, config_.invalid_text);
    } else if (next.requested.contains(request->name)) {
      reject(ObservationKind::Duplicate, config_.duplicate_text);
    } else {
      next.requested.insert(request->name);
      auto it = record.tests.find(request->name);
      if (it == record.tests.end()) {
        reject(ObservationKind::Unavailable, config_.unavailable_text);
      } else {
        next.revealed.emplace_back(it->first, it->second);
        next.retries_used = 0;
        out.observation = {ObservationKind::TestResult, it->second};
      }
    }
  } else if (const auto* diagnose = std::get_if<Diagnose>(&action)) {
    if (!catalog_.class_index(diagnose->label)) {
      reject(ObservationKind::Invalid, config_.invalid_text);
    } else {
      out.observation = {ObservationKind::Final, {}};
      out.terminal = true;
      out.outcome = EpisodeOutcome{diagnose->label == record.diagnosis
                                       ? OutcomeKind::CorrectDiagnosis
                                       : OutcomeKind::WrongDiagnosis,
                                   diagnose->label, static_cast<int>(next.revealed.size())};
    }
  } else {
    reject(ObservationKind::Invalid, config_.invalid_text);
  }

  if (!out.terminal) {
    std::optional<OutcomeKind> cut;
    if (next.retries_used > config_.retry_budget) {
      cut = OutcomeKind::InvalidTermination;
    } else if (next.step > config_.step_budget) {
      cut = OutcomeKind::BudgetExhausted;
    }
    if (cut) {
      out.terminal = true;
      out.outcome = EpisodeOutcome{*cut, std::nullopt, static_cast<int>(next.revealed.size())};
    }
  }
  next.terminal = out.terminal;
  return out;
}

std::set<std::string> available_tests(const ObservedState& state, const PatientRecord& record) {
  std::set<std::string> out;
  for (const auto& [name, result] : record.tests) {
    if (!state.result_for(name)) out.insert(name);
  }
  return out;
}

}  // namespace dxloop
