// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dxloop/agents.hpp"
#include "dxloop/environment.hpp"
#include "dxloop/rewards.hpp"

namespace dxloop {

struct TraceStep {
  ObservedState state;  // before the decision
  HypothesisStep hypothesis;
  DecisionStep decision;
  Observation observation;
  /// Terminal decision reward on the last step, 0 elsewhere.
  double reward = 0.0;
};

struct EpisodeTrace {
  std::string record_id;
  std::string truth;
  std::vector<TraceStep> steps;
  EpisodeOutcome outcome;
  ObservedState final_state;
  /// Set when an agent failed (unparseable output, transport error) and the
  /// episode was ended as an invalid termination.
  std::optional<std::string> failure;

  /// Last hypothesis produced in the episode, if any.
  const HypothesisOutput* last_hypothesis() const;
};

struct EpisodeHooks {
  /// Called on every hypothesis before the decision agent sees it. The
  /// trainer uses it for confidence exploration.
  std::function<void(const ObservedState&, HypothesisStep&, Rng&)> on_hypothesis;
};

/// Runs hypothesis -> decision -> environment step until the episode ends.
EpisodeTrace run_episode(const Environment& env, const PatientRecord& record,
                         const Agent& hypothesis_agent, const Agent& decision_agent,
                         const DecisionRewardConfig& rewards, Rng& rng,
                         const EpisodeHooks& hooks = {});

}  // namespace dxloop
