// SPDX-License-Identifier: Apache-2.0
#include "dxloop/runner.hpp"

#include "dxloop/protocol.hpp"

namespace dxloop {

const HypothesisOutput* EpisodeTrace::last_hypothesis() const {
  return steps.empty() ? nullptr : &steps.back().hypothesis.output;
}

EpisodeTrace run_episode(const Environment& env, const PatientRecord& record,
                         const Agent& hypothesis_agent, const Agent& decision_agent,
                         const DecisionRewardConfig& rewards, Rng& rng, const EpisodeHooks& hooks) {
  EpisodeTrace trace;
  trace.record_id = record.id;
  trace.truth = record.diagnosis;

  ObservedState state = env.reset(record);
  const ObservedState initial_state = state;
  std::optional<HypothesisOutput> initial_hypothesis;
  std::vector<Turn> transcript;

  const auto fail = [&](const std::string& why) {
    trace.failure = why;
    trace.outcome = EpisodeOutcome{OutcomeKind::InvalidTermination, std::nullopt,
                                   static_cast<int>(state.revealed.size())};
    if (!trace.steps.empty()) trace.steps.back().reward = decision_reward(trace.outcome, rewards);
    state.terminal = true;
    trace.final_state = state;
  };

  while (true) {
    TraceStep step;
    step.state = state;
    try {
      step.hypothesis = hypothesis_agent.hypothesize(state, rng);
    } catch (const std::runtime_error& e) {
      fail(std::string("hypothesis agent: ") + e.what());
      return trace;
    }
    if (hooks.on_hypothesis) hooks.on_hypothesis(state, step.hypothesis, rng);
    const HypothesisOutput& hyp = step.hypothesis.output;
    if (!initial_hypothesis) initial_hypothesis = hyp;
    if (!transcript.empty()) transcript.back().reply = render_followup(transcript.back().reply, hyp);

    try {
      step.decision = decision_agent.decide(
          DecisionContext{state, hyp, transcript, initial_state, *initial_hypothesis}, rng);
    } catch (const std::runtime_error& e) {
      trace.steps.push_back(std::move(step));
      fail(std::string("decision agent: ") + e.what());
      return trace;
    }

    StepResult result = env.step(record, state, step.decision.action);
    step.observation = result.observation;
    transcript.push_back(Turn{step.decision.text, result.observation.text});
    state = std::move(result.state);
    if (result.terminal) {
      trace.outcome = *result.outcome;
      step.reward = decision_reward(trace.outcome, rewards);
      trace.steps.push_back(std::move(step));
      trace.final_state = state;
      return trace;
    }
    trace.steps.push_back(std::move(step));
  }
}

}  // namespace dxloop
