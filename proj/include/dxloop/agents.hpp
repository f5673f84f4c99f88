// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dxloop/environment.hpp"
#include "dxloop/policy.hpp"
#include "dxloop/protocol.hpp"
#include "dxloop/rng.hpp"
#include "dxloop/synthetic.hpp"

namespace dxloop {

struct HypothesisStep {
  HypothesisOutput output;
  /// Log-probabilities of the sampled class and level. Zero for deterministic agents.
  double class_log_prob = 0.0;
  double level_log_prob = 0.0;
  /// Raw generation as the agent would emit it.
  std::string text;
};

struct DecisionStep {
  EnvAction action;
  /// Index in the parametric action space, when the agent has one.
  std::optional<std::size_t> action_index;
  double log_prob = 0.0;
  std::string text;
};

/// One earlier exchange with the decision agent: what it generated and what
/// the environment replied.
struct Turn {
  std::string generation;
  std::string reply;
};

struct DecisionContext {
  const ObservedState& state;
  const HypothesisOutput& hypothesis;
  /// Decision-agent exchanges so far in this episode, oldest first. Each
  /// reply already carries the hypothesis line for the following turn.
  std::span<const Turn> transcript;
  /// State and hypothesis the episode opened with.
  const ObservedState& initial_state;
  const HypothesisOutput& initial_hypothesis;
};

/// Thrown by agents whose generations could not be parsed even after re-prompts.
class AgentFormatError : public std::runtime_error {
 public:
  AgentFormatError(const std::string& what, ParseError error)
      : std::runtime_error(what), error_(std::move(error)) {}
  const ParseError& parse_error() const { return error_; }

 private:
  ParseError error_;
};

/// Backend for the hypothesis and/or decision role. Implementations are
/// read-only during acting so one instance can serve concurrent episodes.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual HypothesisStep hypothesize(const ObservedState& state, Rng& rng) const = 0;
  virtual DecisionStep decide(const DecisionContext& context, Rng& rng) const = 0;
};

enum class ActMode { Sample, Greedy };

/// Linear softmax heads over FeatureEncoder features. Keeps a reference to
/// the parameters; the caller keeps them alive.
class ParametricAgent : public Agent {
 public:
  ParametricAgent(const PolicyParams& params, const FeatureEncoder& encoder,
                  ActMode mode = ActMode::Sample)
      : params_(&params), encoder_(&encoder), mode_(mode) {}

  HypothesisStep hypothesize(const ObservedState& state, Rng& rng) const override;
  DecisionStep decide(const DecisionContext& context, Rng& rng) const override;

  const PolicyParams& params() const { return *params_; }
  const FeatureEncoder& encoder() const { return *encoder_; }
  ActMode mode() const { return mode_; }

 private:
  const PolicyParams* params_;
  const FeatureEncoder* encoder_;
  ActMode mode_;
};

/// Exact-posterior agent over a known generative model. Diagnoses once the
/// top posterior reaches `threshold`, otherwise requests the unrequested test
/// with the largest expected entropy reduction.
class OracleAgent : public Agent {
 public:
  OracleAgent(TestCatalog catalog, GenerativeModel model, double threshold);

  HypothesisStep hypothesize(const ObservedState& state, Rng& rng) const override;
  DecisionStep decide(const DecisionContext& context, Rng& rng) const override;

  std::vector<double> posterior(const ObservedState& state) const;
  /// Expected entropy reduction of the posterior from observing `test`.
  double expected_information_gain(const std::vector<double>& posterior, std::size_t test) const;

  double threshold() const { return threshold_; }

 private:
  TestCatalog catalog_;
  GenerativeModel model_;
  double threshold_;
};

/// Level for a top posterior p: round-half-up of 10 p.
int oracle_level(double top_posterior);

double entropy(const std::vector<double>& p);

namespace script {
struct Request {
  std::string test;
};
struct RequestRandom {};  // uniformly chosen unrequested test
struct DiagnoseLabel {
  std::string label;
};
struct DiagnoseHypothesis {};
}  // namespace script

using ScriptStep =
    std::variant<script::Request, script::RequestRandom, script::DiagnoseLabel, script::DiagnoseHypothesis>;

/// Follows a fixed plan indexed by environment step; past the end of the
/// plan it diagnoses the current hypothesis. Hypotheses are a fixed answer.
class ScriptedAgent : public Agent {
 public:
  ScriptedAgent(TestCatalog catalog, std::vector<ScriptStep> plan,
                HypothesisOutput hypothesis);

  /// Diagnoses `label` at step 0.
  static ScriptedAgent immediate(const TestCatalog& catalog, const std::string& label);

  HypothesisStep hypothesize(const ObservedState& state, Rng& rng) const override;
  DecisionStep decide(const DecisionContext& context, Rng& rng) const override;

 private:
  TestCatalog catalog_;
  std::vector<ScriptStep> plan_;
  HypothesisOutput hypothesis_;
};

}  // namespace dxloop
