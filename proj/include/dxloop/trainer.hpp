// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dxloop/agents.hpp"
#include "dxloop/evaluate.hpp"
#include "dxloop/policy.hpp"
#include "dxloop/rewards.hpp"
#include "dxloop/runner.hpp"
#include "dxloop/synthetic.hpp"

namespace dxloop {

enum class Objective { Action, Hypothesis, Calibration };

const char* to_string(Objective objective);
/// Throws ConfigError for unknown names.
Objective objective_from_string(const std::string& name);

enum class Head { Confidence, Decision };

/// One sampled action of a policy head, with what PPO needs to re-score it.
struct StepRecord {
  Head head = Head::Decision;
  FeatureVector features;
  /// Allowed actions; empty allows all.
  std::vector<bool> mask;
  std::size_t action = 0;
  double old_log_prob = 0.0;
  double reward = 0.0;
  /// Discounted return; filled by compute_returns.
  double ret = 0.0;
  std::size_t episode = 0;
};

struct RolloutBatch {
  std::vector<EpisodeTrace> traces;
  /// One per hypothesis invocation; each is its own one-step episode.
  std::vector<StepRecord> confidence_steps;
  /// Parametric decisions in episode order.
  std::vector<StepRecord> decision_steps;

  std::vector<StepRecord>& steps(Head head) {
    return head == Head::Confidence ? confidence_steps : decision_steps;
  }
  const std::vector<StepRecord>& steps(Head head) const {
    return head == Head::Confidence ? confidence_steps : decision_steps;
  }
};

struct RolloutOptions {
  /// Decision role; null means the parametric policy (sampling).
  const Agent* decision_agent = nullptr;
  /// Probability of replacing each sampled confidence level.
  double explore_probability = 0.0;
  CalibrationRewardConfig calibration;
  DecisionRewardConfig decision;
};

/// Episode i plays records[i % records.size()] with stream Rng::derive(seed, i).
/// The hypothesis role is always the parametric policy in sampling mode.
RolloutBatch collect_rollouts(const Environment& env, std::span<const PatientRecord> records,
                              const PolicyParams& params, const FeatureEncoder& encoder,
                              std::size_t n_episodes, std::uint64_t seed,
                              const RolloutOptions& options = {});

/// gamma^(T-1-k) * R for a T-step episode with terminal reward R.
std::vector<double> discounted_returns(std::size_t length, double terminal_reward, double gamma);

/// Fills StepRecord::ret for both heads and returns advantages (return minus
/// the head's value baseline) in step order for `head`.
std::vector<double> compute_returns(RolloutBatch& batch, double gamma, const PolicyParams& params,
                                    Head head);

// Losses with analytic gradients. `grad` may be null.

struct ClassTarget {
  FeatureVector features;
  std::size_t label = 0;
};

/// Mean cross-entropy of softmax(W x) against the labels.
double class_loss(const Eigen::MatrixXd& weights, std::span<const ClassTarget> targets,
                  Eigen::MatrixXd* grad);

/// Negated mean clipped surrogate: -mean min(rho A, clip(rho, 1-c, 1+c) A).
double ppo_loss(const Eigen::MatrixXd& weights, std::span<const StepRecord> steps,
                std::span<const double> advantages, double clip, Eigen::MatrixXd* grad);

/// Half mean squared error of v . x against the returns.
double value_loss(const Eigen::VectorXd& weights, std::span<const StepRecord> steps,
                  Eigen::VectorXd* grad);

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments for one parameter block.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;
};

/// In-place Adam descent step on a dense block.
void adam_step(double* param, const double* grad, Eigen::Index size, AdamState& state,
               const AdamConfig& config);

struct Optimizers {
  AdamState confidence;
  AdamState decision;
};

struct TrainConfig {
  /// Adam step size for the policy heads.
  double lr = 1e-2;
  /// Plain gradient step size for the supervised class-head update.
  double supervised_lr = 0.1;
  /// Gradient step size and step count for value-baseline regression.
  double value_lr = 0.05;
  int value_steps = 4;
  std::size_t batch_episodes = 2;
  double clip = 0.2;
  double gamma = 0.99;
  int ppo_epochs = 4;
  std::uint64_t warmup_steps = 959;
  std::uint64_t rotation_steps = 50;
  std::vector<Objective> order{Objective::Action, Objective::Hypothesis, Objective::Calibration};
  std::uint64_t seed = 0;
  std::uint64_t max_steps = 3000;
  std::uint64_t eval_every = 50;
  /// Evaluations without improvement before stopping; 0 disables.
  std::uint64_t patience = 0;
  ExplorationSchedule exploration;
  InitOptions init;

  /// Throws ConfigError.
  void validate() const;
};

struct UpdateStats {
  double loss = 0.0;
  double value_loss = 0.0;
  std::size_t samples = 0;
  /// Set when a non-finite loss or gradient stopped the update; parameters
  /// are then left as they were.
  bool aborted = false;
};

/// PPO epochs on the policy head of `head` followed by regression of its
/// value baseline. Nothing else in `params` changes. Throws UsageError when
/// the batch has no steps for `head`.
UpdateStats ppo_update(PolicyParams& params, RolloutBatch& batch, Head head,
                       const TrainConfig& config, AdamState& optimizer);

struct HypothesisTarget {
  ObservedState state;
  std::string truth;
};

/// One target per hypothesis invocation, labelled with the episode's truth.
std::vector<HypothesisTarget> build_hypothesis_targets(std::span<const EpisodeTrace> traces);

/// One gradient step on the class head's mean cross-entropy. Throws
/// UsageError for an empty target list.
UpdateStats supervised_hypothesis_update(PolicyParams& params, const FeatureEncoder& encoder,
                                         std::span<const HypothesisTarget> targets, double lr);

/// Calibration for steps [0, W), then rotation blocks in the configured order.
Objective cyclic_schedule(std::uint64_t step, const TrainConfig& config);

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  PolicyParams params;
  std::uint64_t step = 0;
  Objective phase = Objective::Calibration;
  Rng rng;
};

void save_checkpoint(const Checkpoint& checkpoint, std::ostream& out);
/// Throws ConfigError on malformed input or a version mismatch.
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint_file(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint_file(const std::string& path);

struct MetricRow {
  std::uint64_t step = 0;
  Objective objective = Objective::Calibration;
  double loss = 0.0;
  double mean_accuracy = 0.0;
  double ece = 0.0;
  double avg_tests = 0.0;
};

std::string metric_history_csv(std::span<const MetricRow> rows);

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<MetricRow> history;
  /// Updates skipped because of a non-finite loss or gradient.
  std::size_t aborted_updates = 0;
};

struct TrainHooks {
  /// Called after every validation run.
  std::function<void(const MetricRow&)> on_eval;
};

/// Runs the scheduled objectives on the train split and validates greedily
/// on the val split. The best checkpoint is the one with the highest mean
/// class accuracy, ties going to fewer average tests (the starting
/// parameters when no evaluation ran).
/// `resume` supplies starting parameters, step and rng; optimizer moments
/// always start from zero. Throws ConfigError when the train or val split is
/// empty.
TrainResult train(const TrainConfig& config, const Environment& env, const Dataset& dataset,
                  const FeatureEncoder& encoder, const CalibrationRewardConfig& calibration,
                  const DecisionRewardConfig& decision, const EvalOptions& eval = {},
                  const TrainHooks& hooks = {}, const std::optional<Checkpoint>& resume = std::nullopt);

}  // namespace dxloop
