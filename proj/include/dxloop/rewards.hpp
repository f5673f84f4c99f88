// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "dxloop/environment.hpp"
#include "dxloop/rng.hpp"

namespace dxloop {

/// Log-score betting reward on a verbalized confidence, affinely rescaled so
/// that the clip range [eps, 1 - eps] maps onto [-1, 1].
struct CalibrationRewardConfig {
  double eps = 0.05;

  double lower() const;  // ln(eps)
  double upper() const;  // ln(1 - eps)
  void validate() const;
};

struct DecisionRewardConfig {
  double r_pos = 1.0;
  double r_neg = -1.0;
  double r_invalid = -1.5;
  void validate() const;
};

struct ExplorationSchedule {
  double p0 = 0.9;
  double decay = 0.995;

  /// p0 * decay^step.
  double probability(std::uint64_t step) const;
  void validate() const;
};

/// ln(c) if correct else ln(1 - c), rescaled to [-1, 1].
/// Throws UsageError when c lies outside [eps, 1 - eps].
double calibration_reward(bool correct, double confidence, const CalibrationRewardConfig& config = {});

double decision_reward(const EpisodeOutcome& outcome, const DecisionRewardConfig& config = {});

/// With probability p, a level drawn uniformly from the other ten levels;
/// otherwise `level` unchanged.
int explore_confidence(int level, double p, Rng& rng);

}  // namespace dxloop
