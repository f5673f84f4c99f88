// SPDX-License-Identifier: Apache-2.0
#include "dxloop/rewards.hpp"

#include <cmath>
#include <string>

#include "dxloop/errors.hpp"
#include "dxloop/protocol.hpp"

namespace dxloop {

double CalibrationRewardConfig::lower() const { return std::log(eps); }
double CalibrationRewardConfig::upper() const { return std::log1p(-eps); }

void CalibrationRewardConfig::validate() const {
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("rewards.eps must lie in (0, 0.5)");
}

void DecisionRewardConfig::validate() const {
  if (!std::isfinite(r_pos) || !std::isfinite(r_neg) || !std::isfinite(r_invalid)) {
    throw ConfigError("decision rewards must be finite");
  }
}

double ExplorationSchedule::probability(std::uint64_t step) const {
  return p0 * std::pow(decay, static_cast<double>(step));
}

void ExplorationSchedule::validate() const {
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw ConfigError("exploration p0 must lie in [0, 1]");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("exploration decay must lie in (0, 1]");
}

double calibration_reward(bool correct, double confidence, const CalibrationRewardConfig& config) {
  // Small slack so clamp(level / 10) values computed elsewhere always pass.
  constexpr double kSlack = 1e-12;
  if (!(confidence >= config.eps - kSlack && confidence <= 1.0 - config.eps + kSlack)) {
    throw UsageError("confidence " + std::to_string(confidence) + " outside the clip range");
  }
  const double raw = correct ? std::log(confidence) : std::log1p(-confidence);
  const double lo = config.lower();
  const double hi = config.upper();
  return 2.0 * (raw - lo) / (hi - lo) - 1.0;
}

double decision_reward(const EpisodeOutcome& outcome, const DecisionRewardConfig& config) {
  switch (outcome.kind) {
    case OutcomeKind::CorrectDiagnosis: return config.r_pos;
    case OutcomeKind::WrongDiagnosis: return config.r_neg;
    case OutcomeKind::InvalidTermination:
    case OutcomeKind::BudgetExhausted: return config.r_invalid;
  }
  return config.r_invalid;
}

int explore_confidence(int level, double p, Rng& rng) {
  if (level < 0 || level > kMaxConfidenceLevel) throw UsageError("confidence level out of range");
  if (!rng.bernoulli(p)) return level;
  const int draw = static_cast<int>(rng.uniform_index(kMaxConfidenceLevel));
  return draw >= level ? draw + 1 : draw;
}

}  // namespace dxloop
