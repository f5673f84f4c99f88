// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dxloop/agents.hpp"
#include "dxloop/metrics.hpp"
#include "dxloop/runner.hpp"

namespace dxloop {

struct EvalOptions {
  std::size_t n_bins = 10;
  std::uint64_t seed = 0;
  /// Episodes run on this many worker threads. Results do not depend on it.
  std::size_t threads = 1;
};

struct EvalReport {
  std::vector<std::string> classes;
  std::size_t episodes = 0;
  ClassAccuracy accuracy;
  F1Scores f1;
  CalibrationReport calibration;
  double avg_tests = 0.0;
  /// Final hypothesis vs truth, ignoring the decision agent.
  double hypothesis_accuracy = 0.0;
  /// Indexed by OutcomeKind.
  std::array<std::size_t, 4> outcomes{};
};

struct EvalResult {
  EvalReport report;
  std::vector<EpisodeTrace> traces;
};

/// One episode per record; episode i draws from Rng::derive(seed, i). Agents
/// choose greedily or by sampling according to how they were built.
/// Throws std::invalid_argument for an empty record set.
EvalResult evaluate(const Environment& env, std::span<const PatientRecord> records,
                    const Agent& hypothesis_agent, const Agent& decision_agent,
                    const DecisionRewardConfig& rewards, const EvalOptions& options = {});

EvalReport summarize(std::span<const EpisodeTrace> traces, const TestCatalog& catalog,
                     std::size_t n_bins = 10);

/// Human-readable table.
std::string format_report(const EvalReport& report);
/// metric,value rows.
std::string report_csv(const EvalReport& report);
/// bin_lower,bin_upper,count,mean_conf,accuracy rows.
std::string calibration_csv(const CalibrationReport& report);

}  // namespace dxloop
