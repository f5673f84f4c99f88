// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dxloop/environment.hpp"
#include "dxloop/remote.hpp"
#include "dxloop/rewards.hpp"
#include "dxloop/synthetic.hpp"
#include "dxloop/trainer.hpp"

namespace dxloop {

struct MetricsConfig {
  std::size_t n_bins = 10;
  /// Sample actions during evaluation instead of taking the argmax.
  bool sample = false;
  std::size_t threads = 1;
};

struct PathsConfig {
  std::string dataset = "data";
  std::string checkpoints = "checkpoints";
  std::string logs = "logs";
};

struct RunConfig {
  EpisodeConfig env;
  CalibrationRewardConfig calibration;
  DecisionRewardConfig decision;
  TrainConfig trainer;
  MetricsConfig metrics;
  SyntheticConfig synthetic;
  ModelSpec model;
  RemoteConfig remote;
  double oracle_threshold = 0.9;
  PathsConfig paths;
  std::optional<std::uint64_t> seed;

  /// Pushes `seed` into the synthetic and trainer sub-configs.
  void set_seed(std::uint64_t value);
  /// Throws ConfigError for out-of-range values or a missing seed.
  void validate(const TestCatalog& catalog) const;
};

/// Defaults with the standard catalog's model shape filled in.
RunConfig default_config();

/// Sectioned key = value file. Keys absent from the file keep their
/// defaults; unknown sections or keys are a ConfigError.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");

/// Every key with its resolved value; parse_config of the output gives back
/// an equal config (the API key excepted).
std::string format_config(const RunConfig& config);

/// DXLOOP_REMOTE_BASE_URL, DXLOOP_REMOTE_MODEL, DXLOOP_REMOTE_TEMPERATURE,
/// DXLOOP_REMOTE_TIMEOUT, DXLOOP_REMOTE_MAX_IN_FLIGHT and DXLOOP_REMOTE_API_KEY
/// override the [remote] section when set.
void apply_environment(RemoteConfig& remote);

}  // namespace dxloop
