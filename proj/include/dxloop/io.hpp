// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dxloop/catalog.hpp"
#include "dxloop/runner.hpp"
#include "dxloop/synthetic.hpp"

namespace dxloop {

// Patient records, one JSON object per line:
//   {"id": str, "diagnosis": str, "history": str, "tests": {name: result}}
// Any other key is rejected.

std::string record_to_json(const PatientRecord& record);
/// Throws ConfigError naming `line` for malformed or invalid input.
PatientRecord record_from_json(const std::string& text, const TestCatalog& catalog, std::size_t line = 0);

/// Blank lines are skipped. Errors carry the 1-based line number.
std::vector<PatientRecord> read_records(std::istream& in, const TestCatalog& catalog,
                                        const std::string& origin = "<records>");
std::vector<PatientRecord> load_records(const std::string& path, const TestCatalog& catalog);
void write_records(std::span<const PatientRecord> records, std::ostream& out);
void save_records(std::span<const PatientRecord> records, const std::string& path);

/// train.jsonl, val.jsonl and test.jsonl under `dir` (created if needed).
void save_dataset(const Dataset& dataset, const std::string& dir);
/// Missing split files are a ConfigError. class_counts are recomputed.
Dataset load_dataset(const std::string& dir, const TestCatalog& catalog);

/// 64-bit FNV-1a of the state's canonical text, as 16 hex digits.
std::string state_digest(const ObservedState& state);

struct EpisodeLogEntry {
  std::string episode;
  int step = 0;
  std::string state_digest;
  std::string hypothesis;
  int level = 0;
  EnvAction action;
  ObservationKind observation = ObservationKind::Final;
  std::string observation_text;
  double reward = 0.0;
  /// Set on the last entry of an episode.
  std::optional<OutcomeKind> outcome;

  friend bool operator==(const EpisodeLogEntry&, const EpisodeLogEntry&) = default;
};

std::vector<EpisodeLogEntry> log_entries(const EpisodeTrace& trace, const std::string& episode_id);
std::string log_entry_to_json(const EpisodeLogEntry& entry);
EpisodeLogEntry log_entry_from_json(const std::string& text);
std::vector<EpisodeLogEntry> read_log(std::istream& in);

/// Serializes appends from concurrent episodes.
class EpisodeLogWriter {
 public:
  explicit EpisodeLogWriter(std::ostream& out) : out_(&out) {}
  void write(const EpisodeTrace& trace, const std::string& episode_id);

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

/// Re-runs one episode's logged actions through `env` and returns the
/// observations it produces, for comparison against the log.
std::vector<Observation> replay(const Environment& env, const PatientRecord& record,
                                std::span<const EpisodeLogEntry> entries);

}  // namespace dxloop
