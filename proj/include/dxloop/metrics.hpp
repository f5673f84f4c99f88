// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dxloop/catalog.hpp"

namespace dxloop {

struct EpisodeTrace;

/// Per-episode inputs for the evaluation metrics.
struct PredictionRecord {
  /// Final diagnosis; absent when the episode ended without a valid one.
  std::optional<std::string> final_prediction;
  std::optional<std::string> last_hypothesis;
  std::string truth;
  /// Confidence attached to the last hypothesis.
  double confidence = 0.0;
};

PredictionRecord to_prediction(const EpisodeTrace& trace);

/// Class index of the prediction that counts: the final diagnosis if it is a
/// catalog class, else the last hypothesis if it is, else nullopt (the extra
/// always-wrong class).
std::optional<std::size_t> effective_prediction(const PredictionRecord& record,
                                                 const TestCatalog& catalog);

struct ClassAccuracy {
  /// Accuracy per truth class; nullopt for classes with no records.
  std::vector<std::optional<double>> per_class;
  /// Unweighted mean over classes that have records.
  double mean = 0.0;
};

/// Throws std::invalid_argument on empty input.
ClassAccuracy classwise_accuracy(std::span<const PredictionRecord> records, const TestCatalog& catalog);

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
  /// F1 per catalog class; nullopt for classes that occur neither as truth
  /// nor as prediction (left out of the macro mean).
  std::vector<std::optional<double>> per_class;
};

/// Micro F1 treats the extra class as a label that is never correct, so it
/// equals accuracy. Macro F1 averages real classes only; extra-class records
/// still count as misses for their truth class.
F1Scores micro_macro_f1(std::span<const PredictionRecord> records, const TestCatalog& catalog);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
};

/// Lower edge of bin i out of n. Shared by the binning and its consumers so
/// every caller agrees on boundary values.
double bin_edge(std::size_t i, std::size_t n_bins);

/// Equal-width bins over [0, 1]; bin i holds edge(i) <= c < edge(i + 1), the
/// last bin also holds c = 1. Correct means last hypothesis == truth.
/// Throws std::invalid_argument for empty input, n_bins == 0 or confidences
/// outside [0, 1].
CalibrationReport expected_calibration_error(std::span<const PredictionRecord> records,
                                             std::size_t n_bins = 10);

/// Mean revealed-test count. Throws std::invalid_argument on empty input.
double avg_test_count(std::span<const EpisodeTrace> traces);

}  // namespace dxloop
