// SPDX-License-Identifier: Apache-2.0
#include "dxloop/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "dxloop/runner.hpp"

namespace dxloop {

PredictionRecord to_prediction(const EpisodeTrace& trace) {
  PredictionRecord rec;
  rec.final_prediction = trace.outcome.predicted;
  rec.truth = trace.truth;
  if (const auto* hyp = trace.last_hypothesis()) {
    rec.last_hypothesis = hyp->hypothesis;
    rec.confidence = hyp->confidence;
  }
  return rec;
}

std::optional<std::size_t> effective_prediction(const PredictionRecord& record,
                                                 const TestCatalog& catalog) {
  if (record.final_prediction) {
    if (auto k = catalog.class_index(*record.final_prediction)) return k;
  }
  if (record.last_hypothesis) {
    if (auto k = catalog.class_index(*record.last_hypothesis)) return k;
  }
  return std::nullopt;
}

namespace {

std::size_t truth_index(const PredictionRecord& record, const TestCatalog& catalog) {
  const auto k = catalog.class_index(record.truth);
  if (!k) throw std::invalid_argument("unknown truth class '" + record.truth + "'");
  return *k;
}

}  // namespace

ClassAccuracy classwise_accuracy(std::span<const PredictionRecord> records, const TestCatalog& catalog) {
  if (records.empty()) throw std::invalid_argument("classwise_accuracy: no records");
  const std::size_t n = catalog.num_classes();
  std::vector<std::size_t> total(n, 0);
  std::vector<std::size_t> hits(n, 0);
  for (const auto& rec : records) {
    const std::size_t k = truth_index(rec, catalog);
    ++total[k];
    if (effective_prediction(rec, catalog) == k) ++hits[k];
  }
  ClassAccuracy out;
  out.per_class.assign(n, std::nullopt);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (total[k] == 0) continue;
    out.per_class[k] = static_cast<double>(hits[k]) / static_cast<double>(total[k]);
    sum += *out.per_class[k];
    ++defined;
  }
  out.mean = sum / static_cast<double>(defined);
  return out;
}

F1Scores micro_macro_f1(std::span<const PredictionRecord> records, const TestCatalog& catalog) {
  if (records.empty()) throw std::invalid_argument("micro_macro_f1: no records");
  const std::size_t n = catalog.num_classes();
  std::vector<std::size_t> tp(n, 0), fp(n, 0), fn(n, 0);
  std::size_t correct = 0;
  for (const auto& rec : records) {
    const std::size_t truth = truth_index(rec, catalog);
    const auto pred = effective_prediction(rec, catalog);
    if (pred == truth) {
      ++tp[truth];
      ++correct;
    } else {
      ++fn[truth];
      if (pred) ++fp[*pred];
    }
  }
  F1Scores out;
  // Every record contributes one prediction (possibly the extra class), so
  // summed false positives equal summed false negatives.
  out.micro = static_cast<double>(correct) / static_cast<double>(records.size());
  out.per_class.assign(n, std::nullopt);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t denom = 2 * tp[k] + fp[k] + fn[k];
    if (denom == 0) continue;
    out.per_class[k] = 2.0 * static_cast<double>(tp[k]) / static_cast<double>(denom);
    sum += *out.per_class[k];
    ++counted;
  }
  out.macro = counted ? sum / static_cast<double>(counted) : 0.0;
  return out;
}

double bin_edge(std::size_t i, std::size_t n_bins) {
  return static_cast<double>(i) / static_cast<double>(n_bins);
}

CalibrationReport expected_calibration_error(std::span<const PredictionRecord> records,
                                             std::size_t n_bins) {
  if (records.empty()) throw std::invalid_argument("ece: no records");
  if (n_bins == 0) throw std::invalid_argument("ece: n_bins must be >= 1");

  CalibrationReport report;
  report.bins.resize(n_bins);
  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<std::size_t> hits(n_bins, 0);
  for (std::size_t i = 0; i < n_bins; ++i) {
    report.bins[i].lower = bin_edge(i, n_bins);
    report.bins[i].upper = bin_edge(i + 1, n_bins);
  }
  for (const auto& rec : records) {
    const double c = rec.confidence;
    if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("ece: confidence outside [0, 1]");
    auto idx = static_cast<std::size_t>(std::floor(c * static_cast<double>(n_bins)));
    if (idx >= n_bins) idx = n_bins - 1;
    // Snap to the edge convention when c * n rounded across a boundary.
    while (idx > 0 && c < bin_edge(idx, n_bins)) --idx;
    while (idx + 1 < n_bins && c >= bin_edge(idx + 1, n_bins)) ++idx;
    ++report.bins[idx].count;
    conf_sum[idx] += c;
    if (rec.last_hypothesis && *rec.last_hypothesis == rec.truth) ++hits[idx];
  }
  const auto total = static_cast<double>(records.size());
  for (std::size_t i = 0; i < n_bins; ++i) {
    auto& bin = report.bins[i];
    if (bin.count == 0) continue;
    const auto count = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[i] / count;
    bin.accuracy = static_cast<double>(hits[i]) / count;
    report.ece += (count / total) * std::abs(bin.accuracy - bin.mean_confidence);
  }
  return report;
}

double avg_test_count(std::span<const EpisodeTrace> traces) {
  if (traces.empty()) throw std::invalid_argument("avg_test_count: no traces");
  double sum = 0.0;
  for (const auto& t : traces) sum += t.outcome.tests_used;
  return sum / static_cast<double>(traces.size());
}

}  // namespace dxloop
