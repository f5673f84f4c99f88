// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dxloop/catalog.hpp"
#include "dxloop/metrics.hpp"
#include "dxloop/rng.hpp"

namespace dxloop::testing {

/// Direct binning: every bin scans every record. No index arithmetic.
inline double brute_force_ece(const std::vector<PredictionRecord>& records, std::size_t n_bins) {
  double ece = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(n_bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    const bool last = b + 1 == n_bins;
    double conf = 0.0;
    double count = 0.0;
    double hits = 0.0;
    for (const auto& r : records) {
      const double c = r.confidence;
      if (c >= lo && (c < hi || (last && c <= 1.0))) {
        count += 1.0;
        conf += c;
        if (r.last_hypothesis && *r.last_hypothesis == r.truth) hits += 1.0;
      }
    }
    if (count > 0.0) {
      ece += (count / static_cast<double>(records.size())) * std::abs(hits / count - conf / count);
    }
  }
  return ece;
}

/// Random prediction set; a third of the confidences sit exactly on bin edges
/// or on the verbalized levels.
inline std::vector<PredictionRecord> random_predictions(Rng& rng, const TestCatalog& catalog) {
  const auto& classes = catalog.classes();
  std::vector<PredictionRecord> out(1 + rng.uniform_index(200));
  for (auto& r : out) {
    r.truth = classes[rng.uniform_index(classes.size())];
    if (rng.bernoulli(0.9)) r.last_hypothesis = classes[rng.uniform_index(classes.size())];
    if (rng.bernoulli(0.7)) r.final_prediction = classes[rng.uniform_index(classes.size())];
    switch (rng.uniform_index(3)) {
      case 0: r.confidence = static_cast<double>(rng.uniform_index(11)) / 10.0; break;
      case 1: r.confidence = std::clamp(static_cast<double>(rng.uniform_index(11)) / 10.0, 0.05, 0.95); break;
      default: r.confidence = rng.uniform(); break;
    }
  }
  return out;
}

}  // namespace dxloop::testing
