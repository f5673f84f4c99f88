// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dxloop/catalog.hpp"
#include "dxloop/environment.hpp"
#include "dxloop/rng.hpp"

namespace dxloop {

/// Class-conditional outcome model for one test (or for the history).
struct TestModel {
  double informativeness = 0.0;  // lambda: 0 = uniform noise, 1 = class peak only
  double availability = 1.0;     // probability the result exists for a patient
  /// outcome[class][finding], each row sums to 1.
  std::vector<std::vector<double>> outcome;

  std::size_t num_findings() const { return outcome.empty() ? 0 : outcome.front().size(); }
};

/// Synthetic patient distribution. Tests are in catalog order; the history is
/// an always-observed pseudo-test rendered as prose.
struct GenerativeModel {
  std::vector<double> priors;
  std::vector<TestModel> tests;
  TestModel history;

  /// Throws ConfigError on shape mismatches or non-normalized distributions.
  void validate(const TestCatalog& catalog) const;
};

/// Outcome rows mix uniform noise with a one-hot peak:
/// (1 - lambda) / F + lambda * [finding == peak(class)], peak(class) = class mod F.
TestModel interpolated_test(std::size_t num_classes, std::size_t num_findings,
                            double informativeness, double availability);

struct ModelSpec {
  std::vector<double> priors;                 // empty = uniform
  std::vector<double> informativeness;        // one per test
  std::vector<double> availability;           // one per test
  std::vector<std::size_t> findings_per_test; // one per test
  double history_informativeness = 0.0;
  std::size_t history_findings = 3;
};

GenerativeModel build_model(const TestCatalog& catalog, const ModelSpec& spec);

/// Finding indices decoded from a state; nullopt where nothing was observed.
struct ObservedFindings {
  std::optional<std::size_t> history;
  std::vector<std::optional<std::size_t>> tests;
};

/// Result text for a test finding: "<test>: finding_<k>".
std::string render_finding(std::string_view test, std::size_t finding);
std::string render_history(std::size_t finding);
std::optional<std::size_t> decode_finding(std::string_view text, std::string_view test);
std::optional<std::size_t> decode_history(std::string_view text);

/// Decodes every revealed result and the history. Throws ConfigError when a
/// text is not a finding of the model's vocabulary. A history that carries no
/// finding is treated as unobserved.
ObservedFindings extract_findings(const ObservedState& state, const TestCatalog& catalog,
                                  const GenerativeModel& model);

/// prior x product of observed likelihoods, normalized. Availability does not
/// enter. Throws std::domain_error when the total mass is zero.
std::vector<double> exact_posterior(const GenerativeModel& model, const ObservedFindings& findings);

PatientRecord sample_patient(const GenerativeModel& model, const TestCatalog& catalog, Rng& rng,
                             std::string id);

struct SyntheticConfig {
  std::size_t n_patients = 2400;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
};

struct Dataset {
  std::vector<PatientRecord> train;
  std::vector<PatientRecord> val;
  std::vector<PatientRecord> test;
  /// Patients per class over the whole draw, catalog order.
  std::vector<std::size_t> class_counts;
};

/// Patient i is drawn from stream (seed, i); the split uses a seed-derived
/// permutation. Throws ConfigError when a split with positive fraction would
/// be empty.
Dataset generate_dataset(const SyntheticConfig& config, const GenerativeModel& model,
                         const TestCatalog& catalog);

}  // namespace dxloop
