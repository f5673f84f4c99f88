// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dxloop/catalog.hpp"
#include "dxloop/environment.hpp"
#include "dxloop/errors.hpp"
#include "dxloop/protocol.hpp"
#include "dxloop/rng.hpp"

namespace dxloop {

struct GenerativeModel;

/// A result text could not be mapped onto the finding vocabulary.
class EncodingError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

using FeatureVector = Eigen::VectorXd;

/// Fixed-length encoding of an observed state. Layout:
///   [observed indicator per test | finding one-hot per test | hypothesis one-hot | confidence | bias]
/// The history is not encoded; parametric agents see revealed tests only.
class FeatureEncoder {
 public:
  FeatureEncoder(TestCatalog catalog, std::vector<std::size_t> findings_per_test);
  static FeatureEncoder for_model(const TestCatalog& catalog, const GenerativeModel& model);

  const TestCatalog& catalog() const { return catalog_; }
  const std::vector<std::size_t>& findings_per_test() const { return findings_; }

  std::size_t dim() const { return dim_; }
  std::size_t indicator_offset(std::size_t test) const { return test; }
  std::size_t finding_offset(std::size_t test) const { return finding_offsets_[test]; }
  std::size_t hypothesis_offset() const { return hypothesis_offset_; }
  std::size_t confidence_offset() const { return hypothesis_offset_ + catalog_.num_classes(); }
  std::size_t bias_offset() const { return dim_ - 1; }

  /// Throws EncodingError for results outside the vocabulary.
  FeatureVector encode(const ObservedState& state,
                       const std::optional<HypothesisOutput>& hypothesis = std::nullopt) const;

  /// Input of the confidence head: state features (no hypothesis fields)
  /// followed by a one-hot of the hypothesized class.
  FeatureVector confidence_input(const FeatureVector& state_features, std::size_t cls) const;
  std::size_t confidence_input_dim() const { return dim_ + catalog_.num_classes(); }

  /// Decision actions: tests, then diagnoses, then one reserved invalid action.
  std::size_t num_actions() const { return catalog_.num_tests() + catalog_.num_classes() + 1; }
  std::size_t invalid_action() const { return num_actions() - 1; }
  EnvAction action_for(std::size_t index) const;
  std::optional<std::size_t> index_of(const EnvAction& action) const;

  /// False for tests already requested in `state`.
  std::vector<bool> action_mask(const ObservedState& state) const;

 private:
  TestCatalog catalog_;
  std::vector<std::size_t> findings_;
  std::vector<std::size_t> finding_offsets_;
  std::size_t hypothesis_offset_ = 0;
  std::size_t dim_ = 0;
};

/// Trainable linear heads. Rows are output units, columns input features.
struct PolicyParams {
  Eigen::MatrixXd class_head;       // classes x dim
  Eigen::MatrixXd confidence_head;  // 11 x (dim + classes)
  Eigen::MatrixXd decision_head;    // actions x dim
  Eigen::VectorXd value_h;          // baseline over confidence-head inputs
  Eigen::VectorXd value_d;          // baseline over decision features

  bool all_finite() const;
  friend bool operator==(const PolicyParams& a, const PolicyParams& b);
};

struct InitOptions {
  /// Standard deviation of Gaussian weights; 0 gives all-zero heads.
  double scale = 0.01;
  /// If set, the confidence head's bias puts (nearly) all mass on this level.
  std::optional<int> confidence_level;
  double confidence_bias = 7.0;
};

PolicyParams init_params(const FeatureEncoder& encoder, Rng& rng, const InitOptions& options = {});

/// Class head whose logits are `sharpness` x (log prior + log-likelihoods of the
/// revealed findings). sharpness = 1 reproduces the posterior given revealed
/// tests (history excluded); large values approach the MAP class.
Eigen::MatrixXd naive_bayes_class_head(const FeatureEncoder& encoder, const GenerativeModel& model,
                                       double sharpness = 1.0);

/// log-softmax over allowed entries; disallowed entries get -infinity.
/// An empty mask allows everything.
Eigen::VectorXd masked_log_softmax(const Eigen::VectorXd& logits,
                                   const std::vector<bool>& mask = {});

/// First index of the maximum among allowed entries.
std::size_t argmax(const Eigen::VectorXd& values, const std::vector<bool>& mask = {});

/// Sampled index and its log-probability under masked softmax(logits).
struct Sampled {
  std::size_t index = 0;
  double log_prob = 0.0;
};
Sampled sample_softmax(const Eigen::VectorXd& logits, Rng& rng, const std::vector<bool>& mask = {});

}  // namespace dxloop
