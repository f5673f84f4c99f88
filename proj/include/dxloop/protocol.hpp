// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "dxloop/catalog.hpp"
#include "dxloop/environment.hpp"

namespace dxloop {

inline constexpr int kMaxConfidenceLevel = 10;
inline constexpr int kNumConfidenceLevels = kMaxConfidenceLevel + 1;
inline constexpr double kDefaultConfidenceClip = 0.05;

/// Maps a verbalized level 0..10 onto a probability: clamp(level / 10, eps, 1 - eps).
/// Throws UsageError for levels outside 0..10.
double level_to_confidence(int level, double eps = kDefaultConfidenceClip);

struct HypothesisOutput {
  std::string hypothesis;
  int level = 0;
  double confidence = 0.5;

  friend bool operator==(const HypothesisOutput&, const HypothesisOutput&) = default;
};

HypothesisOutput make_hypothesis(std::string label, int level);

enum class DecisionKind { Test, Diagnosis };

struct DecisionOutput {
  std::optional<std::string> thought;
  DecisionKind kind = DecisionKind::Test;
  /// Canonical catalog name of the requested test or diagnosed class.
  std::string input;

  friend bool operator==(const DecisionOutput&, const DecisionOutput&) = default;
};

EnvAction to_action(const DecisionOutput& decision);

enum class ParseErrorReason { MissingField, UnknownClass, UnknownTest, BadConfidence, NoSentinel };

const char* to_string(ParseErrorReason reason);

struct ParseError {
  ParseErrorReason reason = ParseErrorReason::MissingField;
  /// The text that could not be used (a field value, or the whole input).
  std::string span;

  friend bool operator==(const ParseError&, const ParseError&) = default;
};

/// Either a parsed value or the reason the generation was rejected.
template <typename T>
class Parsed {
 public:
  Parsed(T value) : v_(std::move(value)) {}           // NOLINT(google-explicit-constructor)
  Parsed(ParseError error) : v_(std::move(error)) {}  // NOLINT(google-explicit-constructor)

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }
  const T& value() const { return std::get<T>(v_); }
  const ParseError& error() const { return std::get<ParseError>(v_); }

 private:
  std::variant<T, ParseError> v_;
};

/// Reads the first `Hypothesis:` and first `Confidence:` fields. Both may sit
/// on one line ("Hypothesis: x, Confidence: 7") or on separate lines.
/// Keys and class labels match case-insensitively.
Parsed<HypothesisOutput> parse_hypothesis(std::string_view text, const TestCatalog& catalog);

/// Reads Thought / Action / Action Input preceding the first `<submit>`.
/// Without a sentinel, nothing but blank lines may follow the Action Input.
Parsed<DecisionOutput> parse_decision(std::string_view text, const TestCatalog& catalog);

/// Canonical answer texts; parse_* of these round-trips.
std::string format_hypothesis(const HypothesisOutput& hypothesis);
std::string format_decision(const DecisionOutput& decision);

/// History, then each revealed result on its own line in reveal order.
std::string serialize_state(const ObservedState& state);

std::string render_hypothesis_prompt(const ObservedState& state, const TestCatalog& catalog);
std::string render_decision_prompt(const ObservedState& state, const HypothesisOutput& hypothesis,
                                   const TestCatalog& catalog);

/// User turn sent to a conversational decision agent after an environment
/// reply: the reply, then "The current hypothesis is <h> with confidence <level>."
std::string render_followup(std::string_view reply, const HypothesisOutput& hypothesis);

/// Raw template text with slots unfilled.
std::string_view hypothesis_template();
std::string_view decision_template();

}  // namespace dxloop
