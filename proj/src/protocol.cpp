// SPDX-License-Identifier: Apache-2.0
#include "dxloop/protocol.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <vector>

#include "dxloop/errors.hpp"

namespace dxloop {

namespace detail {
extern const std::string_view kHypothesisTemplate;
extern const std::string_view kDecisionTemplate;
}  // namespace detail

double level_to_confidence(int level, double eps) {
  if (level < 0 || level > kMaxConfidenceLevel) {
    throw UsageError("confidence level " + std::to_string(level) + " outside 0..10");
  }
  return std::clamp(static_cast<double>(level) / kMaxConfidenceLevel, eps, 1.0 - eps);
}

HypothesisOutput make_hypothesis(std::string label, int level) {
  return HypothesisOutput{std::move(label), level, level_to_confidence(level)};
}

EnvAction to_action(const DecisionOutput& decision) {
  if (decision.kind == DecisionKind::Test) return RequestTest{decision.input};
  return Diagnose{decision.input};
}

const char* to_string(ParseErrorReason reason) {
  switch (reason) {
    case ParseErrorReason::MissingField: return "missing_field";
    case ParseErrorReason::UnknownClass: return "unknown_class";
    case ParseErrorReason::UnknownTest: return "unknown_test";
    case ParseErrorReason::BadConfidence: return "bad_confidence";
    case ParseErrorReason::NoSentinel: return "no_sentinel";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kSentinel = "<submit>";

/// Position just past "<key>\s*:" for the first occurrence of key, searching
/// a lower-cased copy of the text.
std::optional<std::size_t> find_field(std::string_view lowered, std::string_view key,
                                      std::size_t from = 0) {
  std::size_t pos = lowered.find(key, from);
  while (pos != std::string_view::npos) {
    std::size_t p = pos + key.size();
    while (p < lowered.size() && (lowered[p] == ' ' || lowered[p] == '\t')) ++p;
    if (p < lowered.size() && lowered[p] == ':') return p + 1;
    pos = lowered.find(key, pos + 1);
  }
  return std::nullopt;
}

std::string_view rest_of_line(std::string_view text, std::size_t pos) {
  const auto end = text.find('\n', pos);
  return text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
}

/// Drops decoration LLMs like to add around values: quotes, markdown
/// emphasis, trailing punctuation.
std::string_view strip_decoration(std::string_view s) {
  constexpr std::string_view kWrap = "\"'*`";
  constexpr std::string_view kTrailing = ".,;";
  s = trim(s);
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    if (kWrap.find(s.front()) != std::string_view::npos) {
      s.remove_prefix(1);
      changed = true;
    }
    if (!s.empty() && (kWrap.find(s.back()) != std::string_view::npos ||
                       kTrailing.find(s.back()) != std::string_view::npos)) {
      s.remove_suffix(1);
      changed = true;
    }
    s = trim(s);
  }
  return s;
}

std::optional<int> parse_level(std::string_view s) {
  if (s.empty() || s.size() > 2) return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  if (value < 0 || value > kMaxConfidenceLevel) return std::nullopt;
  return value;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

/// If `line` is "<key>\s*:value" (key case-insensitive), returns value.
std::optional<std::string_view> keyed_value(std::string_view line, std::string_view key) {
  const auto lowered = to_lower(line);
  if (!std::string_view(lowered).starts_with(key)) return std::nullopt;
  std::size_t p = key.size();
  while (p < line.size() && (line[p] == ' ' || line[p] == '\t')) ++p;
  if (p >= line.size() || line[p] != ':') return std::nullopt;
  return line.substr(p + 1);
}

std::string number_word(std::size_t n) {
  static constexpr std::array<const char*, 13> kWords = {
      "zero", "one", "two", "three", "four", "five", "six",
      "seven", "eight", "nine", "ten", "eleven", "twelve"};
  return n < kWords.size() ? kWords[n] : std::to_string(n);
}

std::string join_lines(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += '\n';
    out += items[i];
  }
  return out;
}

void replace_all(std::string& text, std::string_view slot, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
}

}  // namespace

Parsed<HypothesisOutput> parse_hypothesis(std::string_view text, const TestCatalog& catalog) {
  const std::string lowered = to_lower(text);
  const auto hyp_pos = find_field(lowered, "hypothesis");
  const auto conf_pos = find_field(lowered, "confidence");
  if (!hyp_pos) return ParseError{ParseErrorReason::MissingField, std::string(text)};
  if (!conf_pos) return ParseError{ParseErrorReason::MissingField, std::string(text)};

  std::string_view hyp_value = rest_of_line(text, *hyp_pos);
  // Single-line form: "Hypothesis: x, Confidence: 7".
  {
    const auto lowered_value = to_lower(hyp_value);
    if (const auto after = find_field(lowered_value, "confidence")) {
      hyp_value = hyp_value.substr(0, lowered_value.rfind("confidence", *after));
    }
  }
  const auto label = strip_decoration(hyp_value);
  const auto cls = catalog.find_class_loose(label);
  if (!cls) return ParseError{ParseErrorReason::UnknownClass, std::string(label)};

  const auto conf_value = strip_decoration(rest_of_line(text, *conf_pos));
  const auto level = parse_level(conf_value);
  if (!level) return ParseError{ParseErrorReason::BadConfidence, std::string(conf_value)};

  return make_hypothesis(catalog.classes()[*cls], *level);
}

Parsed<DecisionOutput> parse_decision(std::string_view text, const TestCatalog& catalog) {
  const std::string lowered = to_lower(text);
  const auto sentinel = lowered.find(kSentinel);
  const std::string_view body =
      sentinel == std::string::npos ? text : text.substr(0, sentinel);

  std::optional<std::string_view> thought;
  std::optional<std::string_view> action;
  std::optional<std::string_view> input;
  std::size_t input_line = 0;

  const auto lines = split_lines(body);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (auto v = keyed_value(line, "action input")) {
      if (!input) {
        input = *v;
        input_line = i;
      }
    } else if (auto v = keyed_value(line, "action")) {
      if (!action) action = *v;
    } else if (auto v = keyed_value(line, "thought")) {
      if (!thought) thought = *v;
    }
  }

  if (!action || !input) return ParseError{ParseErrorReason::MissingField, std::string(text)};

  const auto kind_text = strip_decoration(*action);
  DecisionKind kind;
  if (iequals(kind_text, "test")) {
    kind = DecisionKind::Test;
  } else if (iequals(kind_text, "diagnosis")) {
    kind = DecisionKind::Diagnosis;
  } else {
    return ParseError{ParseErrorReason::MissingField, std::string(kind_text)};
  }

  const auto value = strip_decoration(*input);
  if (value.empty()) return ParseError{ParseErrorReason::MissingField, std::string(*input)};

  if (sentinel == std::string::npos) {
    for (std::size_t i = input_line + 1; i < lines.size(); ++i) {
      if (!trim(lines[i]).empty()) {
        return ParseError{ParseErrorReason::NoSentinel, std::string(trim(lines[i]))};
      }
    }
  }

  DecisionOutput out;
  if (thought) out.thought = std::string(trim(*thought));
  out.kind = kind;
  if (kind == DecisionKind::Test) {
    const auto idx = catalog.find_test_loose(value);
    if (!idx) return ParseError{ParseErrorReason::UnknownTest, std::string(value)};
    out.input = catalog.tests()[*idx];
  } else {
    const auto idx = catalog.find_class_loose(value);
    if (!idx) return ParseError{ParseErrorReason::UnknownClass, std::string(value)};
    out.input = catalog.classes()[*idx];
  }
  return out;
}

std::string format_hypothesis(const HypothesisOutput& hypothesis) {
  return "Hypothesis: " + hypothesis.hypothesis +
         "\nConfidence: " + std::to_string(hypothesis.level);
}

std::string format_decision(const DecisionOutput& decision) {
  std::string out;
  if (decision.thought) out += "Thought: " + *decision.thought + "\n";
  out += decision.kind == DecisionKind::Test ? "Action: Test\n" : "Action: Diagnosis\n";
  out += "Action Input: " + decision.input + "\n" + std::string(kSentinel);
  return out;
}

std::string serialize_state(const ObservedState& state) {
  std::string out = state.history;
  for (const auto& [name, result] : state.revealed) {
    out += '\n';
    out += result;
  }
  return out;
}

std::string render_hypothesis_prompt(const ObservedState& state, const TestCatalog& catalog) {
  std::string text(detail::kHypothesisTemplate);
  replace_all(text, "{class_count}", number_word(catalog.num_classes()));
  replace_all(text, "{class_list}", join_lines(catalog.classes()));
  replace_all(text, "{observed_patient_state}", serialize_state(state));
  return text;
}

std::string render_decision_prompt(const ObservedState& state, const HypothesisOutput& hypothesis,
                                   const TestCatalog& catalog) {
  std::string text(detail::kDecisionTemplate);
  replace_all(text, "{class_count}", number_word(catalog.num_classes()));
  replace_all(text, "{class_list}", join_lines(catalog.classes()));
  replace_all(text, "{test_list}", join_lines(catalog.tests()));
  replace_all(text, "{hypothesis_confidence}", std::to_string(hypothesis.level));
  replace_all(text, "{hypothesis}", hypothesis.hypothesis);
  // Filled last so patient text containing slot-like braces is left alone.
  replace_all(text, "{observed_patient_state}", serialize_state(state));
  return text;
}

std::string render_followup(std::string_view reply, const HypothesisOutput& hypothesis) {
  return std::string(reply) + "\nThe current hypothesis is " + hypothesis.hypothesis +
         " with confidence " + std::to_string(hypothesis.level) + ".";
}

std::string_view hypothesis_template() { return detail::kHypothesisTemplate; }
std::string_view decision_template() { return detail::kDecisionTemplate; }

}  // namespace dxloop
