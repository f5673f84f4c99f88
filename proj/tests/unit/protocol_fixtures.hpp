// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dxloop/environment.hpp"
#include "dxloop/protocol.hpp"

namespace dxloop::testing {

struct HypothesisFixture {
  std::string name;
  std::string text;
  std::optional<HypothesisOutput> expected;
  std::optional<ParseErrorReason> error;
};

struct DecisionFixture {
  std::string name;
  std::string text;
  std::optional<DecisionOutput> expected;
  std::optional<ParseErrorReason> error;
  /// Observation when the parsed action is stepped on fixture_record().
  std::optional<ObservationKind> observation;
};

/// Has CT, Ultrasound and Physical Examination; no MRI.
inline PatientRecord fixture_record() {
  return {"fixture",
          "appendicitis",
          "Patient with abdominal pain.",
          {{"CT", "CT: inflamed appendix"},
           {"Ultrasound", "Ultrasound: non-compressible appendix"},
           {"Physical Examination", "PE: rebound tenderness"}}};
}

inline std::vector<HypothesisFixture> hypothesis_fixtures() {
  const auto ok = [](std::string label, int level) { return make_hypothesis(std::move(label), level); };
  using R = ParseErrorReason;
  return {
      {"two_lines", "Hypothesis: appendicitis\nConfidence: 7", ok("appendicitis", 7), {}},
      {"one_line", "Hypothesis: cholecystitis, Confidence: 4", ok("cholecystitis", 4), {}},
      {"lower_keys_space_colon", "hypothesis : Diverticulitis\nconfidence:10",
       ok("diverticulitis", 10), {}},
      {"markdown_and_period", "Hypothesis: **pancreatitis**\nConfidence: 3.", ok("pancreatitis", 3), {}},
      {"preamble", "Sure, my hypothesis follows.\nHypothesis: diverticulitis\nConfidence: 0",
       ok("diverticulitis", 0), {}},
      {"first_occurrence_wins",
       "Hypothesis: appendicitis\nConfidence: 7\nHypothesis: pancreatitis\nConfidence: 2",
       ok("appendicitis", 7), {}},
      {"quoted_class", "Hypothesis: \"appendicitis\"\nConfidence: 9", ok("appendicitis", 9), {}},
      {"unknown_class", "Hypothesis: influenza\nConfidence: 7", {}, R::UnknownClass},
      {"two_classes", "Hypothesis: appendicitis or cholecystitis\nConfidence: 5", {}, R::UnknownClass},
      {"missing_hypothesis", "Confidence: 7", {}, R::MissingField},
      {"missing_confidence", "Hypothesis: appendicitis", {}, R::MissingField},
      {"level_too_high", "Hypothesis: appendicitis\nConfidence: 11", {}, R::BadConfidence},
      {"negative_level", "Hypothesis: appendicitis\nConfidence: -1", {}, R::BadConfidence},
      {"fractional_level", "Hypothesis: appendicitis\nConfidence: 7.5", {}, R::BadConfidence},
      {"word_level", "Hypothesis: appendicitis\nConfidence: seven", {}, R::BadConfidence},
      {"empty", "", {}, R::MissingField},
  };
}

inline std::vector<DecisionFixture> decision_fixtures() {
  const auto test = [](std::string name, std::optional<std::string> thought = std::nullopt) {
    return DecisionOutput{std::move(thought), DecisionKind::Test, std::move(name)};
  };
  const auto diag = [](std::string label, std::optional<std::string> thought = std::nullopt) {
    return DecisionOutput{std::move(thought), DecisionKind::Diagnosis, std::move(label)};
  };
  using R = ParseErrorReason;
  using O = ObservationKind;
  return {
      {"template_example_test",
       "Thought: Given the symptoms, I should order a Physical Examination first.\n"
       "Action: Test\nAction Input: Physical Examination\n<submit>",
       test("Physical Examination", "Given the symptoms, I should order a Physical Examination first."),
       {}, O::TestResult},
      {"template_example_diagnosis",
       "Thought: The CT shows clear inflammation of the appendix.\n"
       "Action: Diagnosis\nAction Input: appendicitis\n<submit>",
       diag("appendicitis", "The CT shows clear inflammation of the appendix."), {}, O::Final},
      {"no_thought", "Action: Test\nAction Input: CT\n<submit>", test("CT"), {}, O::TestResult},
      {"sentinel_same_line", "Action: Test\nAction Input: Ultrasound<submit>", test("Ultrasound"), {},
       O::TestResult},
      {"no_sentinel_at_end", "Action: Diagnosis\nAction Input: cholecystitis\n\n", diag("cholecystitis"),
       {}, O::Final},
      {"hallucinated_result_after_sentinel",
       "Action: Test\nAction Input: CT\n<submit>\nCT: normal appendix", test("CT"), {}, O::TestResult},
      {"uppercase_everything", "ACTION: DIAGNOSIS\nACTION INPUT: PANCREATITIS\n<SUBMIT>",
       diag("pancreatitis"), {}, O::Final},
      {"space_before_colon", "Action : Test\nAction Input : Radiograph\n<submit>", test("Radiograph"), {},
       O::Unavailable},
      {"indented", "  Thought: check labs\n  Action: Test\n  Action Input: Complete Blood Count\n<submit>",
       test("Complete Blood Count", "check labs"), {}, O::Unavailable},
      {"quoted_input", "Action: Test\nAction Input: \"Ultrasound\"\n<submit>", test("Ultrasound"), {},
       O::TestResult},
      {"lowercase_test_name", "Action: Test\nAction Input: ultrasound\n<submit>", test("Ultrasound"), {},
       O::TestResult},
      {"unavailable_test", "Thought: imaging\nAction: Test\nAction Input: MRI\n<submit>",
       test("MRI", "imaging"), {}, O::Unavailable},
      {"first_action_wins",
       "Action: Test\nAction Input: CT\nAction: Diagnosis\nAction Input: appendicitis\n<submit>",
       test("CT"), {}, O::TestResult},
      {"wrong_diagnosis_is_final", "Action: Diagnosis\nAction Input: diverticulitis\n<submit>",
       diag("diverticulitis"), {}, O::Final},
      {"embellished_test_name", "Action: Test\nAction Input: CT scan of abdomen\n<submit>", {},
       R::UnknownTest, {}},
      {"two_tests", "Action: Test\nAction Input: Ultrasound, CT\n<submit>", {}, R::UnknownTest, {}},
      {"unknown_class", "Action: Diagnosis\nAction Input: influenza\n<submit>", {}, R::UnknownClass, {}},
      {"unknown_action_kind", "Action: Treat\nAction Input: CT\n<submit>", {}, R::MissingField, {}},
      {"missing_input", "Thought: hmm\nAction: Test\n<submit>", {}, R::MissingField, {}},
      {"missing_action", "Action Input: CT\n<submit>", {}, R::MissingField, {}},
      {"empty_input", "Action: Test\nAction Input:\n<submit>", {}, R::MissingField, {}},
      {"input_after_sentinel", "Action: Test\n<submit>\nAction Input: CT", {}, R::MissingField, {}},
      {"markdown_keys", "**Action:** Test\n**Action Input:** CT\n<submit>", {}, R::MissingField, {}},
      {"trailing_text_without_sentinel",
       "Action: Test\nAction Input: CT\nThe CT shows an inflamed appendix.", {}, R::NoSentinel, {}},
      {"free_text_only", "I think this is appendicitis.", {}, R::MissingField, {}},
      {"empty", "", {}, R::MissingField, {}},
  };
}

}  // namespace dxloop::testing
