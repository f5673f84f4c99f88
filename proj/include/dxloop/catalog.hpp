// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dxloop {

/// Ordered test names and diagnosis labels. Order matters: it fixes feature
/// layout, action indices, and every argmax tie-break.
class TestCatalog {
 public:
  TestCatalog(std::vector<std::string> tests, std::vector<std::string> classes);

  /// The twelve emergency-department tests and four abdominal conditions.
  static TestCatalog standard();

  const std::vector<std::string>& tests() const { return tests_; }
  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t num_tests() const { return tests_.size(); }
  std::size_t num_classes() const { return classes_.size(); }

  std::optional<std::size_t> test_index(std::string_view name) const;
  std::optional<std::size_t> class_index(std::string_view label) const;

  /// Case-insensitive lookups after trimming surrounding whitespace.
  std::optional<std::size_t> find_test_loose(std::string_view name) const;
  std::optional<std::size_t> find_class_loose(std::string_view label) const;

  friend bool operator==(const TestCatalog&, const TestCatalog&) = default;

 private:
  std::vector<std::string> tests_;
  std::vector<std::string> classes_;
};

struct PatientRecord {
  std::string id;
  std::string diagnosis;
  std::string history;
  /// Test name -> result text. A missing key means the test was never done.
  std::map<std::string, std::string> tests;

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

/// Throws ConfigError when the record names unknown tests or classes or has
/// an empty history.
void validate_record(const PatientRecord& record, const TestCatalog& catalog);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

}  // namespace dxloop
