// SPDX-License-Identifier: Apache-2.0
#include "dxloop/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "dxloop/errors.hpp"

namespace dxloop {

namespace {

void require_unique_non_empty(const std::vector<std::string>& items, const char* what) {
  if (items.empty()) throw ConfigError(std::string("catalog has no ") + what);
  std::set<std::string> seen;
  for (const auto& item : items) {
    if (item.empty()) throw ConfigError(std::string("empty name in catalog ") + what);
    if (!seen.insert(item).second) {
      throw ConfigError(std::string("duplicate catalog ") + what + " '" + item + "'");
    }
  }
}

std::optional<std::size_t> find_exact(const std::vector<std::string>& items, std::string_view s) {
  auto it = std::find(items.begin(), items.end(), s);
  if (it == items.end()) return std::nullopt;
  return static_cast<std::size_t>(it - items.begin());
}

std::optional<std::size_t> find_loose(const std::vector<std::string>& items, std::string_view s) {
  const auto needle = trim(s);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (iequals(items[i], needle)) return i;
  }
  return std::nullopt;
}

}  // namespace

TestCatalog::TestCatalog(std::vector<std::string> tests, std::vector<std::string> classes)
    : tests_(std::move(tests)), classes_(std::move(classes)) {
  require_unique_non_empty(tests_, "tests");
  require_unique_non_empty(classes_, "classes");
}

TestCatalog TestCatalog::standard() {
  return TestCatalog(
      {"Physical Examination", "CT", "MRI", "Radiograph", "Ultrasound", "Complete Blood Count",
       "Basic Metabolic Panel", "Comprehensive Metabolic Panel", "Renal Function Panel",
       "Liver Function Panel", "Urinalysis", "Electrolyte Panel"},
      {"appendicitis", "cholecystitis", "diverticulitis", "pancreatitis"});
}

std::optional<std::size_t> TestCatalog::test_index(std::string_view name) const {
  return find_exact(tests_, name);
}

std::optional<std::size_t> TestCatalog::class_index(std::string_view label) const {
  return find_exact(classes_, label);
}

std::optional<std::size_t> TestCatalog::find_test_loose(std::string_view name) const {
  return find_loose(tests_, name);
}

std::optional<std::size_t> TestCatalog::find_class_loose(std::string_view label) const {
  return find_loose(classes_, label);
}

void validate_record(const PatientRecord& record, const TestCatalog& catalog) {
  if (!catalog.class_index(record.diagnosis)) {
    throw ConfigError("record '" + record.id + "': unknown diagnosis '" + record.diagnosis + "'");
  }
  if (trim(record.history).empty()) {
    throw ConfigError("record '" + record.id + "': empty history");
  }
  for (const auto& [name, result] : record.tests) {
    if (!catalog.test_index(name)) {
      throw ConfigError("record '" + record.id + "': unknown test '" + name + "'");
    }
  }
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && to_lower(a) == to_lower(b);
}

}  // namespace dxloop
