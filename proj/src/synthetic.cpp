// SPDX-License-Identifier: Apache-2.0
#include "dxloop/synthetic.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "dxloop/errors.hpp"

namespace dxloop {

namespace {

constexpr double kSumTolerance = 1e-9;
constexpr std::string_view kFindingPrefix = "finding_";
constexpr std::string_view kHistoryLead =
    "Patient admitted to the emergency department with abdominal pain. Presentation: ";

void check_distribution(const std::vector<double>& p, const std::string& what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(what + " has an invalid entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) throw ConfigError(what + " does not sum to 1");
}

void check_test_model(const TestModel& t, std::size_t num_classes, const std::string& what) {
  if (t.outcome.size() != num_classes) throw ConfigError(what + ": one outcome row per class");
  if (t.num_findings() == 0) throw ConfigError(what + ": empty finding vocabulary");
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (t.outcome[k].size() != t.num_findings()) {
      throw ConfigError(what + ": ragged outcome rows");
    }
    check_distribution(t.outcome[k], what + " class " + std::to_string(k));
  }
  if (!(t.availability >= 0.0 && t.availability <= 1.0)) {
    throw ConfigError(what + ": availability outside [0, 1]");
  }
}

std::optional<std::size_t> parse_index(std::string_view s) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

}  // namespace

void GenerativeModel::validate(const TestCatalog& catalog) const {
  if (priors.size() != catalog.num_classes()) throw ConfigError("one prior per class required");
  check_distribution(priors, "class priors");
  if (tests.size() != catalog.num_tests()) throw ConfigError("one test model per catalog test");
  for (std::size_t t = 0; t < tests.size(); ++t) {
    check_test_model(tests[t], catalog.num_classes(), "test '" + catalog.tests()[t] + "'");
  }
  check_test_model(history, catalog.num_classes(), "history");
}

TestModel interpolated_test(std::size_t num_classes, std::size_t num_findings,
                            double informativeness, double availability) {
  if (num_findings == 0) throw ConfigError("finding vocabulary must be non-empty");
  if (!(informativeness >= 0.0 && informativeness <= 1.0)) {
    throw ConfigError("informativeness outside [0, 1]");
  }
  TestModel t;
  t.informativeness = informativeness;
  t.availability = availability;
  const double base = (1.0 - informativeness) / static_cast<double>(num_findings);
  t.outcome.assign(num_classes, std::vector<double>(num_findings, base));
  for (std::size_t k = 0; k < num_classes; ++k) t.outcome[k][k % num_findings] += informativeness;
  return t;
}

GenerativeModel build_model(const TestCatalog& catalog, const ModelSpec& spec) {
  const std::size_t n_tests = catalog.num_tests();
  const std::size_t n_classes = catalog.num_classes();
  const auto check_len = [&](std::size_t len, const char* what) {
    if (len != n_tests) {
      throw ConfigError(std::string(what) + ": expected " + std::to_string(n_tests) +
                        " values, got " + std::to_string(len));
    }
  };
  check_len(spec.informativeness.size(), "informativeness");
  check_len(spec.availability.size(), "availability");
  check_len(spec.findings_per_test.size(), "findings_per_test");

  GenerativeModel model;
  model.priors = spec.priors.empty()
                     ? std::vector<double>(n_classes, 1.0 / static_cast<double>(n_classes))
                     : spec.priors;
  for (std::size_t t = 0; t < n_tests; ++t) {
    model.tests.push_back(interpolated_test(n_classes, spec.findings_per_test[t],
                                            spec.informativeness[t], spec.availability[t]));
  }
  model.history =
      interpolated_test(n_classes, spec.history_findings, spec.history_informativeness, 1.0);
  model.validate(catalog);
  return model;
}

std::string render_finding(std::string_view test, std::size_t finding) {
  return std::string(test) + ": " + std::string(kFindingPrefix) + std::to_string(finding);
}

std::string render_history(std::size_t finding) {
  return std::string(kHistoryLead) + std::string(kFindingPrefix) + std::to_string(finding) + ".";
}

std::optional<std::size_t> decode_finding(std::string_view text, std::string_view test) {
  const std::string prefix = std::string(test) + ": " + std::string(kFindingPrefix);
  if (!text.starts_with(prefix)) return std::nullopt;
  return parse_index(text.substr(prefix.size()));
}

std::optional<std::size_t> decode_history(std::string_view text) {
  if (!text.starts_with(kHistoryLead)) return std::nullopt;
  text.remove_prefix(kHistoryLead.size());
  if (!text.starts_with(kFindingPrefix) || !text.ends_with('.')) return std::nullopt;
  text.remove_prefix(kFindingPrefix.size());
  text.remove_suffix(1);
  return parse_index(text);
}

ObservedFindings extract_findings(const ObservedState& state, const TestCatalog& catalog,
                                  const GenerativeModel& model) {
  ObservedFindings out;
  out.tests.assign(catalog.num_tests(), std::nullopt);
  if (auto h = decode_history(state.history)) {
    if (*h >= model.history.num_findings()) throw ConfigError("history finding outside vocabulary");
    out.history = *h;
  }
  for (const auto& [name, result] : state.revealed) {
    const auto t = catalog.test_index(name);
    if (!t) throw ConfigError("unknown test '" + name + "' in state");
    const auto f = decode_finding(result, name);
    if (!f || *f >= model.tests[*t].num_findings()) {
      throw ConfigError("result '" + result + "' is not a finding of '" + name + "'");
    }
    out.tests[*t] = *f;
  }
  return out;
}

std::vector<double> exact_posterior(const GenerativeModel& model, const ObservedFindings& findings) {
  std::vector<double> post = model.priors;
  for (std::size_t k = 0; k < post.size(); ++k) {
    if (findings.history) post[k] *= model.history.outcome[k][*findings.history];
    for (std::size_t t = 0; t < findings.tests.size(); ++t) {
      if (findings.tests[t]) post[k] *= model.tests[t].outcome[k][*findings.tests[t]];
    }
  }
  const double total = std::accumulate(post.begin(), post.end(), 0.0);
  if (!(total > 0.0)) throw std::domain_error("observed findings have zero probability");
  for (double& p : post) p /= total;
  return post;
}

PatientRecord sample_patient(const GenerativeModel& model, const TestCatalog& catalog, Rng& rng,
                             std::string id) {
  PatientRecord record;
  record.id = std::move(id);
  const std::size_t cls = rng.categorical(model.priors);
  record.diagnosis = catalog.classes()[cls];
  record.history = render_history(rng.categorical(model.history.outcome[cls]));
  for (std::size_t t = 0; t < model.tests.size(); ++t) {
    const TestModel& test = model.tests[t];
    const bool present = rng.bernoulli(test.availability);
    const std::size_t finding = rng.categorical(test.outcome[cls]);
    if (present) record.tests.emplace(catalog.tests()[t], render_finding(catalog.tests()[t], finding));
  }
  return record;
}

Dataset generate_dataset(const SyntheticConfig& config, const GenerativeModel& model,
                         const TestCatalog& catalog) {
  model.validate(catalog);
  const double fsum = config.train_fraction + config.val_fraction + config.test_fraction;
  if (config.train_fraction < 0 || config.val_fraction < 0 || config.test_fraction < 0 ||
      std::abs(fsum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = config.n_patients;
  const auto count = [n](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_val = count(config.val_fraction);
  const std::size_t n_test = count(config.test_fraction);
  if (n_val + n_test > n) throw ConfigError("split fractions exceed patient count");
  const std::size_t n_train = n - n_val - n_test;
  if ((config.train_fraction > 0 && n_train == 0) || (config.val_fraction > 0 && n_val == 0) ||
      (config.test_fraction > 0 && n_test == 0)) {
    throw ConfigError("n_patients = " + std::to_string(n) + " is too small for non-empty splits");
  }

  std::vector<PatientRecord> all;
  all.reserve(n);
  Dataset out;
  out.class_counts.assign(catalog.num_classes(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::derive(config.seed, i);
    char id[32];
    std::snprintf(id, sizeof id, "patient-%06zu", i);
    all.push_back(sample_patient(model, catalog, rng, id));
    ++out.class_counts[*catalog.class_index(all.back().diagnosis)];
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle = Rng::derive(config.seed ^ 0x5eedULL, n);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[shuffle.uniform_index(i)]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& dest = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dest.push_back(std::move(all[order[i]]));
  }
  return out;
}

}  // namespace dxloop
