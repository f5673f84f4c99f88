// SPDX-License-Identifier: Apache-2.0
#include "dxloop/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include "json.hpp"

#include "dxloop/errors.hpp"

namespace dxloop {

namespace {

using nlohmann::json;

std::string where(std::size_t line) {
  return line ? "line " + std::to_string(line) + ": " : std::string();
}

const json& require_string(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(where(line) + "missing key '" + key + "'");
  if (!it->is_string()) throw ConfigError(where(line) + "'" + key + "' must be a string");
  return *it;
}

const char* action_kind(const EnvAction& a) {
  if (std::holds_alternative<RequestTest>(a)) return "test";
  if (std::holds_alternative<Diagnose>(a)) return "diagnosis";
  return "malformed";
}

std::string action_value(const EnvAction& a) {
  if (const auto* r = std::get_if<RequestTest>(&a)) return r->name;
  if (const auto* d = std::get_if<Diagnose>(&a)) return d->label;
  return std::get<Malformed>(a).reason;
}

ObservationKind observation_from_string(const std::string& s) {
  for (auto k : {ObservationKind::TestResult, ObservationKind::Unavailable, ObservationKind::Duplicate,
                 ObservationKind::Invalid, ObservationKind::Final}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown observation kind '" + s + "'");
}

OutcomeKind outcome_from_string(const std::string& s) {
  for (auto k : {OutcomeKind::CorrectDiagnosis, OutcomeKind::WrongDiagnosis,
                 OutcomeKind::InvalidTermination, OutcomeKind::BudgetExhausted}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown outcome kind '" + s + "'");
}

}  // namespace

std::string record_to_json(const PatientRecord& record) {
  json tests = json::object();
  for (const auto& [name, result] : record.tests) tests[name] = result;
  const json obj = {{"id", record.id}, {"diagnosis", record.diagnosis}, {"history", record.history},
                    {"tests", tests}};
  return obj.dump();
}

PatientRecord record_from_json(const std::string& text, const TestCatalog& catalog, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(where(line) + "malformed JSON: " + e.what());
  }
  if (!obj.is_object()) throw ConfigError(where(line) + "expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (key != "id" && key != "diagnosis" && key != "history" && key != "tests") {
      throw ConfigError(where(line) + "unknown key '" + key + "'");
    }
  }
  PatientRecord r;
  r.id = require_string(obj, "id", line).get<std::string>();
  r.diagnosis = require_string(obj, "diagnosis", line).get<std::string>();
  r.history = require_string(obj, "history", line).get<std::string>();
  const auto tests = obj.find("tests");
  if (tests == obj.end()) throw ConfigError(where(line) + "missing key 'tests'");
  if (!tests->is_object()) throw ConfigError(where(line) + "'tests' must be an object");
  for (const auto& [name, result] : tests->items()) {
    if (!result.is_string()) throw ConfigError(where(line) + "result of '" + name + "' must be a string");
    r.tests.emplace(name, result.get<std::string>());
  }
  try {
    validate_record(r, catalog);
  } catch (const ConfigError& e) {
    throw ConfigError(where(line) + e.what());
  }
  return r;
}

std::vector<PatientRecord> read_records(std::istream& in, const TestCatalog& catalog,
                                        const std::string& origin) {
  std::vector<PatientRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    try {
      out.push_back(record_from_json(text, catalog, line));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ": " + e.what());
    }
  }
  return out;
}

std::vector<PatientRecord> load_records(const std::string& path, const TestCatalog& catalog) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read records '" + path + "'");
  return read_records(in, catalog, path);
}

void write_records(std::span<const PatientRecord> records, std::ostream& out) {
  for (const auto& r : records) out << record_to_json(r) << '\n';
}

void save_records(std::span<const PatientRecord> records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_records(records, out);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_records(dataset.train, (base / "train.jsonl").string());
  save_records(dataset.val, (base / "val.jsonl").string());
  save_records(dataset.test, (base / "test.jsonl").string());
}

Dataset load_dataset(const std::string& dir, const TestCatalog& catalog) {
  const std::filesystem::path base(dir);
  Dataset d;
  d.train = load_records((base / "train.jsonl").string(), catalog);
  d.val = load_records((base / "val.jsonl").string(), catalog);
  d.test = load_records((base / "test.jsonl").string(), catalog);
  d.class_counts.assign(catalog.num_classes(), 0);
  for (const auto* split : {&d.train, &d.val, &d.test}) {
    for (const auto& r : *split) ++d.class_counts[*catalog.class_index(r.diagnosis)];
  }
  return d;
}

std::string state_digest(const ObservedState& state) {
  json obj = {{"history", state.history}, {"step", state.step}, {"retries", state.retries_used}};
  json revealed = json::array();
  for (const auto& [name, result] : state.revealed) revealed.push_back({name, result});
  obj["revealed"] = revealed;
  obj["requested"] = state.requested;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : obj.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<EpisodeLogEntry> log_entries(const EpisodeTrace& trace, const std::string& episode_id) {
  std::vector<EpisodeLogEntry> out;
  for (const auto& s : trace.steps) {
    EpisodeLogEntry e;
    e.episode = episode_id;
    e.step = s.state.step;
    e.state_digest = state_digest(s.state);
    e.hypothesis = s.hypothesis.output.hypothesis;
    e.level = s.hypothesis.output.level;
    e.action = s.decision.action;
    e.observation = s.observation.kind;
    e.observation_text = s.observation.text;
    e.reward = s.reward;
    out.push_back(std::move(e));
  }
  if (!out.empty()) out.back().outcome = trace.outcome.kind;
  return out;
}

std::string log_entry_to_json(const EpisodeLogEntry& e) {
  json obj = {{"episode", e.episode},
              {"step", e.step},
              {"state_digest", e.state_digest},
              {"hypothesis", {{"class", e.hypothesis}, {"level", e.level}}},
              {"action", {{"kind", action_kind(e.action)}, {"value", action_value(e.action)}}},
              {"observation", {{"kind", to_string(e.observation)}, {"text", e.observation_text}}},
              {"reward", e.reward}};
  if (e.outcome) obj["outcome"] = to_string(*e.outcome);
  return obj.dump();
}

EpisodeLogEntry log_entry_from_json(const std::string& text) {
  try {
    const json obj = json::parse(text);
    EpisodeLogEntry e;
    e.episode = obj.at("episode").get<std::string>();
    e.step = obj.at("step").get<int>();
    e.state_digest = obj.at("state_digest").get<std::string>();
    e.hypothesis = obj.at("hypothesis").at("class").get<std::string>();
    e.level = obj.at("hypothesis").at("level").get<int>();
    const std::string kind = obj.at("action").at("kind").get<std::string>();
    const std::string value = obj.at("action").at("value").get<std::string>();
    if (kind == "test") {
      e.action = RequestTest{value};
    } else if (kind == "diagnosis") {
      e.action = Diagnose{value};
    } else if (kind == "malformed") {
      e.action = Malformed{value};
    } else {
      throw ConfigError("unknown action kind '" + kind + "'");
    }
    e.observation = observation_from_string(obj.at("observation").at("kind").get<std::string>());
    e.observation_text = obj.at("observation").at("text").get<std::string>();
    e.reward = obj.at("reward").get<double>();
    if (obj.contains("outcome")) e.outcome = outcome_from_string(obj.at("outcome").get<std::string>());
    return e;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed log entry: ") + ex.what());
  }
}

std::vector<EpisodeLogEntry> read_log(std::istream& in) {
  std::vector<EpisodeLogEntry> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(log_entry_from_json(line));
    } catch (const ConfigError& e) {
      throw ConfigError(where(n) + e.what());
    }
  }
  return out;
}

void EpisodeLogWriter::write(const EpisodeTrace& trace, const std::string& episode_id) {
  std::string block;
  for (const auto& e : log_entries(trace, episode_id)) block += log_entry_to_json(e) + "\n";
  std::lock_guard lock(mutex_);
  *out_ << block;
  out_->flush();
}

std::vector<Observation> replay(const Environment& env, const PatientRecord& record,
                                std::span<const EpisodeLogEntry> entries) {
  std::vector<Observation> out;
  ObservedState state = env.reset(record);
  for (const auto& e : entries) {
    if (state.terminal) break;
    StepResult r = env.step(record, state, e.action);
    out.push_back(r.observation);
    state = std::move(r.state);
  }
  return out;
}

}  // namespace dxloop
