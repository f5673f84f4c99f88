// SPDX-License-Identifier: Apache-2.0
#include "dxloop/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dxloop/errors.hpp"

namespace dxloop {

namespace {

namespace pt = boost::property_tree;

std::string prefix(const std::string& key) { return key.empty() ? std::string() : key + ": "; }

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string s(trim(text));
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError(prefix(key) + "not a number: '" + text + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  const std::string s(trim(text));
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw ConfigError(prefix(key) + "not an integer: '" + text + "'");
  return v;
}

std::uint64_t parse_count(const std::string& key, const std::string& text) {
  const long long v = parse_int(key, text);
  if (v < 0) throw ConfigError(prefix(key) + "must be >= 0");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = to_lower(trim(text));
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(prefix(key) + "not a boolean: '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_double(key, item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + f(values[i]);
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  return join<double>(v, [](const double& x) { return g17(x); });
}

/// A value given once is repeated for every test.
template <typename T>
std::vector<T> broadcast(const std::string& key, std::vector<T> values, std::size_t n) {
  if (values.size() == 1 && n > 1) values.assign(n, values.front());
  if (values.size() != n) {
    throw ConfigError(key + ": expected 1 or " + std::to_string(n) + " values, got " +
                      std::to_string(values.size()));
  }
  return values;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Section = std::vector<std::pair<std::string, Field>>;

std::vector<std::pair<std::string, Section>> schema() {
  const std::size_t n_tests = TestCatalog::standard().num_tests();
  std::vector<std::pair<std::string, Section>> s;

  const auto d = [](std::function<double&(RunConfig&)> ref) -> Field {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = parse_double("", v); },
            [ref](const RunConfig& c) { return g17(ref(const_cast<RunConfig&>(c))); }};
  };
  const auto i = [](std::function<int&(RunConfig&)> ref) -> Field {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = static_cast<int>(parse_int("", v)); },
            [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
  };
  const auto u = [](std::function<std::uint64_t&(RunConfig&)> ref) -> Field {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = parse_count("", v); },
            [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
  };
  const auto z = [](std::function<std::size_t&(RunConfig&)> ref) -> Field {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = parse_count("", v); },
            [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
  };
  const auto str = [](std::function<std::string&(RunConfig&)> ref) -> Field {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = std::string(trim(v)); },
            [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); }};
  };

  s.push_back({"env",
               {{"step_budget", i([](RunConfig& c) -> int& { return c.env.step_budget; })},
                {"retry_budget", i([](RunConfig& c) -> int& { return c.env.retry_budget; })},
                {"unavailable_text", str([](RunConfig& c) -> std::string& { return c.env.unavailable_text; })},
                {"duplicate_text", str([](RunConfig& c) -> std::string& { return c.env.duplicate_text; })},
                {"invalid_text", str([](RunConfig& c) -> std::string& { return c.env.invalid_text; })}}});

  s.push_back({"rewards",
               {{"eps", d([](RunConfig& c) -> double& { return c.calibration.eps; })},
                {"r_pos", d([](RunConfig& c) -> double& { return c.decision.r_pos; })},
                {"r_neg", d([](RunConfig& c) -> double& { return c.decision.r_neg; })},
                {"r_invalid", d([](RunConfig& c) -> double& { return c.decision.r_invalid; })},
                {"explore_p0", d([](RunConfig& c) -> double& { return c.trainer.exploration.p0; })},
                {"explore_decay", d([](RunConfig& c) -> double& { return c.trainer.exploration.decay; })}}});

  Field order{[](RunConfig& c, const std::string& v) {
                c.trainer.order.clear();
                for (const auto& name : split_list(v)) c.trainer.order.push_back(objective_from_string(name));
              },
              [](const RunConfig& c) {
                return join<Objective>(c.trainer.order, [](const Objective& o) { return std::string(to_string(o)); });
              }};
  Field init_level{[](RunConfig& c, const std::string& v) {
                     const long long level = parse_int("trainer.init_confidence_level", v);
                     c.trainer.init.confidence_level =
                         level < 0 ? std::nullopt : std::optional<int>(static_cast<int>(level));
                   },
                   [](const RunConfig& c) {
                     return std::to_string(c.trainer.init.confidence_level.value_or(-1));
                   }};
  s.push_back({"trainer",
               {{"lr", d([](RunConfig& c) -> double& { return c.trainer.lr; })},
                {"supervised_lr", d([](RunConfig& c) -> double& { return c.trainer.supervised_lr; })},
                {"value_lr", d([](RunConfig& c) -> double& { return c.trainer.value_lr; })},
                {"value_steps", i([](RunConfig& c) -> int& { return c.trainer.value_steps; })},
                {"batch_episodes", z([](RunConfig& c) -> std::size_t& { return c.trainer.batch_episodes; })},
                {"clip", d([](RunConfig& c) -> double& { return c.trainer.clip; })},
                {"gamma", d([](RunConfig& c) -> double& { return c.trainer.gamma; })},
                {"ppo_epochs", i([](RunConfig& c) -> int& { return c.trainer.ppo_epochs; })},
                {"warmup_steps", u([](RunConfig& c) -> std::uint64_t& { return c.trainer.warmup_steps; })},
                {"rotation_steps", u([](RunConfig& c) -> std::uint64_t& { return c.trainer.rotation_steps; })},
                {"order", order},
                {"max_steps", u([](RunConfig& c) -> std::uint64_t& { return c.trainer.max_steps; })},
                {"eval_every", u([](RunConfig& c) -> std::uint64_t& { return c.trainer.eval_every; })},
                {"patience", u([](RunConfig& c) -> std::uint64_t& { return c.trainer.patience; })},
                {"init_scale", d([](RunConfig& c) -> double& { return c.trainer.init.scale; })},
                {"init_confidence_level", init_level},
                {"init_confidence_bias", d([](RunConfig& c) -> double& { return c.trainer.init.confidence_bias; })}}});

  Field sample{[](RunConfig& c, const std::string& v) { c.metrics.sample = parse_bool("metrics.sample", v); },
               [](const RunConfig& c) { return std::string(c.metrics.sample ? "true" : "false"); }};
  s.push_back({"metrics",
               {{"n_bins", z([](RunConfig& c) -> std::size_t& { return c.metrics.n_bins; })},
                {"sample", sample},
                {"threads", z([](RunConfig& c) -> std::size_t& { return c.metrics.threads; })}}});

  const auto per_test = [n_tests](std::function<std::vector<double>&(RunConfig&)> ref,
                                  const std::string& key) -> Field {
    return {[ref, key, n_tests](RunConfig& c, const std::string& v) {
              ref(c) = broadcast(key, parse_doubles(key, v), n_tests);
            },
            [ref](const RunConfig& c) { return join_doubles(ref(const_cast<RunConfig&>(c))); }};
  };
  Field priors{[](RunConfig& c, const std::string& v) { c.model.priors = parse_doubles("synthetic.priors", v); },
               [](const RunConfig& c) { return join_doubles(c.model.priors); }};
  Field findings{[n_tests](RunConfig& c, const std::string& v) {
                   std::vector<std::size_t> sizes;
                   for (const auto& item : split_list(v)) sizes.push_back(parse_count("synthetic.findings", item));
                   c.model.findings_per_test = broadcast("synthetic.findings", sizes, n_tests);
                 },
                 [](const RunConfig& c) {
                   return join<std::size_t>(c.model.findings_per_test,
                                            [](const std::size_t& x) { return std::to_string(x); });
                 }};
  s.push_back(
      {"synthetic",
       {{"n_patients", z([](RunConfig& c) -> std::size_t& { return c.synthetic.n_patients; })},
        {"train_fraction", d([](RunConfig& c) -> double& { return c.synthetic.train_fraction; })},
        {"val_fraction", d([](RunConfig& c) -> double& { return c.synthetic.val_fraction; })},
        {"test_fraction", d([](RunConfig& c) -> double& { return c.synthetic.test_fraction; })},
        {"priors", priors},
        {"informativeness",
         per_test([](RunConfig& c) -> std::vector<double>& { return c.model.informativeness; },
                  "synthetic.informativeness")},
        {"availability",
         per_test([](RunConfig& c) -> std::vector<double>& { return c.model.availability; },
                  "synthetic.availability")},
        {"findings", findings},
        {"history_informativeness", d([](RunConfig& c) -> double& { return c.model.history_informativeness; })},
        {"history_findings", z([](RunConfig& c) -> std::size_t& { return c.model.history_findings; })}}});

  s.push_back({"remote",
               {{"base_url", str([](RunConfig& c) -> std::string& { return c.remote.base_url; })},
                {"model", str([](RunConfig& c) -> std::string& { return c.remote.model; })},
                {"temperature", d([](RunConfig& c) -> double& { return c.remote.temperature; })},
                {"timeout_s", d([](RunConfig& c) -> double& { return c.remote.timeout_s; })},
                {"max_in_flight", z([](RunConfig& c) -> std::size_t& { return c.remote.max_in_flight; })},
                {"max_reprompts", i([](RunConfig& c) -> int& { return c.remote.max_reprompts; })},
                {"transport_retries", i([](RunConfig& c) -> int& { return c.remote.transport_retries; })}}});

  s.push_back({"oracle", {{"threshold", d([](RunConfig& c) -> double& { return c.oracle_threshold; })}}});

  Field seed{[](RunConfig& c, const std::string& v) { c.set_seed(parse_count("run.seed", v)); },
             [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }};
  s.push_back({"run", {{"seed", seed}}});

  s.push_back({"paths",
               {{"dataset", str([](RunConfig& c) -> std::string& { return c.paths.dataset; })},
                {"checkpoints", str([](RunConfig& c) -> std::string& { return c.paths.checkpoints; })},
                {"logs", str([](RunConfig& c) -> std::string& { return c.paths.logs; })}}});
  return s;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  synthetic.seed = value;
  trainer.seed = value;
}

void RunConfig::validate(const TestCatalog& catalog) const {
  if (!seed) throw ConfigError("run.seed is required");
  if (env.step_budget < 0 || env.retry_budget < 0) throw ConfigError("env budgets must be >= 0");
  calibration.validate();
  decision.validate();
  trainer.validate();
  if (metrics.n_bins == 0) throw ConfigError("metrics.n_bins must be >= 1");
  const double fractions = synthetic.train_fraction + synthetic.val_fraction + synthetic.test_fraction;
  if (std::abs(fractions - 1.0) > 1e-9) throw ConfigError("synthetic split fractions must sum to 1");
  build_model(catalog, model).validate(catalog);
  if (!(oracle_threshold >= 0.0 && oracle_threshold <= 1.0)) throw ConfigError("oracle.threshold outside [0, 1]");
  if (remote.max_in_flight == 0) throw ConfigError("remote.max_in_flight must be >= 1");
  if (!(remote.timeout_s > 0.0)) throw ConfigError("remote.timeout_s must be > 0");
  if (remote.max_reprompts < 0) throw ConfigError("remote.max_reprompts must be >= 0");
  if (remote.transport_retries < 0) throw ConfigError("remote.transport_retries must be >= 0");
}

RunConfig default_config() {
  RunConfig c;
  const std::size_t n = TestCatalog::standard().num_tests();
  c.model.informativeness.assign(n, 0.5);
  c.model.availability.assign(n, 0.8);
  c.model.findings_per_test.assign(n, 3);
  c.model.history_informativeness = 0.2;
  c.model.history_findings = 3;
  return c;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config = default_config();
  const auto sections = schema();
  for (const auto& [section_name, section] : tree) {
    if (!section.data().empty()) {
      throw ConfigError(origin + ": key '" + section_name + "' outside a section");
    }
    const auto s = std::find_if(sections.begin(), sections.end(),
                                [&](const auto& p) { return p.first == section_name; });
    if (s == sections.end()) throw ConfigError(origin + ": unknown section [" + section_name + "]");
    for (const auto& [key, node] : section) {
      const auto f = std::find_if(s->second.begin(), s->second.end(),
                                  [&](const auto& p) { return p.first == key; });
      if (f == s->second.end()) {
        throw ConfigError(origin + ": unknown key '" + key + "' in [" + section_name + "]");
      }
      try {
        f->second.set(config, node.data());
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + section_name + "." + key + ": " + e.what());
      }
    }
  }
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path);
}

std::string format_config(const RunConfig& config) {
  std::string out;
  bool first = true;
  for (const auto& [section_name, section] : schema()) {
    out += (first ? "" : "\n") + std::string("[") + section_name + "]\n";
    first = false;
    for (const auto& [key, field] : section) {
      const std::string value = field.get(config);
      if (value.empty()) continue;
      out += key + " = " + value + "\n";
    }
  }
  return out;
}

void apply_environment(RemoteConfig& remote) {
  const auto get = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = get("DXLOOP_REMOTE_BASE_URL")) remote.base_url = *v;
  if (auto v = get("DXLOOP_REMOTE_MODEL")) remote.model = *v;
  if (auto v = get("DXLOOP_REMOTE_TEMPERATURE")) remote.temperature = parse_double("DXLOOP_REMOTE_TEMPERATURE", *v);
  if (auto v = get("DXLOOP_REMOTE_TIMEOUT")) remote.timeout_s = parse_double("DXLOOP_REMOTE_TIMEOUT", *v);
  if (auto v = get("DXLOOP_REMOTE_MAX_IN_FLIGHT")) {
    remote.max_in_flight = parse_count("DXLOOP_REMOTE_MAX_IN_FLIGHT", *v);
  }
  if (auto v = get("DXLOOP_REMOTE_API_KEY")) remote.api_key = *v;
}

}  // namespace dxloop
