// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "dxloop/config.hpp"
#include "dxloop/errors.hpp"
#include "dxloop/evaluate.hpp"
#include "dxloop/io.hpp"
#include "dxloop/remote.hpp"
#include "dxloop/trainer.hpp"

namespace dxloop {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct BackendOptions {
  std::string backend = "parametric";
  std::string checkpoint = "best";
  std::optional<double> tau;
  std::string data;
  std::string split = "test";
  bool sample = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Config file (sectioned key = value)");
  cmd->add_option("--seed", c.seed, "Global seed; overrides [run] seed");
  cmd->add_option("--out", c.out, "Output directory");
}

void add_backend(CLI::App* cmd, BackendOptions& b) {
  cmd->add_option("--backend", b.backend, "parametric, oracle or remote")
      ->check(CLI::IsMember({"parametric", "oracle", "remote"}));
  cmd->add_option("--checkpoint", b.checkpoint,
                  "Checkpoint file, or 'best' / 'last' in the checkpoint directory");
  cmd->add_option("--tau", b.tau, "Oracle diagnosis threshold; overrides [oracle] threshold");
  cmd->add_option("--data", b.data, "Dataset directory; defaults to [paths] dataset");
  cmd->add_option("--split", b.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  cmd->add_flag("--sample", b.sample, "Sample actions instead of taking the argmax");
}

RunConfig resolve(const Common& c) {
  RunConfig config = c.config_path.empty() ? default_config() : load_config(c.config_path);
  if (c.seed) config.set_seed(*c.seed);
  apply_environment(config.remote);
  config.validate(TestCatalog::standard());
  return config;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void write_resolved(const fs::path& dir, const RunConfig& config) {
  write_file(dir / "config.ini", format_config(config));
}

std::string checkpoint_path(const BackendOptions& b, const RunConfig& config) {
  if (b.checkpoint == "best" || b.checkpoint == "last") {
    return (fs::path(config.paths.checkpoints) / (b.checkpoint + ".ckpt")).string();
  }
  return b.checkpoint;
}

/// Owns whatever the selected backend needs and exposes it as two agents.
struct Backend {
  TestCatalog catalog = TestCatalog::standard();
  std::optional<FeatureEncoder> encoder;
  std::optional<PolicyParams> params;
  std::unique_ptr<ChatClient> client;
  std::unique_ptr<Agent> agent;
};

Backend make_backend(const BackendOptions& b, const RunConfig& config) {
  Backend out;
  const GenerativeModel model = build_model(out.catalog, config.model);
  if (b.backend == "oracle") {
    out.agent = std::make_unique<OracleAgent>(out.catalog, model, b.tau.value_or(config.oracle_threshold));
  } else if (b.backend == "remote") {
    out.client = std::make_unique<ChatClient>(config.remote);
    out.agent = std::make_unique<RemoteAgent>(*out.client, out.catalog, config.remote.max_reprompts);
  } else {
    out.encoder.emplace(FeatureEncoder::for_model(out.catalog, model));
    const Checkpoint cp = load_checkpoint_file(checkpoint_path(b, config));
    const auto dim = static_cast<Eigen::Index>(out.encoder->dim());
    if (cp.params.class_head.cols() != dim ||
        cp.params.class_head.rows() != static_cast<Eigen::Index>(out.catalog.num_classes()) ||
        cp.params.decision_head.rows() != static_cast<Eigen::Index>(out.encoder->num_actions())) {
      throw ConfigError("checkpoint does not match the configured feature layout");
    }
    out.params = cp.params;
    const bool sample = b.sample || config.metrics.sample;
    out.agent = std::make_unique<ParametricAgent>(*out.params, *out.encoder,
                                                  sample ? ActMode::Sample : ActMode::Greedy);
  }
  return out;
}

std::vector<PatientRecord> load_split(const BackendOptions& b, const RunConfig& config,
                                      const TestCatalog& catalog) {
  const fs::path dir = b.data.empty() ? fs::path(config.paths.dataset) : fs::path(b.data);
  return load_records((dir / (b.split + ".jsonl")).string(), catalog);
}

int cmd_gen_data(const Common& c, std::ostream& out) {
  const RunConfig config = resolve(c);
  const TestCatalog catalog = TestCatalog::standard();
  const GenerativeModel model = build_model(catalog, config.model);
  const Dataset data = generate_dataset(config.synthetic, model, catalog);
  const fs::path dir = c.out.empty() ? fs::path(config.paths.dataset) : fs::path(c.out);
  save_dataset(data, dir.string());
  write_resolved(dir, config);
  out << "wrote " << data.train.size() << "/" << data.val.size() << "/" << data.test.size()
      << " records to " << dir.string() << "\n";
  for (std::size_t k = 0; k < catalog.num_classes(); ++k) {
    out << "  " << catalog.classes()[k] << ": " << data.class_counts[k] << "\n";
  }
  return 0;
}

int cmd_train(const Common& c, const std::string& data_dir, const std::string& resume, std::ostream& out) {
  const RunConfig config = resolve(c);
  const TestCatalog catalog = TestCatalog::standard();
  const GenerativeModel model = build_model(catalog, config.model);
  const FeatureEncoder encoder = FeatureEncoder::for_model(catalog, model);
  const Dataset data = load_dataset(data_dir.empty() ? config.paths.dataset : data_dir, catalog);
  const Environment env(catalog, config.env);

  std::optional<Checkpoint> start;
  if (!resume.empty()) start = load_checkpoint_file(resume);
  EvalOptions eval{config.metrics.n_bins, *config.seed, config.metrics.threads};
  TrainHooks hooks;
  hooks.on_eval = [&](const MetricRow& row) {
    char line[160];
    std::snprintf(line, sizeof line, "step %6llu  %-11s  loss %9.5f  acc %.4f  ece %.4f  tests %.3f\n",
                  static_cast<unsigned long long>(row.step), to_string(row.objective), row.loss,
                  row.mean_accuracy, row.ece, row.avg_tests);
    out << line << std::flush;
  };
  const TrainResult result =
      train(config.trainer, env, data, encoder, config.calibration, config.decision, eval, hooks, start);

  const fs::path dir = c.out.empty() ? fs::path(config.paths.checkpoints) : fs::path(c.out);
  fs::create_directories(dir);
  save_checkpoint_file(result.best, (dir / "best.ckpt").string());
  save_checkpoint_file(result.last, (dir / "last.ckpt").string());
  write_file(dir / "metrics.csv", metric_history_csv(result.history));
  write_resolved(dir, config);
  out << "best checkpoint at step " << result.best.step << "; wrote " << dir.string() << "\n";
  if (result.aborted_updates) out << result.aborted_updates << " updates skipped (non-finite loss)\n";
  return 0;
}

EvalResult run_eval(const Common& c, const BackendOptions& b, RunConfig& config) {
  config = resolve(c);
  const Backend backend = make_backend(b, config);
  const auto records = load_split(b, config, backend.catalog);
  const Environment env(backend.catalog, config.env);
  EvalOptions opts{config.metrics.n_bins, *config.seed, config.metrics.threads};
  if (b.backend == "remote") opts.threads = std::max(opts.threads, config.remote.max_in_flight);
  return evaluate(env, records, *backend.agent, *backend.agent, config.decision, opts);
}

int cmd_eval(const Common& c, const BackendOptions& b, std::ostream& out) {
  RunConfig config;
  const EvalResult result = run_eval(c, b, config);
  out << format_report(result.report);
  if (!c.out.empty()) {
    const fs::path dir(c.out);
    write_file(dir / "report.txt", format_report(result.report));
    write_file(dir / "report.csv", report_csv(result.report));
    write_file(dir / "calibration.csv", calibration_csv(result.report.calibration));
    std::ostringstream log;
    EpisodeLogWriter writer(log);
    for (const auto& t : result.traces) writer.write(t, t.record_id);
    write_file(dir / "episodes.jsonl", log.str());
    write_resolved(dir, config);
  }
  return 0;
}

int cmd_report_calibration(const Common& c, const BackendOptions& b, std::ostream& out) {
  RunConfig config;
  const EvalResult result = run_eval(c, b, config);
  const std::string csv = calibration_csv(result.report.calibration);
  if (c.out.empty()) {
    out << csv;
  } else {
    const fs::path dir(c.out);
    write_file(dir / "calibration.csv", csv);
    write_resolved(dir, config);
    out << "ECE " << result.report.calibration.ece << "; wrote " << (dir / "calibration.csv").string() << "\n";
  }
  return 0;
}

std::string format_trace(const EpisodeTrace& trace) {
  std::ostringstream s;
  s << "patient " << trace.record_id << " (truth: " << trace.truth << ")\n";
  for (const auto& step : trace.steps) {
    s << "step " << step.state.step << "\n";
    s << "  hypothesis   " << step.hypothesis.output.hypothesis << " (confidence "
      << step.hypothesis.output.level << "/10)\n";
    s << "  action       " << describe(step.decision.action) << "\n";
    s << "  observation  [" << to_string(step.observation.kind) << "]";
    if (!step.observation.text.empty()) s << " " << step.observation.text;
    s << "\n";
  }
  if (trace.failure) s << "failure: " << *trace.failure << "\n";
  s << "outcome: " << to_string(trace.outcome.kind);
  if (trace.outcome.predicted) s << ", predicted " << *trace.outcome.predicted;
  s << ", tests used " << trace.outcome.tests_used;
  if (!trace.steps.empty()) s << ", reward " << trace.steps.back().reward;
  s << "\n";
  return s.str();
}

int cmd_run_episode(const Common& c, const BackendOptions& b, std::size_t index, const std::string& id,
                    std::ostream& out) {
  const RunConfig config = resolve(c);
  const Backend backend = make_backend(b, config);
  const auto records = load_split(b, config, backend.catalog);
  std::size_t pick = index;
  if (!id.empty()) {
    const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.id == id; });
    if (it == records.end()) throw ConfigError("no record with id '" + id + "'");
    pick = static_cast<std::size_t>(it - records.begin());
  }
  if (pick >= records.size()) throw ConfigError("record index out of range");
  const Environment env(backend.catalog, config.env);
  Rng rng = Rng::derive(*config.seed, pick);
  const EpisodeTrace trace =
      run_episode(env, records[pick], *backend.agent, *backend.agent, config.decision, rng);
  out << format_trace(trace);
  if (!c.out.empty()) {
    const fs::path dir(c.out);
    std::ostringstream log;
    EpisodeLogWriter writer(log);
    writer.write(trace, trace.record_id);
    write_file(dir / "episode.jsonl", log.str());
    write_file(dir / "episode.txt", format_trace(trace));
    write_resolved(dir, config);
  }
  return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dxloop: sequential diagnosis agents, training and evaluation", "dxloop"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, cal_c, run_c;
  BackendOptions eval_b, cal_b, run_b;
  std::string train_data, train_resume, run_id;
  std::size_t run_index = 0;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as train/val/test JSONL");
  add_common(gen, gen_c);
  auto* tr = app.add_subcommand("train", "Run the training loop; writes checkpoints and metrics.csv");
  add_common(tr, train_c);
  tr->add_option("--data", train_data, "Dataset directory; defaults to [paths] dataset");
  tr->add_option("--resume", train_resume, "Checkpoint to continue from");
  auto* ev = app.add_subcommand("eval", "Evaluate a backend and print the metrics report");
  add_common(ev, eval_c);
  add_backend(ev, eval_b);
  auto* run = app.add_subcommand("run-episode", "Play one episode and print its trace");
  add_common(run, run_c);
  add_backend(run, run_b);
  run->add_option("--index", run_index, "Record index within the split");
  run->add_option("--id", run_id, "Record id; overrides --index");
  auto* cal = app.add_subcommand("report-calibration", "Write the calibration-curve CSV");
  add_common(cal, cal_c);
  add_backend(cal, cal_b);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*gen) return cmd_gen_data(gen_c, out);
    if (*tr) return cmd_train(train_c, train_data, train_resume, out);
    if (*ev) return cmd_eval(eval_c, eval_b, out);
    if (*run) return cmd_run_episode(run_c, run_b, run_index, run_id, out);
    if (*cal) return cmd_report_calibration(cal_c, cal_b, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace dxloop
