// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dxloop/config.hpp"
#include "dxloop/errors.hpp"
#include "dxloop/evaluate.hpp"
#include "dxloop/io.hpp"
#include "dxloop/metrics.hpp"
#include "dxloop/protocol.hpp"
#include "dxloop/rewards.hpp"
#include "dxloop/trainer.hpp"

namespace py = pybind11;
using namespace dxloop;

namespace {

const TestCatalog& catalog() {
  static const TestCatalog c = TestCatalog::standard();
  return c;
}

RunConfig resolve(const std::string& path, std::optional<std::uint64_t> seed) {
  RunConfig config = load_config(path);
  if (seed) config.set_seed(*seed);
  config.validate(catalog());
  return config;
}

[[noreturn]] void raise_parse_error(const ParseError& e) {
  throw py::value_error(std::string(to_string(e.reason)) + ": " + e.span);
}

py::dict hypothesis_dict(const HypothesisOutput& h) {
  py::dict d;
  d["hypothesis"] = h.hypothesis;
  d["level"] = h.level;
  d["confidence"] = h.confidence;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["episodes"] = r.episodes;
  d["mean_accuracy"] = r.accuracy.mean;
  d["per_class_accuracy"] = r.accuracy.per_class;
  d["micro_f1"] = r.f1.micro;
  d["macro_f1"] = r.f1.macro;
  d["ece"] = r.calibration.ece;
  d["avg_tests"] = r.avg_tests;
  d["hypothesis_accuracy"] = r.hypothesis_accuracy;
  return d;
}

py::list bins_list(const CalibrationReport& report) {
  py::list out;
  for (const auto& b : report.bins) {
    py::dict d;
    d["lower"] = b.lower;
    d["upper"] = b.upper;
    d["count"] = b.count;
    d["mean_confidence"] = b.mean_confidence;
    d["accuracy"] = b.accuracy;
    out.append(d);
  }
  return out;
}

std::vector<PredictionRecord> to_records(const std::vector<std::optional<std::string>>& predictions,
                                         const std::vector<std::string>& truths) {
  if (predictions.size() != truths.size()) throw py::value_error("predictions and truths differ in length");
  std::vector<PredictionRecord> records(truths.size());
  for (std::size_t i = 0; i < truths.size(); ++i) {
    records[i].final_prediction = predictions[i];
    records[i].truth = truths[i];
  }
  return records;
}

}  // namespace

PYBIND11_MODULE(_dxloop, m) {
  m.doc() = "Synthetic clinical decision loop: environment, agents, training and metrics.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("tests", [] { return catalog().tests(); }, "Test names in catalog order.");
  m.def("classes", [] { return catalog().classes(); }, "Diagnosis classes in catalog order.");

  m.def("level_to_confidence", &level_to_confidence, py::arg("level"), py::arg("eps") = kDefaultConfidenceClip,
        "Confidence in (0, 1) for a 0-10 level, clipped to [eps, 1 - eps].");
  m.def(
      "calibration_reward",
      [](bool correct, double confidence, double eps) {
        CalibrationRewardConfig config;
        config.eps = eps;
        config.validate();
        return calibration_reward(correct, confidence, config);
      },
      py::arg("correct"), py::arg("confidence"), py::arg("eps") = 0.05,
      "Log-score betting reward scaled to [-1, 1].");

  m.def(
      "parse_hypothesis",
      [](const std::string& text) {
        const auto parsed = parse_hypothesis(text, catalog());
        if (!parsed) raise_parse_error(parsed.error());
        return hypothesis_dict(parsed.value());
      },
      py::arg("text"), "Parse a hypothesis generation; raises ValueError when out of format.");
  m.def(
      "parse_decision",
      [](const std::string& text) {
        const auto parsed = parse_decision(text, catalog());
        if (!parsed) raise_parse_error(parsed.error());
        const DecisionOutput& d = parsed.value();
        py::dict out;
        out["thought"] = d.thought;
        out["kind"] = d.kind == DecisionKind::Test ? "test" : "diagnosis";
        out["input"] = d.input;
        return out;
      },
      py::arg("text"), "Parse a decision generation; raises ValueError when out of format.");

  m.def(
      "expected_calibration_error",
      [](const std::vector<double>& confidences, const std::vector<bool>& correct, std::size_t n_bins) {
        if (confidences.size() != correct.size()) throw py::value_error("confidences and correct differ in length");
        const auto& classes = catalog().classes();
        std::vector<PredictionRecord> records(confidences.size());
        for (std::size_t i = 0; i < records.size(); ++i) {
          records[i].truth = classes[0];
          records[i].last_hypothesis = correct[i] ? classes[0] : classes[1];
          records[i].confidence = confidences[i];
        }
        const CalibrationReport report = expected_calibration_error(records, n_bins);
        return py::make_tuple(report.ece, bins_list(report));
      },
      py::arg("confidences"), py::arg("correct"), py::arg("n_bins") = 10,
      "ECE over equal-width bins; returns (ece, bins).");
  m.def(
      "f1_scores",
      [](const std::vector<std::optional<std::string>>& predictions, const std::vector<std::string>& truths) {
        const auto records = to_records(predictions, truths);
        const F1Scores f1 = micro_macro_f1(records, catalog());
        py::dict d;
        d["micro"] = f1.micro;
        d["macro"] = f1.macro;
        d["per_class"] = f1.per_class;
        return d;
      },
      py::arg("predictions"), py::arg("truths"),
      "Micro and macro F1; None or unknown labels count as an always-wrong extra class.");

  m.def(
      "generate_dataset",
      [](const std::string& config_path, std::optional<std::uint64_t> seed) {
        const RunConfig config = resolve(config_path, seed);
        const Dataset data = generate_dataset(config.synthetic, build_model(catalog(), config.model), catalog());
        py::dict out;
        for (const auto& [name, split] : {std::pair{"train", &data.train}, {"val", &data.val}, {"test", &data.test}}) {
          std::vector<std::string> lines;
          lines.reserve(split->size());
          for (const auto& r : *split) lines.push_back(record_to_json(r));
          out[name] = lines;
        }
        out["class_counts"] = data.class_counts;
        return out;
      },
      py::arg("config_path"), py::arg("seed") = py::none(),
      "Draw the synthetic dataset of a config; records come back as JSON strings.");

  m.def(
      "evaluate_oracle",
      [](const std::string& config_path, const std::string& split, std::optional<double> threshold,
         std::optional<std::uint64_t> seed) {
        const RunConfig config = resolve(config_path, seed);
        const GenerativeModel model = build_model(catalog(), config.model);
        const Dataset data = generate_dataset(config.synthetic, model, catalog());
        const std::vector<PatientRecord>* records = split == "train" ? &data.train
                                                    : split == "val" ? &data.val
                                                    : split == "test" ? &data.test
                                                                      : nullptr;
        if (!records) throw py::value_error("split must be train, val or test");
        const OracleAgent oracle(catalog(), model, threshold.value_or(config.oracle_threshold));
        const Environment env(catalog(), config.env);
        EvalReport report;
        {
          py::gil_scoped_release release;
          report = evaluate(env, *records, oracle, oracle, config.decision,
                            {config.metrics.n_bins, *config.seed, config.metrics.threads})
                       .report;
        }
        return report_dict(report);
      },
      py::arg("config_path"), py::arg("split") = "test", py::arg("threshold") = py::none(),
      py::arg("seed") = py::none(), "Run the exact-posterior agent on a split of the config's dataset.");

  m.def(
      "train",
      [](const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::uint64_t> max_steps) {
        RunConfig config = resolve(config_path, seed);
        if (max_steps) config.trainer.max_steps = *max_steps;
        const GenerativeModel model = build_model(catalog(), config.model);
        const Dataset data = generate_dataset(config.synthetic, model, catalog());
        const FeatureEncoder encoder = FeatureEncoder::for_model(catalog(), model);
        const Environment env(catalog(), config.env);
        const EvalOptions eval{config.metrics.n_bins, *config.seed, config.metrics.threads};
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train(config.trainer, env, data, encoder, config.calibration, config.decision, eval);
        }
        py::list history;
        for (const auto& row : result.history) {
          py::dict d;
          d["step"] = row.step;
          d["objective"] = to_string(row.objective);
          d["loss"] = row.loss;
          d["mean_accuracy"] = row.mean_accuracy;
          d["ece"] = row.ece;
          d["avg_tests"] = row.avg_tests;
          history.append(d);
        }
        py::dict out;
        out["best_step"] = result.best.step;
        out["last_step"] = result.last.step;
        out["history"] = history;
        std::ostringstream checkpoint;
        save_checkpoint(result.best, checkpoint);
        out["best_checkpoint"] = py::bytes(checkpoint.str());
        return out;
      },
      py::arg("config_path"), py::arg("seed") = py::none(), py::arg("max_steps") = py::none(),
      "Run the scheduled training loop on the config's synthetic dataset.");
}
