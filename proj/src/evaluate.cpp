// SPDX-License-Identifier: Apache-2.0
#include "dxloop/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace dxloop {

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string num(double v) { return fmt("%.10g", v); }

}  // namespace

EvalResult evaluate(const Environment& env, std::span<const PatientRecord> records,
                    const Agent& hypothesis_agent, const Agent& decision_agent,
                    const DecisionRewardConfig& rewards, const EvalOptions& options) {
  if (records.empty()) throw std::invalid_argument("evaluate: no records");
  EvalResult result;
  result.traces.resize(records.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        Rng rng = Rng::derive(options.seed, i);
        result.traces[i] = run_episode(env, records[i], hypothesis_agent, decision_agent, rewards, rng);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = records.size();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.threads, records.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  result.report = summarize(result.traces, env.catalog(), options.n_bins);
  return result;
}

EvalReport summarize(std::span<const EpisodeTrace> traces, const TestCatalog& catalog,
                     std::size_t n_bins) {
  EvalReport report;
  report.classes = catalog.classes();
  report.episodes = traces.size();
  std::vector<PredictionRecord> preds;
  preds.reserve(traces.size());
  std::size_t hyp_hits = 0;
  for (const auto& t : traces) {
    preds.push_back(to_prediction(t));
    if (preds.back().last_hypothesis == t.truth) ++hyp_hits;
    ++report.outcomes[static_cast<std::size_t>(t.outcome.kind)];
  }
  report.accuracy = classwise_accuracy(preds, catalog);
  report.f1 = micro_macro_f1(preds, catalog);
  report.calibration = expected_calibration_error(preds, n_bins);
  report.avg_tests = avg_test_count(traces);
  report.hypothesis_accuracy = static_cast<double>(hyp_hits) / static_cast<double>(traces.size());
  return report;
}

std::string format_report(const EvalReport& r) {
  std::string out;
  out += "episodes              " + std::to_string(r.episodes) + "\n";
  out += "class accuracy\n";
  for (std::size_t k = 0; k < r.classes.size(); ++k) {
    const auto& v = r.accuracy.per_class[k];
    out += "  " + r.classes[k] + std::string(20 - std::min<std::size_t>(19, r.classes[k].size()), ' ') +
           (v ? fmt("%.4f", *v) : std::string("n/a")) + "\n";
  }
  out += "  mean                " + fmt("%.4f", r.accuracy.mean) + "\n";
  out += "micro F1              " + fmt("%.4f", r.f1.micro) + "\n";
  out += "macro F1              " + fmt("%.4f", r.f1.macro) + "\n";
  out += "ECE                   " + fmt("%.4f", r.calibration.ece) + "\n";
  out += "avg tests             " + fmt("%.4f", r.avg_tests) + "\n";
  out += "hypothesis accuracy   " + fmt("%.4f", r.hypothesis_accuracy) + "\n";
  out += "outcomes\n";
  for (std::size_t k = 0; k < r.outcomes.size(); ++k) {
    const std::string name = to_string(static_cast<OutcomeKind>(k));
    out += "  " + name + std::string(20 - std::min<std::size_t>(19, name.size()), ' ') +
           std::to_string(r.outcomes[k]) + "\n";
  }
  out += "calibration bins\n  lower  upper  count  mean_conf  accuracy\n";
  for (const auto& b : r.calibration.bins) {
    char line[96];
    std::snprintf(line, sizeof line, "  %.2f   %.2f   %5zu  %.4f     %.4f\n", b.lower, b.upper, b.count,
                  b.mean_confidence, b.accuracy);
    out += line;
  }
  return out;
}

std::string report_csv(const EvalReport& r) {
  std::string out = "metric,value\n";
  out += "episodes," + std::to_string(r.episodes) + "\n";
  for (std::size_t k = 0; k < r.classes.size(); ++k) {
    const auto& v = r.accuracy.per_class[k];
    out += "accuracy_" + r.classes[k] + "," + (v ? num(*v) : std::string("nan")) + "\n";
  }
  out += "mean_accuracy," + num(r.accuracy.mean) + "\n";
  out += "micro_f1," + num(r.f1.micro) + "\n";
  out += "macro_f1," + num(r.f1.macro) + "\n";
  out += "ece," + num(r.calibration.ece) + "\n";
  out += "avg_tests," + num(r.avg_tests) + "\n";
  out += "hypothesis_accuracy," + num(r.hypothesis_accuracy) + "\n";
  for (std::size_t k = 0; k < r.outcomes.size(); ++k) {
    out += std::string("outcome_") + to_string(static_cast<OutcomeKind>(k)) + "," +
           std::to_string(r.outcomes[k]) + "\n";
  }
  return out;
}

std::string calibration_csv(const CalibrationReport& report) {
  std::string out = "bin_lower,bin_upper,count,mean_conf,accuracy\n";
  for (const auto& b : report.bins) {
    out += num(b.lower) + "," + num(b.upper) + "," + std::to_string(b.count) + "," +
           num(b.mean_confidence) + "," + num(b.accuracy) + "\n";
  }
  return out;
}

}  // namespace dxloop
