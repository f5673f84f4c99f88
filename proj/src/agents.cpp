// SPDX-License-Identifier: Apache-2.0
#include "dxloop/agents.hpp"

#include <algorithm>
#include <cmath>

namespace dxloop {

namespace {

Sampled choose(const Eigen::VectorXd& logits, ActMode mode, Rng& rng,
               const std::vector<bool>& mask = {}) {
  if (mode == ActMode::Sample) return sample_softmax(logits, rng, mask);
  const std::size_t idx = argmax(logits, mask);
  return {idx, masked_log_softmax(logits, mask)[static_cast<Eigen::Index>(idx)]};
}

std::string decision_text(const EnvAction& action) {
  if (const auto* r = std::get_if<RequestTest>(&action)) {
    return format_decision({std::nullopt, DecisionKind::Test, r->name});
  }
  if (const auto* d = std::get_if<Diagnose>(&action)) {
    return format_decision({std::nullopt, DecisionKind::Diagnosis, d->label});
  }
  return "Action: none";
}

}  // namespace

HypothesisStep ParametricAgent::hypothesize(const ObservedState& state, Rng& rng) const {
  const FeatureVector x = encoder_->encode(state);
  const Sampled cls = choose(params_->class_head * x, mode_, rng);
  const FeatureVector xc = encoder_->confidence_input(x, cls.index);
  const Sampled level = choose(params_->confidence_head * xc, mode_, rng);

  HypothesisStep step;
  step.output = make_hypothesis(encoder_->catalog().classes()[cls.index], static_cast<int>(level.index));
  step.class_log_prob = cls.log_prob;
  step.level_log_prob = level.log_prob;
  step.text = format_hypothesis(step.output);
  return step;
}

DecisionStep ParametricAgent::decide(const DecisionContext& context, Rng& rng) const {
  const FeatureVector x = encoder_->encode(context.state, context.hypothesis);
  const auto mask = encoder_->action_mask(context.state);
  const Sampled a = choose(params_->decision_head * x, mode_, rng, mask);

  DecisionStep step;
  step.action = encoder_->action_for(a.index);
  step.action_index = a.index;
  step.log_prob = a.log_prob;
  step.text = decision_text(step.action);
  return step;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

int oracle_level(double top_posterior) {
  return std::clamp(static_cast<int>(std::floor(10.0 * top_posterior + 0.5)), 0, kMaxConfidenceLevel);
}

OracleAgent::OracleAgent(TestCatalog catalog, GenerativeModel model, double threshold)
    : catalog_(std::move(catalog)), model_(std::move(model)), threshold_(threshold) {
  model_.validate(catalog_);
  if (!(threshold_ >= 0.0 && threshold_ <= 1.0)) throw ConfigError("oracle threshold outside [0, 1]");
}

std::vector<double> OracleAgent::posterior(const ObservedState& state) const {
  return exact_posterior(model_, extract_findings(state, catalog_, model_));
}

double OracleAgent::expected_information_gain(const std::vector<double>& posterior,
                                              std::size_t test) const {
  const TestModel& tm = model_.tests[test];
  double expected = 0.0;
  std::vector<double> next(posterior.size());
  for (std::size_t f = 0; f < tm.num_findings(); ++f) {
    double pred = 0.0;
    for (std::size_t k = 0; k < posterior.size(); ++k) {
      next[k] = posterior[k] * tm.outcome[k][f];
      pred += next[k];
    }
    if (pred <= 0.0) continue;
    for (double& v : next) v /= pred;
    expected += pred * entropy(next);
  }
  return entropy(posterior) - expected;
}

HypothesisStep OracleAgent::hypothesize(const ObservedState& state, Rng&) const {
  const auto post = posterior(state);
  const auto top = static_cast<std::size_t>(std::max_element(post.begin(), post.end()) - post.begin());
  HypothesisStep step;
  step.output = make_hypothesis(catalog_.classes()[top], oracle_level(post[top]));
  step.text = format_hypothesis(step.output);
  return step;
}

DecisionStep OracleAgent::decide(const DecisionContext& context, Rng&) const {
  constexpr double kMinGain = 1e-12;
  const auto post = posterior(context.state);
  const auto top = static_cast<std::size_t>(std::max_element(post.begin(), post.end()) - post.begin());

  DecisionStep step;
  step.action = Diagnose{catalog_.classes()[top]};
  if (post[top] < threshold_) {
    std::optional<std::size_t> best;
    double best_gain = kMinGain;
    for (std::size_t t = 0; t < catalog_.num_tests(); ++t) {
      if (context.state.requested.contains(catalog_.tests()[t])) continue;
      const double gain = expected_information_gain(post, t);
      if (gain > best_gain) {
        best_gain = gain;
        best = t;
      }
    }
    if (best) step.action = RequestTest{catalog_.tests()[*best]};
  }
  step.text = decision_text(step.action);
  return step;
}

ScriptedAgent::ScriptedAgent(TestCatalog catalog, std::vector<ScriptStep> plan,
                             HypothesisOutput hypothesis)
    : catalog_(std::move(catalog)), plan_(std::move(plan)), hypothesis_(std::move(hypothesis)) {}

ScriptedAgent ScriptedAgent::immediate(const TestCatalog& catalog, const std::string& label) {
  return ScriptedAgent(catalog, {script::DiagnoseLabel{label}}, make_hypothesis(label, 5));
}

HypothesisStep ScriptedAgent::hypothesize(const ObservedState&, Rng&) const {
  return HypothesisStep{hypothesis_, 0.0, 0.0, format_hypothesis(hypothesis_)};
}

DecisionStep ScriptedAgent::decide(const DecisionContext& context, Rng& rng) const {
  const auto index = static_cast<std::size_t>(context.state.step);
  ScriptStep planned = index < plan_.size() ? plan_[index] : ScriptStep{script::DiagnoseHypothesis{}};

  DecisionStep step;
  struct Visitor {
    const ScriptedAgent& self;
    const DecisionContext& ctx;
    Rng& rng;
    EnvAction operator()(const script::Request& s) const { return RequestTest{s.test}; }
    EnvAction operator()(const script::DiagnoseLabel& s) const { return Diagnose{s.label}; }
    EnvAction operator()(const script::DiagnoseHypothesis&) const {
      return Diagnose{ctx.hypothesis.hypothesis};
    }
    EnvAction operator()(const script::RequestRandom&) const {
      std::vector<std::string> open;
      for (const auto& t : self.catalog_.tests()) {
        if (!ctx.state.requested.contains(t)) open.push_back(t);
      }
      if (open.empty()) return Diagnose{ctx.hypothesis.hypothesis};
      return RequestTest{open[rng.uniform_index(open.size())]};
    }
  };
  step.action = std::visit(Visitor{*this, context, rng}, planned);
  step.text = decision_text(step.action);
  return step;
}

}  // namespace dxloop
