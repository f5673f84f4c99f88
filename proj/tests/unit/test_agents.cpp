// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "dxloop/agents.hpp"
#include "dxloop/runner.hpp"
#include "test_support.hpp"

namespace dxloop {
namespace {

const TestCatalog kCatalog = TestCatalog::standard();

ModelSpec noise_spec() {
  ModelSpec s;
  s.informativeness.assign(12, 0.0);
  s.availability.assign(12, 1.0);
  s.findings_per_test.assign(12, 4);
  s.history_findings = 4;
  return s;
}

DecisionStep decide(const Agent& agent, const ObservedState& s, const HypothesisOutput& h, Rng& rng) {
  return agent.decide(DecisionContext{s, h, {}, s, h}, rng);
}

TEST(Oracle, UniformPosteriorLevelThree) {
  const OracleAgent oracle(kCatalog, build_model(kCatalog, noise_spec()), 0.9);
  Rng rng(0);
  const auto h = oracle.hypothesize(ObservedState{}, rng);
  EXPECT_EQ(h.output.hypothesis, "appendicitis");
  EXPECT_EQ(h.output.level, 3);
  EXPECT_EQ(h.class_log_prob, 0.0);
}

TEST(Oracle, LevelRounding) {
  EXPECT_EQ(oracle_level(0.25), 3);
  EXPECT_EQ(oracle_level(0.5714), 6);
  EXPECT_EQ(oracle_level(0.949), 9);
  EXPECT_EQ(oracle_level(0.95), 10);
  EXPECT_EQ(oracle_level(0.0), 0);
  EXPECT_EQ(oracle_level(1.0), 10);
}

TEST(Oracle, OneFindingPosterior) {
  // lambda = 3/7 with four findings gives likelihoods 4/7 vs 1/7 for finding 0.
  ModelSpec spec = noise_spec();
  spec.informativeness[4] = 3.0 / 7.0;
  const OracleAgent oracle(kCatalog, build_model(kCatalog, spec), 0.9);
  ObservedState s;
  s.revealed.push_back({"Ultrasound", render_finding("Ultrasound", 0)});
  const auto post = oracle.posterior(s);
  EXPECT_NEAR(post[0], 0.5714, 5e-5);
  EXPECT_NEAR(post[1], 0.1429, 5e-5);
  Rng rng(0);
  const auto h = oracle.hypothesize(s, rng);
  EXPECT_EQ(h.output.hypothesis, kCatalog.classes()[0]);
  EXPECT_EQ(h.output.level, 6);
}

TEST(Oracle, ThresholdRule) {
  const auto model = testing::decisive_model(1);
  ObservedState s;
  s.revealed.push_back({"CT", render_finding("CT", 2)});
  Rng rng(0);
  const OracleAgent oracle(kCatalog, model, 0.9);
  EXPECT_GE(oracle.posterior(s)[2], 0.99);
  const auto d = decide(oracle, s, make_hypothesis("diverticulitis", 10), rng);
  EXPECT_EQ(std::get<Diagnose>(d.action).label, "diverticulitis");
}

// Independent expected information gain by enumerating findings.
double brute_force_gain(const GenerativeModel& m, const std::vector<double>& prior, std::size_t t) {
  const auto h = [](const std::vector<double>& p) {
    double s = 0;
    for (double v : p)
      if (v > 0) s += -v * std::log(v);
    return s;
  };
  double expected = 0.0;
  for (std::size_t f = 0; f < m.tests[t].num_findings(); ++f) {
    std::vector<double> joint(prior.size());
    double pf = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) {
      joint[k] = prior[k] * m.tests[t].outcome[k][f];
      pf += joint[k];
    }
    if (pf == 0.0) continue;
    for (double& v : joint) v /= pf;
    expected += pf * h(joint);
  }
  return h(prior) - expected;
}

TEST(Oracle, InformationGainMatchesBruteForce) {
  const auto model = testing::preset_model("graded");
  const OracleAgent oracle(kCatalog, model, 0.9);
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(4);
    double z = 0;
    for (double& v : p) z += (v = rng.uniform() + 1e-3);
    for (double& v : p) v /= z;
    for (std::size_t t = 0; t < 12; ++t) {
      ASSERT_NEAR(oracle.expected_information_gain(p, t), brute_force_gain(model, p, t), 1e-12);
    }
  }
}

TEST(Oracle, SeparatingTestRequestedFirst) {
  // Only Liver Function Panel tells class 0 apart from the rest.
  auto model = build_model(kCatalog, noise_spec());
  model.tests[9].outcome = {{0.9, 0.1, 0.0, 0.0}, {0.1, 0.9, 0.0, 0.0}, {0.1, 0.9, 0.0, 0.0},
                            {0.1, 0.9, 0.0, 0.0}};
  const OracleAgent oracle(kCatalog, model, 0.9);
  const std::vector<double> uniform(4, 0.25);
  std::size_t best = 0;
  for (std::size_t t = 1; t < 12; ++t)
    if (brute_force_gain(model, uniform, t) > brute_force_gain(model, uniform, best)) best = t;
  ASSERT_EQ(best, 9u);
  Rng rng(0);
  const auto d = decide(oracle, ObservedState{}, make_hypothesis("appendicitis", 3), rng);
  EXPECT_EQ(std::get<RequestTest>(d.action).name, "Liver Function Panel");
}

TEST(Oracle, ClassChoiceInvariantUnderMonotoneMaps) {
  const auto model = testing::preset_model("graded");
  const OracleAgent oracle(kCatalog, model, 0.9);
  for (std::uint64_t trial = 0; trial < 300; ++trial) {
    Rng rng = Rng::derive(3, trial);
    const auto record = sample_patient(model, kCatalog, rng, "p");
    ObservedState s;
    s.history = record.history;
    for (const auto& kv : record.tests)
      if (rng.bernoulli(0.4)) s.revealed.push_back(kv);
    const auto post = oracle.posterior(s);
    const auto chosen = *kCatalog.class_index(oracle.hypothesize(s, rng).output.hypothesis);
    for (const auto& f : std::array<double (*)(double), 3>{
             [](double x) { return std::log(x); }, [](double x) { return x * x * x; },
             [](double x) { return std::exp(5 * x); }}) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 4; ++k)
        if (f(post[k]) > f(post[best])) best = k;
      ASSERT_EQ(best, chosen);
    }
  }
}

TEST(Oracle, ZeroThresholdDiagnosesImmediately) {
  const Environment env(kCatalog);
  const auto model = testing::preset_model("graded");
  const OracleAgent oracle(kCatalog, model, 0.0);
  for (std::uint64_t i = 0; i < 50; ++i) {
    Rng rng = Rng::derive(1, i);
    const auto record = sample_patient(model, kCatalog, rng, "p");
    const auto trace = run_episode(env, record, oracle, oracle, {}, rng);
    EXPECT_EQ(trace.steps.size(), 1u);
    EXPECT_EQ(trace.outcome.tests_used, 0);
  }
}

TEST(Oracle, FullThresholdRequestsEverything) {
  ModelSpec spec = noise_spec();
  spec.informativeness.assign(12, 0.3);
  const auto model = build_model(kCatalog, spec);
  const Environment env(kCatalog);
  const OracleAgent oracle(kCatalog, model, 1.0);
  for (std::uint64_t i = 0; i < 20; ++i) {
    Rng rng = Rng::derive(2, i);
    const auto record = sample_patient(model, kCatalog, rng, "p");
    const auto trace = run_episode(env, record, oracle, oracle, {}, rng);
    EXPECT_EQ(trace.outcome.tests_used, 12);
    EXPECT_NE(trace.outcome.kind, OutcomeKind::InvalidTermination);
  }
}

TEST(Parametric, ZeroWeightsSampleUniformly) {
  const FeatureEncoder enc(kCatalog, std::vector<std::size_t>(12, 3));
  Rng init(0);
  InitOptions opt;
  opt.scale = 0.0;
  const auto params = init_params(enc, init, opt);
  const ParametricAgent agent(params, enc);
  Rng rng(4);
  std::array<int, 4> cls{};
  std::array<int, 11> lvl{};
  const int n = 44000;
  for (int i = 0; i < n; ++i) {
    const auto h = agent.hypothesize(ObservedState{}, rng);
    ASSERT_NEAR(h.class_log_prob, -std::log(4.0), 1e-12);
    ASSERT_NEAR(h.level_log_prob, -std::log(11.0), 1e-12);
    ++cls[*kCatalog.class_index(h.output.hypothesis)];
    ++lvl[static_cast<std::size_t>(h.output.level)];
  }
  for (int c : cls) EXPECT_NEAR(c, n / 4, 400);
  for (int c : lvl) EXPECT_NEAR(c, n / 11, 300);
}

TEST(Parametric, AllTestsRequestedLeavesNoTestAction) {
  const FeatureEncoder enc(kCatalog, std::vector<std::size_t>(12, 3));
  Rng init(0);
  const auto params = init_params(enc, init, {1.0, std::nullopt, 0.0});
  const ParametricAgent agent(params, enc);
  ObservedState s;
  for (const auto& t : kCatalog.tests()) s.requested.insert(t);
  const auto h = make_hypothesis("appendicitis", 5);
  const auto lp = masked_log_softmax(params.decision_head * enc.encode(s, h), enc.action_mask(s));
  for (int t = 0; t < 12; ++t) EXPECT_EQ(std::exp(lp[t]), 0.0);
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const auto d = decide(agent, s, h, rng);
    ASSERT_FALSE(std::holds_alternative<RequestTest>(d.action));
  }
}

TEST(Parametric, NeverRequestsDuplicates) {
  const Environment env(kCatalog);
  const auto model = testing::preset_model("graded");
  const auto enc = FeatureEncoder::for_model(kCatalog, model);
  Rng init(1);
  auto params = init_params(enc, init, {0.5, std::nullopt, 0.0});
  // Push mass away from diagnosing so episodes request many tests.
  params.decision_head.bottomRows(5).array() -= 3.0;
  const ParametricAgent agent(params, enc);
  for (std::uint64_t i = 0; i < 200; ++i) {
    Rng rng = Rng::derive(6, i);
    const auto record = sample_patient(model, kCatalog, rng, "p");
    const auto trace = run_episode(env, record, agent, agent, {}, rng);
    for (const auto& step : trace.steps) ASSERT_NE(step.observation.kind, ObservationKind::Duplicate);
  }
}

TEST(Parametric, GreedyIsDeterministic) {
  const FeatureEncoder enc(kCatalog, std::vector<std::size_t>(12, 3));
  Rng init(2);
  const auto params = init_params(enc, init, {1.0, std::nullopt, 0.0});
  const ParametricAgent agent(params, enc, ActMode::Greedy);
  Rng a(1), b(999);
  const auto ha = agent.hypothesize(ObservedState{}, a);
  EXPECT_EQ(ha.output, agent.hypothesize(ObservedState{}, b).output);
  const auto x = enc.encode(ObservedState{});
  EXPECT_EQ(*kCatalog.class_index(ha.output.hypothesis), argmax(params.class_head * x));
}

TEST(Scripted, FollowsPlan) {
  const ScriptedAgent agent(kCatalog, {script::Request{"CT"}, script::DiagnoseLabel{"pancreatitis"}},
                            make_hypothesis("cholecystitis", 6));
  Rng rng(0);
  ObservedState s;
  const auto h = agent.hypothesize(s, rng).output;
  EXPECT_EQ(h, make_hypothesis("cholecystitis", 6));
  EXPECT_EQ(std::get<RequestTest>(decide(agent, s, h, rng).action).name, "CT");
  s.step = 1;
  EXPECT_EQ(std::get<Diagnose>(decide(agent, s, h, rng).action).label, "pancreatitis");
  s.step = 2;
  EXPECT_EQ(std::get<Diagnose>(decide(agent, s, h, rng).action).label, "cholecystitis");
}

TEST(Scripted, RandomRequestAvoidsRequested) {
  const ScriptedAgent agent(kCatalog, {script::RequestRandom{}}, make_hypothesis("appendicitis", 5));
  ObservedState s;
  for (std::size_t t = 0; t < 11; ++t) s.requested.insert(kCatalog.tests()[t]);
  Rng rng(0);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(std::get<RequestTest>(decide(agent, s, make_hypothesis("appendicitis", 5), rng).action).name,
              "Electrolyte Panel");
  }
}

}  // namespace
}  // namespace dxloop
