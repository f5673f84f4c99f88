// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "dxloop/errors.hpp"
#include "dxloop/trainer.hpp"
#include "training_checks.hpp"

namespace dxloop {
namespace {

const TestCatalog kCatalog = TestCatalog::standard();

TEST(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto e = testing::gradient_errors(seed);
    ASSERT_LT(e.class_head, 1e-4) << seed;
    ASSERT_LT(e.confidence_head, 1e-4) << seed;
    ASSERT_LT(e.decision_head, 1e-4) << seed;
    ASSERT_LT(e.value, 1e-4) << seed;
  }
}

TEST(Returns, Discounted) {
  const auto r = discounted_returns(3, 1.0, 0.99);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_NEAR(r[0], 0.9801, 1e-12);
  EXPECT_NEAR(r[1], 0.99, 1e-12);
  EXPECT_NEAR(r[2], 1.0, 1e-12);
  for (double v : discounted_returns(4, 0.0, 0.9)) EXPECT_EQ(v, 0.0);
  for (double v : discounted_returns(4, -1.5, 1.0)) EXPECT_EQ(v, -1.5);
}

TEST(Returns, ComputeReturnsPerEpisode) {
  RolloutBatch batch;
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(2);
  for (std::size_t ep = 0; ep < 2; ++ep) {
    const std::size_t len = ep == 0 ? 3 : 1;
    for (std::size_t k = 0; k < len; ++k) {
      StepRecord s;
      s.features = x;
      s.episode = ep;
      s.reward = k + 1 == len ? (ep == 0 ? 1.0 : -1.5) : 0.0;
      batch.decision_steps.push_back(s);
    }
  }
  PolicyParams p;
  p.value_d = Eigen::VectorXd::Constant(2, 0.25);
  p.value_h = Eigen::VectorXd::Zero(2);
  const auto adv = compute_returns(batch, 0.99, p, Head::Decision);
  const auto expected = discounted_returns(3, 1.0, 0.99);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(batch.decision_steps[k].ret, expected[k], 1e-12);
    EXPECT_NEAR(adv[k], expected[k] - 0.5, 1e-12);
  }
  EXPECT_EQ(batch.decision_steps[3].ret, -1.5);
}

TEST(Ppo, ClipUsesBoundedRatio) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, 1);
  StepRecord s;
  s.features = Eigen::VectorXd::Ones(1);
  s.action = 0;
  s.old_log_prob = std::log(0.5) - std::log(1.5);  // rho = 1.5
  const std::vector<StepRecord> steps{s};
  const std::vector<double> adv{2.0};
  Eigen::MatrixXd g;
  EXPECT_NEAR(ppo_loss(w, steps, adv, 0.2, &g), -1.2 * 2.0, 1e-12);
  EXPECT_EQ(g.norm(), 0.0);
  const std::vector<double> neg{-2.0};
  EXPECT_NEAR(ppo_loss(w, steps, neg, 0.2, &g), 1.5 * 2.0, 1e-12);
  EXPECT_GT(g.norm(), 0.0);
}

TEST(Ppo, ZeroAdvantagesLeavePolicyUnchanged) {
  PolicyParams p;
  p.decision_head = Eigen::MatrixXd::Constant(3, 2, 0.1);
  p.value_d = Eigen::VectorXd::Zero(2);
  RolloutBatch batch;
  StepRecord s;
  s.features = Eigen::VectorXd::Ones(2);
  s.old_log_prob = std::log(1.0 / 3.0);
  s.reward = 0.0;
  batch.decision_steps = {s, s};
  const Eigen::MatrixXd before = p.decision_head;
  TrainConfig cfg;
  AdamState opt;
  const auto stats = ppo_update(p, batch, Head::Decision, cfg, opt);
  EXPECT_FALSE(stats.aborted);
  EXPECT_EQ(p.decision_head, before);
}

TEST(Ppo, EmptyHeadIsUsageError) {
  PolicyParams p;
  RolloutBatch batch;
  AdamState opt;
  EXPECT_THROW(ppo_update(p, batch, Head::Confidence, TrainConfig{}, opt), UsageError);
}

TEST(Ppo, NonFiniteAborts) {
  PolicyParams p;
  p.decision_head = Eigen::MatrixXd::Zero(2, 1);
  p.value_d = Eigen::VectorXd::Zero(1);
  RolloutBatch batch;
  StepRecord s;
  s.features = Eigen::VectorXd::Ones(1);
  s.old_log_prob = std::log(0.5);
  s.reward = std::numeric_limits<double>::quiet_NaN();
  batch.decision_steps = {s};
  AdamState opt;
  const auto stats = ppo_update(p, batch, Head::Decision, TrainConfig{}, opt);
  EXPECT_TRUE(stats.aborted);
  EXPECT_EQ(p.decision_head, Eigen::MatrixXd::Zero(2, 1));
  EXPECT_EQ(opt.t, 0);
}

TEST(Ppo, BanditConverges) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) ok += testing::bandit_run(seed, 5000) >= 0.9;
  EXPECT_GE(ok, 4);
}

class TrainerFixture : public ::testing::Test {
 protected:
  RunConfig cfg = testing::preset("one-decisive-test");
  GenerativeModel model = build_model(kCatalog, cfg.model);
  FeatureEncoder enc = FeatureEncoder::for_model(kCatalog, model);
  Environment env{kCatalog, cfg.env};
  std::vector<PatientRecord> records;

  void SetUp() override {
    for (std::uint64_t i = 0; i < 20; ++i) {
      Rng rng = Rng::derive(3, i);
      records.push_back(sample_patient(model, kCatalog, rng, "p" + std::to_string(i)));
    }
  }
  PolicyParams params(std::uint64_t seed = 1) {
    Rng rng(seed);
    return init_params(enc, rng, {0.3, std::nullopt, 0.0});
  }
};

TEST_F(TrainerFixture, CollectRolloutsBasics) {
  const auto p = params();
  EXPECT_TRUE(collect_rollouts(env, records, p, enc, 0, 1).traces.empty());
  const auto a = collect_rollouts(env, records, p, enc, 8, 5);
  const auto b = collect_rollouts(env, records, p, enc, 8, 5);
  ASSERT_EQ(a.traces.size(), 8u);
  ASSERT_EQ(a.decision_steps.size(), b.decision_steps.size());
  for (std::size_t i = 0; i < a.decision_steps.size(); ++i) {
    EXPECT_EQ(a.decision_steps[i].action, b.decision_steps[i].action);
    EXPECT_EQ(a.decision_steps[i].old_log_prob, b.decision_steps[i].old_log_prob);
    EXPECT_TRUE(std::isfinite(a.decision_steps[i].old_log_prob));
    EXPECT_EQ(a.decision_steps[i].head, Head::Decision);
  }
  std::size_t steps = 0;
  for (const auto& t : a.traces) steps += t.steps.size();
  EXPECT_EQ(a.confidence_steps.size(), steps);
  EXPECT_EQ(a.decision_steps.size(), steps);
  for (const auto& s : a.confidence_steps) EXPECT_EQ(s.head, Head::Confidence);
}

TEST_F(TrainerFixture, ScriptedImmediateGivesLengthOne) {
  const auto p = params();
  const auto agent = ScriptedAgent::immediate(kCatalog, "appendicitis");
  RolloutOptions opt;
  opt.decision_agent = &agent;
  const auto batch = collect_rollouts(env, records, p, enc, 10, 2, opt);
  for (const auto& t : batch.traces) EXPECT_EQ(t.steps.size(), 1u);
  EXPECT_TRUE(batch.decision_steps.empty());
  EXPECT_EQ(batch.confidence_steps.size(), 10u);
}

TEST_F(TrainerFixture, ExplorationRecomputesLogProb) {
  const auto p = params();
  RolloutOptions opt;
  opt.explore_probability = 1.0;
  const auto batch = collect_rollouts(env, records, p, enc, 6, 9, opt);
  for (const auto& s : batch.confidence_steps) {
    const auto lp = masked_log_softmax(p.confidence_head * s.features);
    EXPECT_NEAR(s.old_log_prob, lp[static_cast<Eigen::Index>(s.action)], 1e-12);
  }
}

TEST_F(TrainerFixture, UpdatesTouchOnlyTheirHead) {
  const PolicyParams start = params();
  TrainConfig tc;
  for (const Head head : {Head::Confidence, Head::Decision}) {
    PolicyParams p = start;
    auto batch = collect_rollouts(env, records, p, enc, 4, 11);
    AdamState opt;
    ppo_update(p, batch, head, tc, opt);
    EXPECT_EQ(p.class_head, start.class_head);
    if (head == Head::Confidence) {
      EXPECT_NE(p.confidence_head, start.confidence_head);
      EXPECT_EQ(p.decision_head, start.decision_head);
      EXPECT_EQ(p.value_d, start.value_d);
    } else {
      EXPECT_EQ(p.confidence_head, start.confidence_head);
      EXPECT_NE(p.decision_head, start.decision_head);
      EXPECT_EQ(p.value_h, start.value_h);
    }
  }
  PolicyParams p = start;
  const auto batch = collect_rollouts(env, records, p, enc, 4, 12);
  const auto targets = build_hypothesis_targets(batch.traces);
  supervised_hypothesis_update(p, enc, targets, 0.1);
  EXPECT_NE(p.class_head, start.class_head);
  EXPECT_EQ(p.confidence_head, start.confidence_head);
  EXPECT_EQ(p.decision_head, start.decision_head);
  EXPECT_EQ(p.value_h, start.value_h);
  EXPECT_EQ(p.value_d, start.value_d);
}

TEST(HypothesisTargets, Counting) {
  EXPECT_TRUE(build_hypothesis_targets({}).empty());
  std::vector<EpisodeTrace> traces(2);
  traces[0].truth = "appendicitis";
  traces[0].steps.resize(1);
  traces[1].truth = "pancreatitis";
  traces[1].steps.resize(4);
  const auto t = build_hypothesis_targets(traces);
  ASSERT_EQ(t.size(), 5u);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_EQ(t[i].truth, "pancreatitis");
  std::vector<EpisodeTrace> one(1);
  one[0].truth = "cholecystitis";
  one[0].steps.resize(3);
  for (const auto& x : build_hypothesis_targets(one)) EXPECT_EQ(x.truth, "cholecystitis");
}

TEST(Supervised, LossDefinitionAndSaturation) {
  const FeatureEncoder enc(kCatalog, std::vector<std::size_t>(12, 3));
  PolicyParams p;
  Rng rng(0);
  p = init_params(enc, rng, {1.0, std::nullopt, 0.0});
  const std::vector<HypothesisTarget> one{{ObservedState{}, "diverticulitis"}};
  const auto x = enc.encode(ObservedState{});
  const double expected = -masked_log_softmax(p.class_head * x)[2];
  const auto stats = supervised_hypothesis_update(p, enc, one, 0.1);
  EXPECT_NEAR(stats.loss, expected, 1e-12);

  // A saturated head: loss is zero to machine precision and nothing moves.
  PolicyParams sat = p;
  sat.class_head.setZero();
  sat.class_head(2, static_cast<Eigen::Index>(enc.bias_offset())) = 800.0;
  const Eigen::MatrixXd before = sat.class_head;
  const auto s2 = supervised_hypothesis_update(sat, enc, one, 0.1);
  EXPECT_EQ(s2.loss, 0.0);
  EXPECT_EQ(sat.class_head, before);
  EXPECT_THROW(supervised_hypothesis_update(p, enc, std::vector<HypothesisTarget>{}, 0.1), UsageError);
}

TEST(Supervised, SeparableLossDecreasesMonotonically) {
  const FeatureEncoder enc(kCatalog, std::vector<std::size_t>(12, 4));
  std::vector<HypothesisTarget> targets;
  for (std::size_t k = 0; k < 4; ++k) {
    ObservedState s;
    s.revealed.push_back({"CT", render_finding("CT", k)});
    targets.push_back({s, kCatalog.classes()[k]});
  }
  Rng rng(1);
  PolicyParams p = init_params(enc, rng, {0.01, std::nullopt, 0.0});
  double prev = 1e300;
  for (int i = 0; i < 100; ++i) {
    const double loss = supervised_hypothesis_update(p, enc, targets, 0.5).loss;
    ASSERT_LT(loss, prev) << i;
    prev = loss;
  }
  EXPECT_LT(prev, 0.5);
}

TEST(Schedule, Cyclic) {
  TrainConfig c;
  c.warmup_steps = 100;
  c.rotation_steps = 50;
  EXPECT_EQ(cyclic_schedule(0, c), Objective::Calibration);
  EXPECT_EQ(cyclic_schedule(99, c), Objective::Calibration);
  EXPECT_EQ(cyclic_schedule(100, c), Objective::Action);
  EXPECT_EQ(cyclic_schedule(120, c), Objective::Action);
  EXPECT_EQ(cyclic_schedule(150, c), Objective::Hypothesis);
  EXPECT_EQ(cyclic_schedule(200, c), Objective::Calibration);
  EXPECT_EQ(cyclic_schedule(249, c), Objective::Calibration);
  EXPECT_EQ(cyclic_schedule(250, c), Objective::Action);
  EXPECT_EQ(cyclic_schedule(100 + 150 * 7 + 60, c), Objective::Hypothesis);
}

TEST(Schedule, ObjectiveNames) {
  for (auto o : {Objective::Action, Objective::Hypothesis, Objective::Calibration})
    EXPECT_EQ(objective_from_string(to_string(o)), o);
  EXPECT_EQ(objective_from_string(" Action "), Objective::Action);
  EXPECT_THROW(objective_from_string("actor"), ConfigError);
}

TEST(TrainConfigValidation, Rejects) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.clip = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.rotation_steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.order.clear();
  EXPECT_THROW(c.validate(), ConfigError);
}

class TrainLoop : public TrainerFixture {
 protected:
  Dataset small() {
    SyntheticConfig sc;
    sc.n_patients = 60;
    sc.seed = 4;
    return generate_dataset(sc, model, kCatalog);
  }
  TrainConfig short_config() {
    TrainConfig tc = cfg.trainer;
    tc.warmup_steps = 4;
    tc.rotation_steps = 3;
    tc.max_steps = 25;
    tc.eval_every = 5;
    tc.seed = 17;
    return tc;
  }
};

TEST_F(TrainLoop, ZeroStepsReturnsInitialParams) {
  auto tc = short_config();
  tc.max_steps = 0;
  const auto result = train(tc, env, small(), enc, {}, {});
  Rng init = Rng::derive(tc.seed, 0);
  EXPECT_EQ(result.last.params, init_params(enc, init, tc.init));
  EXPECT_EQ(result.best.params, result.last.params);
  EXPECT_TRUE(result.history.empty());
}

TEST_F(TrainLoop, HistoryLengthAndReproducibility) {
  const auto tc = short_config();
  const auto ds = small();
  int hook_calls = 0;
  TrainHooks hooks;
  hooks.on_eval = [&](const MetricRow&) { ++hook_calls; };
  const auto a = train(tc, env, ds, enc, {}, {}, {}, hooks);
  const auto b = train(tc, env, ds, enc, {}, {});
  EXPECT_EQ(a.history.size(), 5u);
  EXPECT_EQ(hook_calls, 5);
  EXPECT_EQ(a.last.params, b.last.params);
  EXPECT_EQ(metric_history_csv(a.history), metric_history_csv(b.history));
  EXPECT_EQ(a.last.step, 25u);
  EXPECT_EQ(a.last.rng, b.last.rng);
}

TEST_F(TrainLoop, NonMultipleMaxStepsEvaluatesAtEnd) {
  auto tc = short_config();
  tc.max_steps = 12;
  const auto r = train(tc, env, small(), enc, {}, {});
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.history.back().step, 12u);
}

TEST_F(TrainLoop, ResumeContinuesTheSameRun) {
  auto tc = short_config();
  const auto ds = small();
  const auto full = train(tc, env, ds, enc, {}, {});
  auto first = tc;
  first.max_steps = 10;
  const auto half = train(first, env, ds, enc, {}, {});
  // Adam moments restart, so parameters differ; the step and rng carry over.
  const auto rest = train(tc, env, ds, enc, {}, {}, {}, {}, half.last);
  EXPECT_EQ(rest.last.step, full.last.step);
  EXPECT_EQ(rest.history.size(), 3u);
}

TEST_F(TrainLoop, BestIsFirstRowWithTopAccuracyThenFewestTests) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto tc = short_config();
    tc.seed = seed;
    tc.max_steps = 60;
    const auto result = train(tc, env, small(), enc, {}, {});
    ASSERT_FALSE(result.history.empty());
    const MetricRow* best = &result.history.front();
    for (const auto& row : result.history) {
      if (row.mean_accuracy > best->mean_accuracy ||
          (row.mean_accuracy == best->mean_accuracy && row.avg_tests < best->avg_tests)) {
        best = &row;
      }
    }
    EXPECT_EQ(result.best.step, best->step) << "seed " << seed;
  }
}

TEST_F(TrainLoop, PatienceStopsEarly) {
  auto tc = short_config();
  tc.max_steps = 400;
  tc.eval_every = 1;
  tc.patience = 2;
  const auto r = train(tc, env, small(), enc, {}, {});
  EXPECT_LT(r.last.step, 400u);
}

TEST_F(TrainLoop, MissingSplitsRejected) {
  Dataset ds = small();
  ds.val.clear();
  EXPECT_THROW(train(short_config(), env, ds, enc, {}, {}), ConfigError);
  ds = small();
  ds.train.clear();
  EXPECT_THROW(train(short_config(), env, ds, enc, {}, {}), ConfigError);
}

}  // namespace
}  // namespace dxloop
