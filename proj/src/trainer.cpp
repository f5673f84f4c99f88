// SPDX-License-Identifier: Apache-2.0
#include "dxloop/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "dxloop/errors.hpp"

namespace dxloop {

const char* to_string(Objective objective) {
  switch (objective) {
    case Objective::Action: return "action";
    case Objective::Hypothesis: return "hypothesis";
    case Objective::Calibration: return "calibration";
  }
  return "unknown";
}

Objective objective_from_string(const std::string& name) {
  const std::string key = to_lower(trim(name));
  if (key == "action") return Objective::Action;
  if (key == "hypothesis") return Objective::Hypothesis;
  if (key == "calibration") return Objective::Calibration;
  throw ConfigError("unknown objective '" + name + "'");
}

// ---------------------------------------------------------------- rollouts

RolloutBatch collect_rollouts(const Environment& env, std::span<const PatientRecord> records,
                              const PolicyParams& params, const FeatureEncoder& encoder,
                              std::size_t n_episodes, std::uint64_t seed,
                              const RolloutOptions& options) {
  RolloutBatch batch;
  if (n_episodes == 0) return batch;
  if (records.empty()) throw UsageError("collect_rollouts: no records");

  const ParametricAgent policy(params, encoder, ActMode::Sample);
  const Agent& decider = options.decision_agent ? *options.decision_agent : policy;
  const auto& catalog = encoder.catalog();

  EpisodeHooks hooks;
  if (options.explore_probability > 0.0) {
    hooks.on_hypothesis = [&](const ObservedState& state, HypothesisStep& h, Rng& rng) {
      const int level = explore_confidence(h.output.level, options.explore_probability, rng);
      if (level == h.output.level) return;
      const auto cls = *catalog.class_index(h.output.hypothesis);
      const FeatureVector xc = encoder.confidence_input(encoder.encode(state), cls);
      h.level_log_prob = masked_log_softmax(params.confidence_head * xc)[level];
      h.output = make_hypothesis(h.output.hypothesis, level);
      h.text = format_hypothesis(h.output);
    };
  }

  batch.traces.reserve(n_episodes);
  for (std::size_t i = 0; i < n_episodes; ++i) {
    const PatientRecord& record = records[i % records.size()];
    Rng rng = Rng::derive(seed, i);
    EpisodeTrace trace = run_episode(env, record, policy, decider, options.decision, rng, hooks);

    for (const TraceStep& step : trace.steps) {
      const HypothesisOutput& hyp = step.hypothesis.output;
      const auto cls = *catalog.class_index(hyp.hypothesis);
      StepRecord c;
      c.head = Head::Confidence;
      c.features = encoder.confidence_input(encoder.encode(step.state), cls);
      c.action = static_cast<std::size_t>(hyp.level);
      c.old_log_prob = step.hypothesis.level_log_prob;
      c.reward = calibration_reward(hyp.hypothesis == trace.truth,
                                    level_to_confidence(hyp.level, options.calibration.eps),
                                    options.calibration);
      c.episode = i;
      batch.confidence_steps.push_back(std::move(c));

      if (step.decision.action_index && !options.decision_agent) {
        StepRecord d;
        d.head = Head::Decision;
        d.features = encoder.encode(step.state, hyp);
        d.mask = encoder.action_mask(step.state);
        d.action = *step.decision.action_index;
        d.old_log_prob = step.decision.log_prob;
        d.reward = step.reward;
        d.episode = i;
        batch.decision_steps.push_back(std::move(d));
      }
    }
    batch.traces.push_back(std::move(trace));
  }
  return batch;
}

std::vector<double> discounted_returns(std::size_t length, double terminal_reward, double gamma) {
  std::vector<double> out(length);
  double g = terminal_reward;
  for (std::size_t k = length; k-- > 0;) {
    out[k] = g;
    g *= gamma;
  }
  return out;
}

std::vector<double> compute_returns(RolloutBatch& batch, double gamma, const PolicyParams& params,
                                    Head head) {
  for (auto& s : batch.confidence_steps) s.ret = s.reward;

  auto& dec = batch.decision_steps;
  for (std::size_t end = dec.size(); end > 0;) {
    // Walk one episode backwards: G_k = r_k + gamma G_{k+1}.
    const std::size_t episode = dec[end - 1].episode;
    double g = 0.0;
    while (end > 0 && dec[end - 1].episode == episode) {
      --end;
      g = dec[end].reward + gamma * g;
      dec[end].ret = g;
    }
  }

  const auto& steps = batch.steps(head);
  const Eigen::VectorXd& v = head == Head::Confidence ? params.value_h : params.value_d;
  std::vector<double> adv;
  adv.reserve(steps.size());
  for (const auto& s : steps) adv.push_back(s.ret - v.dot(s.features));
  return adv;
}

// ---------------------------------------------------------------- losses

double class_loss(const Eigen::MatrixXd& weights, std::span<const ClassTarget> targets,
                  Eigen::MatrixXd* grad) {
  if (grad) grad->setZero(weights.rows(), weights.cols());
  if (targets.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  double loss = 0.0;
  for (const auto& t : targets) {
    const Eigen::VectorXd logp = masked_log_softmax(weights * t.features);
    const auto y = static_cast<Eigen::Index>(t.label);
    loss -= logp[y] * inv_n;
    if (grad) {
      Eigen::VectorXd delta = logp.unaryExpr([](double v) { return std::exp(v); });
      delta[y] -= 1.0;
      grad->noalias() += inv_n * delta * t.features.transpose();
    }
  }
  return loss;
}

double ppo_loss(const Eigen::MatrixXd& weights, std::span<const StepRecord> steps,
                std::span<const double> advantages, double clip, Eigen::MatrixXd* grad) {
  if (steps.size() != advantages.size()) throw UsageError("ppo_loss: advantage count mismatch");
  if (grad) grad->setZero(weights.rows(), weights.cols());
  if (steps.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(steps.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const StepRecord& s = steps[i];
    const double a = advantages[i];
    const Eigen::VectorXd logp = masked_log_softmax(weights * s.features, s.mask);
    const auto act = static_cast<Eigen::Index>(s.action);
    const double rho = std::exp(logp[act] - s.old_log_prob);
    const double unclipped = rho * a;
    const double clipped = std::clamp(rho, 1.0 - clip, 1.0 + clip) * a;
    loss -= std::min(unclipped, clipped) * inv_n;
    if (grad && unclipped <= clipped) {
      // d(rho A)/dlogits = A rho (onehot - pi); masked entries have pi = 0.
      Eigen::VectorXd dlogits = -logp.unaryExpr([](double v) { return std::exp(v); });
      dlogits[act] += 1.0;
      grad->noalias() -= (inv_n * a * rho) * dlogits * s.features.transpose();
    }
  }
  return loss;
}

double value_loss(const Eigen::VectorXd& weights, std::span<const StepRecord> steps,
                  Eigen::VectorXd* grad) {
  if (grad) grad->setZero(weights.size());
  if (steps.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(steps.size());
  double loss = 0.0;
  for (const auto& s : steps) {
    const double err = weights.dot(s.features) - s.ret;
    loss += 0.5 * err * err * inv_n;
    if (grad) grad->noalias() += (err * inv_n) * s.features;
  }
  return loss;
}

void adam_step(double* param, const double* grad, Eigen::Index size, AdamState& state,
               const AdamConfig& config) {
  if (state.m.size() != size) {
    state.m = Eigen::VectorXd::Zero(size);
    state.v = Eigen::VectorXd::Zero(size);
    state.t = 0;
  }
  ++state.t;
  Eigen::Map<Eigen::VectorXd> p(param, size);
  const Eigen::Map<const Eigen::VectorXd> g(grad, size);
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * g;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  p.array() -= config.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

// ---------------------------------------------------------------- updates

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(supervised_lr > 0.0) || !(value_lr >= 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (value_steps < 0) throw ConfigError("value_steps must be >= 0");
  if (batch_episodes == 0) throw ConfigError("batch_episodes must be >= 1");
  if (!(clip > 0.0)) throw ConfigError("clip must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (ppo_epochs < 1) throw ConfigError("ppo_epochs must be >= 1");
  if (rotation_steps == 0) throw ConfigError("rotation_steps must be >= 1");
  if (order.empty()) throw ConfigError("objective order is empty");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  exploration.validate();
}

UpdateStats ppo_update(PolicyParams& params, RolloutBatch& batch, Head head,
                       const TrainConfig& config, AdamState& optimizer) {
  const auto& steps = batch.steps(head);
  if (steps.empty()) throw UsageError("ppo_update: batch has no steps for the active head");
  std::vector<double> adv = compute_returns(batch, config.gamma, params, head);

  Eigen::MatrixXd& w = head == Head::Confidence ? params.confidence_head : params.decision_head;
  Eigen::VectorXd& v = head == Head::Confidence ? params.value_h : params.value_d;
  const Eigen::MatrixXd w0 = w;
  const Eigen::VectorXd v0 = v;
  const AdamState opt0 = optimizer;

  UpdateStats stats;
  stats.samples = steps.size();
  const auto abort = [&] {
    w = w0;
    v = v0;
    optimizer = opt0;
    stats.aborted = true;
    return stats;
  };

  const AdamConfig adam{config.lr};
  Eigen::MatrixXd g;
  for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
    const double loss = ppo_loss(w, steps, adv, config.clip, &g);
    if (!std::isfinite(loss) || !g.allFinite()) return abort();
    if (epoch == 0) stats.loss = loss;
    adam_step(w.data(), g.data(), w.size(), optimizer, adam);
  }

  Eigen::VectorXd gv;
  for (int k = 0; k < config.value_steps; ++k) {
    const double loss = value_loss(v, steps, &gv);
    if (!std::isfinite(loss) || !gv.allFinite()) return abort();
    if (k == 0) stats.value_loss = loss;
    v -= config.value_lr * gv;
  }
  if (!w.allFinite() || !v.allFinite()) return abort();
  return stats;
}

std::vector<HypothesisTarget> build_hypothesis_targets(std::span<const EpisodeTrace> traces) {
  std::vector<HypothesisTarget> out;
  for (const auto& trace : traces) {
    for (const auto& step : trace.steps) out.push_back({step.state, trace.truth});
  }
  return out;
}

UpdateStats supervised_hypothesis_update(PolicyParams& params, const FeatureEncoder& encoder,
                                         std::span<const HypothesisTarget> targets, double lr) {
  if (targets.empty()) throw UsageError("supervised update without targets");
  std::vector<ClassTarget> data;
  data.reserve(targets.size());
  for (const auto& t : targets) {
    const auto label = encoder.catalog().class_index(t.truth);
    if (!label) throw ConfigError("unknown class '" + t.truth + "'");
    data.push_back({encoder.encode(t.state), *label});
  }
  UpdateStats stats;
  stats.samples = data.size();
  Eigen::MatrixXd g;
  stats.loss = class_loss(params.class_head, data, &g);
  if (!std::isfinite(stats.loss) || !g.allFinite()) {
    stats.aborted = true;
    return stats;
  }
  params.class_head -= lr * g;
  return stats;
}

Objective cyclic_schedule(std::uint64_t step, const TrainConfig& config) {
  if (step < config.warmup_steps) return Objective::Calibration;
  const std::uint64_t block = (step - config.warmup_steps) / config.rotation_steps;
  return config.order[block % config.order.size()];
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr const char* kCheckpointMagic = "dxloop-checkpoint";

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_block(std::ostream& out, const char* name, const Eigen::MatrixXd& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << g17(m(i, j));
    out << '\n';
  }
}

void write_block(std::ostream& out, const char* name, const Eigen::VectorXd& v) {
  out << "vector " << name << ' ' << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << g17(v[i]);
  out << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw ConfigError("checkpoint: unexpected end of input");
    return w;
  }
  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) throw ConfigError("checkpoint: expected '" + w + "', got '" + got + "'");
  }
  long long integer() {
    const std::string w = word();
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(w, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != w.size()) throw ConfigError("checkpoint: bad integer '" + w + "'");
    return v;
  }
  std::uint64_t unsigned_integer() {
    const std::string w = word();
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(w, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != w.size() || w.front() == '-') throw ConfigError("checkpoint: bad integer '" + w + "'");
    return v;
  }
  double real() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) throw ConfigError("checkpoint: bad number '" + w + "'");
    return v;
  }
  std::string rest_of_line() {
    std::string line;
    std::getline(in_, line);
    return line;
  }

  Eigen::MatrixXd matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    expect("matrix");
    expect(name);
    if (integer() != rows || integer() != cols) {
      throw ConfigError("checkpoint: shape mismatch for " + name);
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = real();
    return m;
  }
  Eigen::MatrixXd matrix(const std::string& name) {
    expect("matrix");
    expect(name);
    const long long rows = integer();
    const long long cols = integer();
    if (rows < 0 || cols < 0) throw ConfigError("checkpoint: negative shape for " + name);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = real();
    return m;
  }
  Eigen::VectorXd vector(const std::string& name) {
    expect("vector");
    expect(name);
    const long long n = integer();
    if (n < 0) throw ConfigError("checkpoint: negative size for " + name);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = real();
    return v;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const Checkpoint& cp, std::ostream& out) {
  out << kCheckpointMagic << '\n';
  out << "version " << Checkpoint::kFormatVersion << '\n';
  out << "step " << cp.step << '\n';
  out << "phase " << to_string(cp.phase) << '\n';
  out << "rng " << cp.rng.serialize() << '\n';
  write_block(out, "class_head", cp.params.class_head);
  write_block(out, "confidence_head", cp.params.confidence_head);
  write_block(out, "decision_head", cp.params.decision_head);
  write_block(out, "value_h", cp.params.value_h);
  write_block(out, "value_d", cp.params.value_d);
  out << "end\n";
}

Checkpoint load_checkpoint(std::istream& in) {
  Reader r(in);
  r.expect(kCheckpointMagic);
  r.expect("version");
  const long long version = r.integer();
  if (version != Checkpoint::kFormatVersion) {
    throw ConfigError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint cp;
  r.expect("step");
  cp.step = r.unsigned_integer();
  r.expect("phase");
  cp.phase = objective_from_string(r.word());
  r.expect("rng");
  try {
    cp.rng.deserialize(r.rest_of_line());
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  cp.params.class_head = r.matrix("class_head");
  cp.params.confidence_head = r.matrix("confidence_head");
  cp.params.decision_head = r.matrix("decision_head");
  cp.params.value_h = r.vector("value_h");
  cp.params.value_d = r.vector("value_d");
  r.expect("end");

  const auto& p = cp.params;
  const Eigen::Index dim = p.class_head.cols();
  const Eigen::Index classes = p.class_head.rows();
  if (p.decision_head.cols() != dim || p.confidence_head.cols() != dim + classes ||
      p.confidence_head.rows() != kNumConfidenceLevels || p.value_h.size() != dim + classes ||
      p.value_d.size() != dim) {
    throw ConfigError("checkpoint: inconsistent head shapes");
  }
  return cp;
}

void save_checkpoint_file(const Checkpoint& checkpoint, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  save_checkpoint(checkpoint, out);
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint '" + path + "'");
  return load_checkpoint(in);
}

std::string metric_history_csv(std::span<const MetricRow> rows) {
  std::string out = "step,objective,loss,mean_accuracy,ece,avg_tests\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%llu,%s,%.10g,%.10g,%.10g,%.10g\n",
                  static_cast<unsigned long long>(r.step), to_string(r.objective), r.loss,
                  r.mean_accuracy, r.ece, r.avg_tests);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------- loop

TrainResult train(const TrainConfig& config, const Environment& env, const Dataset& dataset,
                  const FeatureEncoder& encoder, const CalibrationRewardConfig& calibration,
                  const DecisionRewardConfig& decision, const EvalOptions& eval,
                  const TrainHooks& hooks, const std::optional<Checkpoint>& resume) {
  config.validate();
  calibration.validate();
  decision.validate();
  if (dataset.train.empty()) throw ConfigError("training split is empty");
  if (dataset.val.empty()) throw ConfigError("validation split is empty");

  PolicyParams params;
  Rng rng;
  std::uint64_t step = 0;
  if (resume) {
    params = resume->params;
    rng = resume->rng;
    step = resume->step;
  } else {
    Rng init_rng = Rng::derive(config.seed, 0);
    params = init_params(encoder, init_rng, config.init);
    rng = Rng::derive(config.seed, 1);
  }

  TrainResult result;
  result.best = Checkpoint{params, step, cyclic_schedule(step, config), rng};
  double best_accuracy = -std::numeric_limits<double>::infinity();
  double best_tests = std::numeric_limits<double>::infinity();
  std::uint64_t stale = 0;
  Optimizers opt;

  while (step < config.max_steps) {
    const Objective objective = cyclic_schedule(step, config);

    std::vector<PatientRecord> picks;
    picks.reserve(config.batch_episodes);
    for (std::size_t e = 0; e < config.batch_episodes; ++e) {
      picks.push_back(dataset.train[rng.uniform_index(dataset.train.size())]);
    }
    const std::uint64_t episode_seed = rng.next_u64();

    RolloutOptions ro;
    ro.calibration = calibration;
    ro.decision = decision;
    if (objective == Objective::Calibration) ro.explore_probability = config.exploration.probability(step);
    RolloutBatch batch =
        collect_rollouts(env, picks, params, encoder, config.batch_episodes, episode_seed, ro);

    UpdateStats stats;
    switch (objective) {
      case Objective::Calibration:
        stats = ppo_update(params, batch, Head::Confidence, config, opt.confidence);
        break;
      case Objective::Action:
        if (!batch.decision_steps.empty()) {
          stats = ppo_update(params, batch, Head::Decision, config, opt.decision);
        }
        break;
      case Objective::Hypothesis: {
        const auto targets = build_hypothesis_targets(batch.traces);
        stats = supervised_hypothesis_update(params, encoder, targets, config.supervised_lr);
        break;
      }
    }
    if (stats.aborted) ++result.aborted_updates;
    ++step;

    if (step % config.eval_every == 0 || step == config.max_steps) {
      const ParametricAgent greedy(params, encoder, ActMode::Greedy);
      const EvalResult ev = evaluate(env, dataset.val, greedy, greedy, decision, eval);
      MetricRow row{step, objective, stats.loss, ev.report.accuracy.mean,
                    ev.report.calibration.ece, ev.report.avg_tests};
      result.history.push_back(row);
      if (hooks.on_eval) hooks.on_eval(row);
      if (row.mean_accuracy > best_accuracy ||
          (row.mean_accuracy == best_accuracy && row.avg_tests < best_tests)) {
        best_accuracy = row.mean_accuracy;
        best_tests = row.avg_tests;
        result.best = Checkpoint{params, step, cyclic_schedule(step, config), rng};
        stale = 0;
      } else if (config.patience > 0 && ++stale >= config.patience) {
        break;
      }
    }
  }
  result.last = Checkpoint{params, step, cyclic_schedule(step, config), rng};
  if (result.history.empty()) result.best = result.last;
  return result;
}

}  // namespace dxloop
