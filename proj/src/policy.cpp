// SPDX-License-Identifier: Apache-2.0
#include "dxloop/policy.hpp"

#include <cmath>
#include <limits>

#include "dxloop/synthetic.hpp"

namespace dxloop {

FeatureEncoder::FeatureEncoder(TestCatalog catalog, std::vector<std::size_t> findings_per_test)
    : catalog_(std::move(catalog)), findings_(std::move(findings_per_test)) {
  if (findings_.size() != catalog_.num_tests()) {
    throw ConfigError("finding vocabulary sizes must match the test catalog");
  }
  std::size_t offset = catalog_.num_tests();
  for (std::size_t f : findings_) {
    if (f == 0) throw ConfigError("empty finding vocabulary");
    finding_offsets_.push_back(offset);
    offset += f;
  }
  hypothesis_offset_ = offset;
  dim_ = offset + catalog_.num_classes() + 2;
}

FeatureEncoder FeatureEncoder::for_model(const TestCatalog& catalog, const GenerativeModel& model) {
  std::vector<std::size_t> sizes;
  for (const auto& t : model.tests) sizes.push_back(t.num_findings());
  return FeatureEncoder(catalog, std::move(sizes));
}

FeatureVector FeatureEncoder::encode(const ObservedState& state,
                                     const std::optional<HypothesisOutput>& hypothesis) const {
  FeatureVector x = FeatureVector::Zero(static_cast<Eigen::Index>(dim_));
  for (const auto& [name, result] : state.revealed) {
    const auto t = catalog_.test_index(name);
    if (!t) throw EncodingError("unknown test '" + name + "'");
    const auto f = decode_finding(result, name);
    if (!f || *f >= findings_[*t]) {
      throw EncodingError("result '" + result + "' outside the finding vocabulary");
    }
    x[static_cast<Eigen::Index>(indicator_offset(*t))] = 1.0;
    x[static_cast<Eigen::Index>(finding_offsets_[*t] + *f)] = 1.0;
  }
  if (hypothesis) {
    const auto cls = catalog_.class_index(hypothesis->hypothesis);
    if (!cls) throw EncodingError("unknown hypothesis '" + hypothesis->hypothesis + "'");
    x[static_cast<Eigen::Index>(hypothesis_offset_ + *cls)] = 1.0;
    x[static_cast<Eigen::Index>(confidence_offset())] = hypothesis->confidence;
  }
  x[static_cast<Eigen::Index>(bias_offset())] = 1.0;
  return x;
}

FeatureVector FeatureEncoder::confidence_input(const FeatureVector& state_features,
                                               std::size_t cls) const {
  FeatureVector x = FeatureVector::Zero(static_cast<Eigen::Index>(confidence_input_dim()));
  x.head(static_cast<Eigen::Index>(dim_)) = state_features;
  x[static_cast<Eigen::Index>(dim_ + cls)] = 1.0;
  return x;
}

EnvAction FeatureEncoder::action_for(std::size_t index) const {
  const std::size_t n_tests = catalog_.num_tests();
  if (index < n_tests) return RequestTest{catalog_.tests()[index]};
  if (index < n_tests + catalog_.num_classes()) return Diagnose{catalog_.classes()[index - n_tests]};
  return Malformed{"reserved invalid action"};
}

std::optional<std::size_t> FeatureEncoder::index_of(const EnvAction& action) const {
  if (const auto* r = std::get_if<RequestTest>(&action)) return catalog_.test_index(r->name);
  if (const auto* d = std::get_if<Diagnose>(&action)) {
    if (auto k = catalog_.class_index(d->label)) return catalog_.num_tests() + *k;
    return std::nullopt;
  }
  return invalid_action();
}

std::vector<bool> FeatureEncoder::action_mask(const ObservedState& state) const {
  std::vector<bool> mask(num_actions(), true);
  for (std::size_t t = 0; t < catalog_.num_tests(); ++t) {
    if (state.requested.contains(catalog_.tests()[t])) mask[t] = false;
  }
  return mask;
}

bool PolicyParams::all_finite() const {
  return class_head.allFinite() && confidence_head.allFinite() && decision_head.allFinite() &&
         value_h.allFinite() && value_d.allFinite();
}

bool operator==(const PolicyParams& a, const PolicyParams& b) {
  const auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.class_head, b.class_head) && same(a.confidence_head, b.confidence_head) &&
         same(a.decision_head, b.decision_head) && same(a.value_h, b.value_h) &&
         same(a.value_d, b.value_d);
}

PolicyParams init_params(const FeatureEncoder& encoder, Rng& rng, const InitOptions& options) {
  const auto dim = static_cast<Eigen::Index>(encoder.dim());
  const auto n_classes = static_cast<Eigen::Index>(encoder.catalog().num_classes());
  const auto fill = [&](Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = options.scale * rng.normal();
  };
  PolicyParams p;
  fill(p.class_head, n_classes, dim);
  fill(p.confidence_head, kNumConfidenceLevels, dim + n_classes);
  fill(p.decision_head, static_cast<Eigen::Index>(encoder.num_actions()), dim);
  p.value_h = Eigen::VectorXd::Zero(dim + n_classes);
  p.value_d = Eigen::VectorXd::Zero(dim);
  if (options.confidence_level) {
    const int level = *options.confidence_level;
    if (level < 0 || level > kMaxConfidenceLevel) throw ConfigError("init confidence level out of range");
    p.confidence_head(level, static_cast<Eigen::Index>(encoder.bias_offset())) += options.confidence_bias;
  }
  return p;
}

Eigen::MatrixXd naive_bayes_class_head(const FeatureEncoder& encoder, const GenerativeModel& model,
                                       double sharpness) {
  const auto& catalog = encoder.catalog();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(catalog.num_classes()),
                                            static_cast<Eigen::Index>(encoder.dim()));
  constexpr double kFloor = 1e-12;
  for (std::size_t k = 0; k < catalog.num_classes(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    w(row, static_cast<Eigen::Index>(encoder.bias_offset())) =
        sharpness * std::log(std::max(model.priors[k], kFloor));
    for (std::size_t t = 0; t < catalog.num_tests(); ++t) {
      for (std::size_t f = 0; f < encoder.findings_per_test()[t]; ++f) {
        w(row, static_cast<Eigen::Index>(encoder.finding_offset(t) + f)) =
            sharpness * std::log(std::max(model.tests[t].outcome[k][f], kFloor));
      }
    }
  }
  return w;
}

Eigen::VectorXd masked_log_softmax(const Eigen::VectorXd& logits, const std::vector<bool>& mask) {
  const auto allowed = [&](Eigen::Index i) {
    return mask.empty() || mask[static_cast<std::size_t>(i)];
  };
  double max = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (allowed(i)) max = std::max(max, logits[i]);
  if (!std::isfinite(max)) throw UsageError("masked softmax with no allowed finite entry");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (allowed(i)) sum += std::exp(logits[i] - max);
  const double log_z = max + std::log(sum);
  Eigen::VectorXd out(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    out[i] = allowed(i) ? logits[i] - log_z : -std::numeric_limits<double>::infinity();
  }
  return out;
}

std::size_t argmax(const Eigen::VectorXd& values, const std::vector<bool>& mask) {
  std::optional<Eigen::Index> best;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
    if (!best || values[i] > values[*best]) best = i;
  }
  if (!best) throw UsageError("argmax over an empty selection");
  return static_cast<std::size_t>(*best);
}

Sampled sample_softmax(const Eigen::VectorXd& logits, Rng& rng, const std::vector<bool>& mask) {
  const Eigen::VectorXd logp = masked_log_softmax(logits, mask);
  std::vector<double> probs(static_cast<std::size_t>(logp.size()));
  for (Eigen::Index i = 0; i < logp.size(); ++i) probs[static_cast<std::size_t>(i)] = std::exp(logp[i]);
  const std::size_t idx = rng.categorical(probs);
  return {idx, logp[static_cast<Eigen::Index>(idx)]};
}

}  // namespace dxloop
