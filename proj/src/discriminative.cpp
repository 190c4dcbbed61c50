#include "vitalhmm/discriminative.hpp"

#include "vitalhmm/errors.hpp"
#include "vitalhmm/flow.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

namespace vitalhmm {
namespace {

const FlowEmission& as_flow(const HmmModel& model, std::size_t s) {
  const auto* f = dynamic_cast<const FlowEmission*>(&model.emission(s));
  if (!f) throw ContractError("discriminative training requires flow emissions in every state");
  return *f;
}

FlowEmission& as_flow(HmmModel& model, std::size_t s) {
  auto* f = dynamic_cast<FlowEmission*>(&model.emission(s));
  if (!f) throw ContractError("discriminative training requires flow emissions in every state");
  return *f;
}

void check_batch(std::span<const LabeledSequence> batch) {
  for (const auto& item : batch) {
    if (!item.sequence) throw ContractError("null sequence in batch");
    if (item.label != 0 && item.label != 1) throw ContractError("labels must be 0 or 1");
  }
}

// Adds coeff * d loglik(model, seq) / d(flow parameters) into grad.
void accumulate_loglik_gradient(const HmmModel& model, const Sequence& seq,
                                const ForwardBackwardResult& fb, double coeff,
                                std::span<double> grad) {
  std::size_t offset = 0;
  for (std::size_t s = 0; s < model.states(); ++s) {
    const auto& flow = as_flow(model, s);
    const std::size_t count = flow.parameter_count();
    auto g = grad.subspan(offset, count);
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
      const double w = coeff * fb.gamma(t, static_cast<Eigen::Index>(s));
      if (w != 0.0) flow.log_density_gradient(row_span(seq, t), w, g);
    }
    offset += count;
  }
}

}  // namespace

double log_class_posterior(double score_true, double score_other) {
  // log sigmoid(d), d = score_true - score_other
  const double d = score_true - score_other;
  return d >= 0.0 ? -std::log1p(std::exp(-d)) : d - std::log1p(std::exp(d));
}

double posterior_objective(const ClassifierPair& pair, std::span<const LabeledSequence> batch) {
  check_batch(batch);
  double total = 0.0;
  for (const auto& item : batch) {
    const double s0 = forward_loglik(pair.model0, *item.sequence) + pair.log_prior0;
    const double s1 = forward_loglik(pair.model1, *item.sequence) + pair.log_prior1;
    total += item.label == 1 ? log_class_posterior(s1, s0) : log_class_posterior(s0, s1);
  }
  return total;
}

ObjectiveGradient posterior_objective_gradient(const ClassifierPair& pair,
                                               std::span<const LabeledSequence> batch) {
  check_batch(batch);
  ObjectiveGradient out;
  out.grad0.assign(flow_parameters(pair.model0).size(), 0.0);
  out.grad1.assign(flow_parameters(pair.model1).size(), 0.0);
  for (const auto& item : batch) {
    const Sequence& seq = *item.sequence;
    const auto fb0 = forward_backward(pair.model0, seq);
    const auto fb1 = forward_backward(pair.model1, seq);
    const double s0 = fb0.log_likelihood + pair.log_prior0;
    const double s1 = fb1.log_likelihood + pair.log_prior1;
    out.value += item.label == 1 ? log_class_posterior(s1, s0) : log_class_posterior(s0, s1);
    // d/d loglik_j of log p(H_y | x) = [y == j] - p(H_j | x)
    const double post1 = std::exp(log_class_posterior(s1, s0));
    const double post0 = std::exp(log_class_posterior(s0, s1));
    const double c0 = (item.label == 0 ? 1.0 : 0.0) - post0;
    const double c1 = (item.label == 1 ? 1.0 : 0.0) - post1;
    if (c0 != 0.0) accumulate_loglik_gradient(pair.model0, seq, fb0, c0, out.grad0);
    if (c1 != 0.0) accumulate_loglik_gradient(pair.model1, seq, fb1, c1, out.grad1);
  }
  return out;
}

std::vector<double> flow_parameters(const HmmModel& model) {
  std::vector<double> out;
  for (std::size_t s = 0; s < model.states(); ++s) {
    const auto p = as_flow(model, s).parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void set_flow_parameters(HmmModel& model, std::span<const double> values) {
  std::size_t offset = 0;
  for (std::size_t s = 0; s < model.states(); ++s) {
    auto& flow = as_flow(model, s);
    const std::size_t count = flow.parameter_count();
    if (offset + count > values.size()) throw ContractError("flow parameter vector too short");
    flow.set_parameters(values.subspan(offset, count));
    offset += count;
  }
  if (offset != values.size()) throw ContractError("flow parameter vector too long");
}

ClassifierPair discriminative_finetune(ClassifierPair pair, std::span<const LabeledSequence> train,
                                       const DiscriminativeConfig& cfg, FinetuneReport* report) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ContractError("epochs and batch size must be >= 1");
  if (train.empty()) throw ContractError("discriminative_finetune needs training sequences");
  check_batch(train);

  std::vector<double> p0 = flow_parameters(pair.model0);
  std::vector<double> p1 = flow_parameters(pair.model1);
  AdamState st0(p0.size()), st1(p1.size());
  FinetuneReport rep;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<LabeledSequence> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        batch.push_back(train[order[k]]);
      }
      ObjectiveGradient g;
      try {
        g = posterior_objective_gradient(pair, batch);
      } catch (const NumericalError& e) {
        ++rep.batches_skipped;
        std::cerr << "discriminative: skipping batch: " << e.what() << '\n';
        continue;
      }
      auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
      };
      if (!std::isfinite(g.value) || !finite(g.grad0) || !finite(g.grad1)) {
        ++rep.batches_skipped;
        std::cerr << "discriminative: skipping batch with non-finite gradient\n";
        continue;
      }
      adam_step(st0, p0, g.grad0, cfg.adam);
      adam_step(st1, p1, g.grad1, cfg.adam);
      set_flow_parameters(pair.model0, p0);
      set_flow_parameters(pair.model1, p1);
      rep.batch_objectives.push_back(g.value);
      ++rep.batches_run;
    }
  }
  if (rep.batches_run == 0) throw TrainingError("discriminative_finetune: every batch was skipped");
  if (report) *report = std::move(rep);
  return pair;
}

}  // namespace vitalhmm
