#pragma once

#include "vitalhmm/hmm.hpp"
#include "vitalhmm/optim.hpp"

#include <span>
#include <vector>

namespace vitalhmm {

struct DiscriminativeConfig {
  int epochs = 1;
  std::size_t batch_size = 8;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

struct LabeledSequence {
  const Sequence* sequence = nullptr;
  int label = 0;
};

/// log p(H_y | x) for one sequence given the two class scores
/// (log-likelihood + log prior); always <= 0.
double log_class_posterior(double score_true, double score_other);

/// Sum over the batch of log p(H_y | x) = score_y - logsumexp_j score_j,
/// with score_j = forward log-likelihood under class j plus its log prior.
double posterior_objective(const ClassifierPair& pair, std::span<const LabeledSequence> batch);

struct ObjectiveGradient {
  double value = 0.0;
  std::vector<double> grad0;  // w.r.t. flow_parameters(pair.model0)
  std::vector<double> grad1;
};

/// Objective and its gradient w.r.t. the flow parameters of both models. The
/// gradient of a sequence log-likelihood w.r.t. the emission log-densities is
/// the state posterior, so it is propagated through forward-backward.
ObjectiveGradient posterior_objective_gradient(const ClassifierPair& pair,
                                               std::span<const LabeledSequence> batch);

/// Flattened coupling-network parameters of every state (state order). Throws
/// ContractError unless all emissions are flows.
std::vector<double> flow_parameters(const HmmModel& model);
void set_flow_parameters(HmmModel& model, std::span<const double> values);

struct FinetuneReport {
  int batches_run = 0;
  int batches_skipped = 0;
  std::vector<double> batch_objectives;  // value before each applied step
};

/// Mini-batch ADAM ascent of the posterior objective over the flow parameters
/// of both class models jointly. Initial distributions, transition matrices,
/// mixture weights and class priors are left untouched.
ClassifierPair discriminative_finetune(ClassifierPair pair, std::span<const LabeledSequence> train,
                                       const DiscriminativeConfig& cfg,
                                       FinetuneReport* report = nullptr);

}  // namespace vitalhmm
