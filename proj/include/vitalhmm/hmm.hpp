#pragma once

#include "vitalhmm/emission.hpp"
#include "vitalhmm/types.hpp"

#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace vitalhmm {

/// Floor applied to initial and transition probabilities before taking logs.
inline constexpr double kProbabilityFloor = 1e-10;

/// A hidden Markov model: initial distribution q, row-stochastic transition
/// matrix A (both stored as logs) and one emission density per state.
class HmmModel {
 public:
  HmmModel() = default;
  HmmModel(Vector log_initial, Matrix log_transition,
           std::vector<std::unique_ptr<EmissionModel>> emissions);

  /// Floors q and A at kProbabilityFloor, renormalizes, and takes logs.
  static HmmModel from_probabilities(const Vector& initial, const Matrix& transition,
                                     std::vector<std::unique_ptr<EmissionModel>> emissions);

  HmmModel(const HmmModel& other);
  HmmModel& operator=(const HmmModel& other);
  HmmModel(HmmModel&&) noexcept = default;
  HmmModel& operator=(HmmModel&&) noexcept = default;

  std::size_t states() const { return emissions_.size(); }
  std::size_t dim() const { return emissions_.empty() ? 0 : emissions_.front()->dim(); }
  const Vector& log_initial() const { return log_initial_; }
  const Matrix& log_transition() const { return log_transition_; }
  const EmissionModel& emission(std::size_t s) const { return *emissions_.at(s); }
  EmissionModel& emission(std::size_t s) { return *emissions_.at(s); }

  /// Replaces q and A (given as probabilities; floored and renormalized).
  void set_markov_probabilities(const Vector& initial, const Matrix& transition);

 private:
  void validate() const;

  Vector log_initial_;
  Matrix log_transition_;
  std::vector<std::unique_ptr<EmissionModel>> emissions_;
};

/// q uniform; A uniform plus U(0, 0.01) perturbation, row-normalized.
std::pair<Vector, Matrix> initial_markov_parameters(std::size_t n, Rng& rng);

/// T x n matrix of log p(x_t | s). Throws NumericalError naming (t, s) on a
/// non-finite value and ContractError on a dimension mismatch.
Matrix emission_log_densities(const HmmModel& model, const Sequence& seq);

double forward_loglik(const HmmModel& model, const Sequence& seq);

struct ForwardBackwardResult {
  Matrix log_alpha;  // T x n
  Matrix log_beta;   // T x n
  double log_likelihood = 0.0;
  Matrix gamma;      // T x n, p(s_t = i | x)
  Matrix xi_sum;     // n x n, sum_t p(s_t = i, s_t+1 = j | x)
};

ForwardBackwardResult forward_backward(const HmmModel& model, const Sequence& seq);

/// Forward-backward on precomputed log emissions.
ForwardBackwardResult forward_backward(const Vector& log_initial, const Matrix& log_transition,
                                       const Matrix& log_emissions);

struct BaumWelchConfig {
  int max_iters = 30;
  /// Stop when the total log-likelihood improves by less than this (nats).
  double tol = 1e-3;
  MStepConfig mstep;
  std::uint64_t seed = 0;
};

struct BaumWelchResult {
  HmmModel model;
  /// Total log-likelihood of every evaluated model, in order.
  std::vector<double> loglik_trace;
  int iterations = 0;
  std::vector<MStepReport> last_mstep;
};

BaumWelchResult baum_welch(HmmModel model, std::span<const Sequence> sequences,
                           const BaumWelchConfig& cfg);

/// Most likely state path; ties resolve to the lower state index.
std::vector<int> viterbi_decode(const HmmModel& model, const Sequence& seq);

/// Two class-conditional models plus class log-priors.
struct ClassifierPair {
  HmmModel model0;
  HmmModel model1;
  double log_prior0 = std::log(0.5);
  double log_prior1 = std::log(0.5);
};

struct Classification {
  int label = 0;
  double gap = 0.0;  // score(label 1) - score(label 0)
};

/// MAP decision; with `use_priors = false` both priors are treated as equal.
Classification classify(const ClassifierPair& pair, const Sequence& seq, bool use_priors = true);

/// Priors from class counts.
std::pair<double, double> log_priors_from_counts(std::size_t count0, std::size_t count1);

}  // namespace vitalhmm
