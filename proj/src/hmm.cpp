#include "vitalhmm/hmm.hpp"

#include "vitalhmm/errors.hpp"

#include <algorithm>
#include <string>

namespace vitalhmm {
namespace {

constexpr double kStochasticTolerance = 1e-9;

void check_sequence(const HmmModel& model, const Sequence& seq) {
  if (model.states() == 0) throw ContractError("HMM has no states");
  if (seq.rows() < 1) throw ContractError("sequence must contain at least one observation");
  if (static_cast<std::size_t>(seq.cols()) != model.dim()) {
    throw ContractError("sequence dimension " + std::to_string(seq.cols()) +
                        " does not match emission dimension " + std::to_string(model.dim()));
  }
}

Vector floored_normalized(Vector p) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p[i] >= kProbabilityFloor)) p[i] = kProbabilityFloor;
  }
  return p / p.sum();
}

}  // namespace

HmmModel::HmmModel(Vector log_initial, Matrix log_transition,
                   std::vector<std::unique_ptr<EmissionModel>> emissions)
    : log_initial_(std::move(log_initial)),
      log_transition_(std::move(log_transition)),
      emissions_(std::move(emissions)) {
  validate();
}

HmmModel HmmModel::from_probabilities(const Vector& initial, const Matrix& transition,
                                      std::vector<std::unique_ptr<EmissionModel>> emissions) {
  HmmModel model;
  model.emissions_ = std::move(emissions);
  model.set_markov_probabilities(initial, transition);
  return model;
}

HmmModel::HmmModel(const HmmModel& other)
    : log_initial_(other.log_initial_), log_transition_(other.log_transition_) {
  emissions_.reserve(other.emissions_.size());
  for (const auto& e : other.emissions_) emissions_.push_back(e->clone());
}

HmmModel& HmmModel::operator=(const HmmModel& other) {
  if (this != &other) {
    HmmModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void HmmModel::set_markov_probabilities(const Vector& initial, const Matrix& transition) {
  const auto n = static_cast<Eigen::Index>(emissions_.size());
  if (initial.size() != n || transition.rows() != n || transition.cols() != n) {
    throw ContractError("Markov parameters do not match the " + std::to_string(n) + " emissions");
  }
  log_initial_ = floored_normalized(initial).array().log();
  log_transition_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    log_transition_.row(i) = floored_normalized(transition.row(i).transpose()).array().log().transpose();
  }
  validate();
}

void HmmModel::validate() const {
  const auto n = static_cast<Eigen::Index>(emissions_.size());
  if (n < 1) throw ContractError("HMM needs at least one state");
  if (log_initial_.size() != n) throw ContractError("initial distribution has wrong length");
  if (log_transition_.rows() != n || log_transition_.cols() != n) {
    throw ContractError("transition matrix must be n x n");
  }
  for (const auto& e : emissions_) {
    if (!e) throw ContractError("null emission model");
    if (e->dim() != emissions_.front()->dim()) throw ContractError("emission dimensions differ");
  }
  if (std::abs(log_initial_.array().exp().sum() - 1.0) > kStochasticTolerance) {
    throw ContractError("initial distribution does not sum to 1");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(log_transition_.row(i).array().exp().sum() - 1.0) > kStochasticTolerance) {
      throw ContractError("transition row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

std::pair<Vector, Matrix> initial_markov_parameters(std::size_t n, Rng& rng) {
  const auto m = static_cast<Eigen::Index>(n);
  std::uniform_real_distribution<double> jitter(0.0, 0.01);
  Vector q = Vector::Constant(m, 1.0 / static_cast<double>(n));
  Matrix a(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) = 1.0 / static_cast<double>(n) + jitter(rng);
    a.row(i) /= a.row(i).sum();
  }
  return {q, a};
}

Matrix emission_log_densities(const HmmModel& model, const Sequence& seq) {
  check_sequence(model, seq);
  const auto n = static_cast<Eigen::Index>(model.states());
  Matrix out(seq.rows(), n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto& e = model.emission(static_cast<std::size_t>(s));
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
      const double v = e.log_density(row_span(seq, t));
      if (!std::isfinite(v)) {
        throw NumericalError("non-finite emission log-density at t=" + std::to_string(t) +
                             ", state=" + std::to_string(s));
      }
      out(t, s) = v;
    }
  }
  return out;
}

namespace {

// log_alpha via the max-shifted linear recursion; exact up to rounding because
// every transition probability is floored away from zero.
double forward_pass(const Vector& log_q, const Matrix& log_a, const Matrix& log_b,
                    Matrix& log_alpha) {
  const Eigen::Index T = log_b.rows();
  const Eigen::Index n = log_b.cols();
  const Matrix a = log_a.array().exp();
  log_alpha.resize(T, n);
  log_alpha.row(0) = (log_q + log_b.row(0).transpose()).transpose();
  Vector lin(n);
  for (Eigen::Index t = 1; t < T; ++t) {
    const double m = log_alpha.row(t - 1).maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) lin[i] = std::exp(log_alpha(t - 1, i) - m);
    for (Eigen::Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) s += lin[i] * a(i, j);
      log_alpha(t, j) = m + std::log(s) + log_b(t, j);
    }
  }
  const double m = log_alpha.row(T - 1).maxCoeff();
  return m + std::log((log_alpha.row(T - 1).array() - m).exp().sum());
}

}  // namespace

double forward_loglik(const HmmModel& model, const Sequence& seq) {
  const Matrix log_b = emission_log_densities(model, seq);
  Matrix log_alpha;
  return forward_pass(model.log_initial(), model.log_transition(), log_b, log_alpha);
}

ForwardBackwardResult forward_backward(const Vector& log_q, const Matrix& log_a,
                                       const Matrix& log_b) {
  const Eigen::Index T = log_b.rows();
  const Eigen::Index n = log_b.cols();
  if (T < 1 || log_q.size() != n || log_a.rows() != n || log_a.cols() != n) {
    throw ContractError("forward_backward: inconsistent shapes");
  }
  ForwardBackwardResult r;
  r.log_likelihood = forward_pass(log_q, log_a, log_b, r.log_alpha);
  if (!std::isfinite(r.log_likelihood)) throw NumericalError("non-finite sequence log-likelihood");

  const Matrix a = log_a.array().exp();
  r.log_beta.setZero(T, n);
  Vector v(n);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index j = 0; j < n; ++j) v[j] = log_b(t + 1, j) + r.log_beta(t + 1, j);
    const double m = v.maxCoeff();
    for (Eigen::Index j = 0; j < n; ++j) v[j] = std::exp(v[j] - m);
    for (Eigen::Index i = 0; i < n; ++i) r.log_beta(t, i) = m + std::log(a.row(i).dot(v));
  }

  r.gamma.resize(T, n);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) {
      r.gamma(t, i) = std::exp(r.log_alpha(t, i) + r.log_beta(t, i) - r.log_likelihood);
    }
    r.gamma.row(t) /= r.gamma.row(t).sum();
  }

  r.xi_sum.setZero(n, n);
  Matrix xi(n, n);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    for (Eigen::Index j = 0; j < n; ++j) v[j] = log_b(t + 1, j) + r.log_beta(t + 1, j);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        xi(i, j) = std::exp(r.log_alpha(t, i) + log_a(i, j) + v[j] - r.log_likelihood);
      }
    }
    r.xi_sum += xi / xi.sum();
  }
  return r;
}

ForwardBackwardResult forward_backward(const HmmModel& model, const Sequence& seq) {
  return forward_backward(model.log_initial(), model.log_transition(),
                          emission_log_densities(model, seq));
}

BaumWelchResult baum_welch(HmmModel model, std::span<const Sequence> sequences,
                           const BaumWelchConfig& cfg) {
  if (sequences.empty()) throw ContractError("baum_welch needs at least one sequence");
  for (const auto& s : sequences) {
    if (s.rows() < 1) throw ContractError("baum_welch: empty sequence");
  }
  const auto n = static_cast<Eigen::Index>(model.states());
  Rng rng(cfg.seed);
  BaumWelchResult result;

  std::vector<std::vector<Vector>> state_weights(
      static_cast<std::size_t>(n), std::vector<Vector>(sequences.size()));
  while (true) {
    double total = 0.0;
    Vector init_acc = Vector::Zero(n);
    Matrix trans_acc = Matrix::Zero(n, n);
    for (std::size_t k = 0; k < sequences.size(); ++k) {
      const auto fb = forward_backward(model, sequences[k]);
      total += fb.log_likelihood;
      init_acc += fb.gamma.row(0).transpose();
      trans_acc += fb.xi_sum;
      for (Eigen::Index s = 0; s < n; ++s) state_weights[static_cast<std::size_t>(s)][k] = fb.gamma.col(s);
    }
    const bool converged =
        !result.loglik_trace.empty() && total - result.loglik_trace.back() < cfg.tol;
    result.loglik_trace.push_back(total);
    if (converged || result.iterations >= cfg.max_iters) break;

    Matrix trans = trans_acc;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double row = trans.row(i).sum();
      if (row > 0.0) {
        trans.row(i) /= row;
      } else {
        trans.row(i).setConstant(1.0 / static_cast<double>(n));
      }
    }
    model.set_markov_probabilities(init_acc / init_acc.sum(), trans);

    result.last_mstep.assign(static_cast<std::size_t>(n), MStepReport{});
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto& w = state_weights[static_cast<std::size_t>(s)];
      double mass = 0.0;
      for (const auto& v : w) mass += v.sum();
      if (mass < 1e-12) continue;  // unvisited state keeps its emission
      result.last_mstep[static_cast<std::size_t>(s)] =
          model.emission(static_cast<std::size_t>(s)).m_step(sequences, w, cfg.mstep, rng);
    }
    ++result.iterations;
  }
  result.model = std::move(model);
  return result;
}

std::vector<int> viterbi_decode(const HmmModel& model, const Sequence& seq) {
  const Matrix log_b = emission_log_densities(model, seq);
  const Eigen::Index T = log_b.rows();
  const Eigen::Index n = log_b.cols();
  const Matrix& log_a = model.log_transition();
  Matrix delta(T, n);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> back(T, n);
  delta.row(0) = (model.log_initial() + log_b.row(0).transpose()).transpose();
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < n; ++j) {
      int best = 0;
      double best_v = delta(t - 1, 0) + log_a(0, j);
      for (Eigen::Index i = 1; i < n; ++i) {
        const double v = delta(t - 1, i) + log_a(i, j);
        if (v > best_v) {
          best_v = v;
          best = static_cast<int>(i);
        }
      }
      delta(t, j) = best_v + log_b(t, j);
      back(t, j) = best;
    }
  }
  std::vector<int> path(static_cast<std::size_t>(T));
  int state = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (delta(T - 1, i) > delta(T - 1, state)) state = static_cast<int>(i);
  }
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    path[static_cast<std::size_t>(t)] = state;
    if (t > 0) state = back(t, state);
  }
  return path;
}

Classification classify(const ClassifierPair& pair, const Sequence& seq, bool use_priors) {
  double s0 = forward_loglik(pair.model0, seq);
  double s1 = forward_loglik(pair.model1, seq);
  if (use_priors) {
    s0 += pair.log_prior0;
    s1 += pair.log_prior1;
  }
  return {s1 > s0 ? 1 : 0, s1 - s0};
}

std::pair<double, double> log_priors_from_counts(std::size_t count0, std::size_t count1) {
  if (count0 == 0 || count1 == 0) {
    throw ContractError("class priors need frames of both classes");
  }
  const double total = static_cast<double>(count0 + count1);
  return {std::log(static_cast<double>(count0) / total), std::log(static_cast<double>(count1) / total)};
}

}  // namespace vitalhmm
