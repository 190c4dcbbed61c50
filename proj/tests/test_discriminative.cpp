#include "test_support.hpp"

#include "vitalhmm/discriminative.hpp"
#include "vitalhmm/errors.hpp"
#include "vitalhmm/flow.hpp"

#include <gtest/gtest.h>

namespace vitalhmm {
namespace {

HmmModel random_flow_hmm(std::size_t n, std::size_t dim, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<std::unique_ptr<EmissionModel>> em;
  for (std::size_t s = 0; s < n; ++s) {
    FlowEmission f = flow_init(dim, 1, 2, seed * 31 + s);
    auto p = f.parameters();
    for (auto& v : p) v = u(rng);
    f.set_parameters(p);
    for (auto& layer : f.component(0).layers) {
      for (auto& b : layer.shift.b2) b += shift + static_cast<double>(s);
    }
    em.push_back(std::make_unique<FlowEmission>(std::move(f)));
  }
  auto [q, A] = initial_markov_parameters(n, rng);
  return HmmModel::from_probabilities(q, A, std::move(em));
}

std::vector<LabeledSequence> label_all(const std::vector<Sequence>& seqs, const std::vector<int>& labels) {
  std::vector<LabeledSequence> out;
  for (std::size_t i = 0; i < seqs.size(); ++i) out.push_back({&seqs[i], labels[i]});
  return out;
}

TEST(PosteriorObjective, IdenticalModelsGiveLogHalfPerSequence) {
  const HmmModel m = random_flow_hmm(2, 2, 1);
  const ClassifierPair pair{m, m, std::log(0.5), std::log(0.5)};
  Rng rng(2);
  std::vector<Sequence> seqs;
  for (int i = 0; i < 7; ++i) seqs.push_back(testing::normal_sequence(12, 2, rng));
  const auto batch = label_all(seqs, {0, 1, 1, 0, 1, 0, 0});
  EXPECT_NEAR(posterior_objective(pair, batch), 7.0 * std::log(0.5), 1e-12);
}

TEST(PosteriorObjective, MatchesDirectLinearDomainEvaluation) {
  Rng rng(3);
  const ClassifierPair pair{random_flow_hmm(2, 2, 4), random_flow_hmm(2, 2, 5, 0.5), std::log(0.3), std::log(0.7)};
  std::vector<Sequence> seqs{testing::normal_sequence(4, 2, rng), testing::normal_sequence(4, 2, rng)};
  const std::vector<int> labels{0, 1};

  auto likelihood = [](const HmmModel& m, const Sequence& x) {
    // sum over all state paths in extended precision
    const auto n = static_cast<int>(m.states());
    long double total = 0.0L;
    for (int code = 0; code < n * n * n * n; ++code) {
      int path[4], c = code;
      for (int t = 3; t >= 0; --t) {
        path[t] = c % n;
        c /= n;
      }
      long double p = std::exp(static_cast<long double>(m.log_initial()[path[0]]));
      for (int t = 0; t < 4; ++t) {
        if (t > 0) p *= std::exp(static_cast<long double>(m.log_transition()(path[t - 1], path[t])));
        p *= std::exp(static_cast<long double>(m.emission(static_cast<std::size_t>(path[t])).log_density(row_span(x, t))));
      }
      total += p;
    }
    return total;
  };
  long double expected = 0.0L;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const long double a0 = likelihood(pair.model0, seqs[i]) * 0.3L;
    const long double a1 = likelihood(pair.model1, seqs[i]) * 0.7L;
    expected += std::log((labels[i] == 1 ? a1 : a0) / (a0 + a1));
  }
  EXPECT_NEAR(posterior_objective(pair, label_all(seqs, labels)), static_cast<double>(expected), 1e-10);
}

TEST(PosteriorObjective, NeverPositive) {
  Rng rng(6);
  const ClassifierPair pair{random_flow_hmm(2, 2, 7), random_flow_hmm(2, 2, 8, 1.0), std::log(0.5), std::log(0.5)};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Sequence> seqs{testing::normal_sequence(8, 2, rng)};
    EXPECT_LE(posterior_objective(pair, label_all(seqs, {trial % 2})), 0.0);
  }
}

TEST(PosteriorObjective, LogSigmoidIsStableForLargeGaps) {
  EXPECT_EQ(log_class_posterior(1e6, 0.0), -0.0);
  EXPECT_NEAR(log_class_posterior(0.0, 1e6), -1e6, 1e-6);
  EXPECT_NEAR(log_class_posterior(0.0, 0.0), std::log(0.5), 1e-16);
}

TEST(PosteriorGradient, MatchesFiniteDifferences) {
  Rng rng(9);
  const ClassifierPair pair{random_flow_hmm(2, 2, 10), random_flow_hmm(2, 2, 11, 0.5), std::log(0.4), std::log(0.6)};
  std::vector<Sequence> seqs{testing::normal_sequence(6, 2, rng), testing::normal_sequence(5, 2, rng)};
  const auto batch = label_all(seqs, {1, 0});
  const auto g = posterior_objective_gradient(pair, batch);
  EXPECT_NEAR(g.value, posterior_objective(pair, batch), 1e-12);

  const double h = 1e-5;
  for (int which = 0; which < 2; ++which) {
    ClassifierPair probe = pair;
    HmmModel& model = which == 0 ? probe.model0 : probe.model1;
    const auto& analytic = which == 0 ? g.grad0 : g.grad1;
    const auto p = flow_parameters(model);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto pp = p, pm = p;
      pp[i] += h;
      pm[i] -= h;
      set_flow_parameters(model, pp);
      const double fp = posterior_objective(probe, batch);
      set_flow_parameters(model, pm);
      const double fm = posterior_objective(probe, batch);
      const double fd = (fp - fm) / (2.0 * h);
      num += (analytic[i] - fd) * (analytic[i] - fd);
      den += fd * fd;
    }
    set_flow_parameters(model, p);
    EXPECT_LE(std::sqrt(num), 1e-5 * std::sqrt(den)) << "model " << which;
  }
}

TEST(Finetune, SmallStepDoesNotDecreaseBatchObjective) {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(100 + static_cast<std::uint64_t>(trial));
    const ClassifierPair pair{random_flow_hmm(2, 2, 200 + static_cast<std::uint64_t>(trial)),
                              random_flow_hmm(2, 2, 300 + static_cast<std::uint64_t>(trial), 0.3), std::log(0.5),
                              std::log(0.5)};
    std::vector<Sequence> seqs;
    for (int i = 0; i < 4; ++i) seqs.push_back(testing::normal_sequence(10, 2, rng));
    const auto batch = label_all(seqs, {0, 1, 0, 1});
    DiscriminativeConfig cfg;
    cfg.batch_size = batch.size();
    cfg.adam.step_size = 1e-4;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const double before = posterior_objective(pair, batch);
    const ClassifierPair after = discriminative_finetune(pair, batch, cfg);
    EXPECT_GE(posterior_objective(after, batch) - before, -1e-6) << "trial " << trial;
  }
}

TEST(Finetune, LeavesMarkovChainsAndPriorsUntouched) {
  Rng rng(12);
  const ClassifierPair pair{random_flow_hmm(3, 2, 13), random_flow_hmm(3, 2, 14, 0.4), std::log(0.35), std::log(0.65)};
  std::vector<Sequence> seqs;
  for (int i = 0; i < 10; ++i) seqs.push_back(testing::normal_sequence(15, 2, rng));
  DiscriminativeConfig cfg;
  cfg.batch_size = 3;
  cfg.adam.step_size = 1e-2;
  const ClassifierPair after = discriminative_finetune(pair, label_all(seqs, {0, 1, 0, 1, 1, 0, 0, 1, 0, 1}), cfg);
  EXPECT_EQ(after.log_prior0, pair.log_prior0);
  EXPECT_EQ(after.log_prior1, pair.log_prior1);
  EXPECT_EQ(after.model0.log_initial(), pair.model0.log_initial());
  EXPECT_EQ(after.model0.log_transition(), pair.model0.log_transition());
  EXPECT_EQ(after.model1.log_initial(), pair.model1.log_initial());
  EXPECT_EQ(after.model1.log_transition(), pair.model1.log_transition());
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(dynamic_cast<const FlowEmission&>(after.model0.emission(s)).log_mix_weights(),
              dynamic_cast<const FlowEmission&>(pair.model0.emission(s)).log_mix_weights());
  }
  EXPECT_NE(flow_parameters(after.model0), flow_parameters(pair.model0));
}

TEST(Finetune, ImprovesSeparableProblem) {
  Rng rng(15);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Sequence> seqs;
  std::vector<int> labels;
  for (int i = 0; i < 16; ++i) {
    const int y = i % 2;
    Sequence s(20, 2);
    for (auto& v : s.reshaped()) v = n(rng) + (y == 1 ? 0.8 : -0.8);
    seqs.push_back(s);
    labels.push_back(y);
  }
  const HmmModel m = random_flow_hmm(2, 2, 16);
  const ClassifierPair pair{m, m, std::log(0.5), std::log(0.5)};
  const auto data = label_all(seqs, labels);
  DiscriminativeConfig cfg;
  cfg.adam.step_size = 1e-2;
  cfg.batch_size = 4;
  const double before = posterior_objective(pair, data);
  const ClassifierPair after = discriminative_finetune(pair, data, cfg);
  EXPECT_GT(posterior_objective(after, data), before);
}

TEST(Finetune, AllBatchesSkippedIsTrainingError) {
  const HmmModel m = random_flow_hmm(2, 2, 17);
  const ClassifierPair pair{m, m, std::log(0.5), std::log(0.5)};
  std::vector<Sequence> seqs{Sequence::Constant(5, 2, std::numeric_limits<double>::quiet_NaN())};
  EXPECT_THROW(discriminative_finetune(pair, label_all(seqs, {1}), DiscriminativeConfig{}), TrainingError);
}

TEST(Finetune, RequiresFlowEmissions) {
  Rng rng(18);
  const HmmModel g = testing::random_gmm_hmm(2, 1, 2, rng);
  const ClassifierPair pair{g, g, std::log(0.5), std::log(0.5)};
  std::vector<Sequence> seqs{testing::normal_sequence(5, 2, rng)};
  EXPECT_THROW(discriminative_finetune(pair, label_all(seqs, {0}), DiscriminativeConfig{}), ContractError);
}

}  // namespace
}  // namespace vitalhmm
