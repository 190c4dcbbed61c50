#include "test_support.hpp"

#include "vitalhmm/errors.hpp"
#include "vitalhmm/gmm.hpp"

#include <gtest/gtest.h>

namespace vitalhmm {
namespace {

TEST(Gmm, LogDensityMatchesDirectMixture) {
  const Matrix mu{{0.0, 1.0}, {2.0, -1.0}};
  const Matrix var{{1.0, 0.5}, {2.0, 0.25}};
  const GmmEmission g(Vector{{0.3, 0.7}}, mu, var);
  const std::vector<double> x{0.4, -0.2};
  double p = 0.0;
  const double w[2] = {0.3, 0.7};
  for (int k = 0; k < 2; ++k) {
    p += w[k] * std::exp(testing::gaussian_logpdf(x[0], mu(k, 0), var(k, 0)) +
                         testing::gaussian_logpdf(x[1], mu(k, 1), var(k, 1)));
  }
  EXPECT_NEAR(g.log_density(x), std::log(p), 1e-13);
}

TEST(Gmm, SingleComponentUpdateIsWeightedMoments) {
  Rng rng(1);
  const Sequence x = testing::normal_sequence(60, 2, rng);
  Vector w(60);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : w) v = u(rng);
  const GmmEmission g(Vector::Ones(1), Matrix::Zero(1, 2), Matrix::Ones(1, 2));
  const GmmEmission out = gmm_mstep(g, x, w);
  const Eigen::RowVectorXd mean = (w.asDiagonal() * x).colwise().sum() / w.sum();
  Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(2);
  for (Eigen::Index t = 0; t < 60; ++t) var += w[t] * (x.row(t) - mean).cwiseAbs2();
  var /= w.sum();
  EXPECT_LT((out.means().row(0) - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.variances().row(0) - var).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gmm, EmUpdateDoesNotDecreaseWeightedLikelihood) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Sequence x = testing::normal_sequence(200, 3, rng, 2.0);
    Vector w = Vector::Ones(200);
    std::vector<Sequence> seqs{x};
    std::vector<Vector> ws{w};
    GmmEmission g = gmm_init(seqs, 3, 1, 10 + static_cast<std::uint64_t>(trial)).front();
    double prev = weighted_loglik(g, seqs, ws);
    for (int it = 0; it < 10; ++it) {
      g = gmm_mstep(g, seqs, ws);
      const double now = weighted_loglik(g, seqs, ws);
      EXPECT_GE(now - prev, -1e-9);
      prev = now;
    }
  }
}

TEST(Gmm, ConstantDataHitsVarianceFloor) {
  const Sequence x = Sequence::Constant(20, 2, 3.0);
  const GmmEmission g(Vector::Ones(1), Matrix::Zero(1, 2), Matrix::Ones(1, 2));
  const GmmEmission out = gmm_mstep(g, x, Vector::Ones(20));
  EXPECT_EQ(out.variances().minCoeff(), GmmEmission::kVarianceFloor);
  EXPECT_TRUE(std::isfinite(out.log_density(std::vector<double>{3.0, 3.0})));
}

TEST(Gmm, VanishedComponentKeepsParameters) {
  // component 1 sits so far away that it receives no responsibility
  const Matrix mu{{0.0}, {1e6}};
  const Matrix var{{1.0}, {1.0}};
  const GmmEmission g(Vector{{0.5, 0.5}}, mu, var);
  Rng rng(3);
  const Sequence x = testing::normal_sequence(50, 1, rng);
  const GmmEmission out = gmm_mstep(g, x, Vector::Ones(50));
  EXPECT_EQ(out.means()(1, 0), 1e6);
  EXPECT_EQ(out.variances()(1, 0), 1.0);
  EXPECT_NEAR(std::exp(out.log_weights()[1]), GmmEmission::kWeightFloor, 1e-16);
}

TEST(Gmm, ZeroWeightsAreRejected) {
  const GmmEmission g(Vector::Ones(1), Matrix::Zero(1, 1), Matrix::Ones(1, 1));
  EXPECT_THROW(gmm_mstep(g, Sequence::Zero(5, 1), Vector::Zero(5)), ContractError);
}

TEST(Gmm, SamplesHaveComponentMoments) {
  const GmmEmission g(Vector::Ones(1), Matrix{{2.0, -1.0}}, Matrix{{4.0, 0.25}});
  Rng rng(4);
  const int n = 40000;
  Eigen::RowVector2d sum = Eigen::RowVector2d::Zero(), sq = Eigen::RowVector2d::Zero();
  for (int i = 0; i < n; ++i) {
    double x[2];
    g.sample(rng, x);
    sum += Eigen::RowVector2d(x[0], x[1]);
    sq += Eigen::RowVector2d(x[0] * x[0], x[1] * x[1]);
  }
  const Eigen::RowVector2d mean = sum / n;
  const Eigen::RowVector2d var = sq / n - mean.cwiseAbs2();
  EXPECT_NEAR(mean[0], 2.0, 0.05);
  EXPECT_NEAR(mean[1], -1.0, 0.02);
  EXPECT_NEAR(var[0], 4.0, 0.15);
  EXPECT_NEAR(var[1], 0.25, 0.01);
}

TEST(Gmm, JsonRoundTripIsExact) {
  const GmmEmission g(Vector{{0.2, 0.8}}, Matrix{{0.1, 0.2}, {0.3, 0.4}}, Matrix{{1.5, 2.5}, {0.5, 0.7}});
  const GmmEmission back = GmmEmission::from_json(nlohmann::json::parse(g.to_json().dump()));
  const std::vector<double> x{0.3, -0.4};
  EXPECT_EQ(g.log_density(x), back.log_density(x));
}

TEST(KMeans, DeterministicAndSeparatesClusters) {
  RowMatrix pts(200, 2);
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 0.1);
  for (Eigen::Index i = 0; i < 200; ++i) {
    const double c = i < 100 ? -5.0 : 5.0;
    pts(i, 0) = c + n(rng);
    pts(i, 1) = n(rng);
  }
  Rng a(9), b(9);
  const RowMatrix ca = kmeans(pts, 2, a);
  const RowMatrix cb = kmeans(pts, 2, b);
  EXPECT_EQ(ca, cb);
  EXPECT_NEAR(std::abs(ca(0, 0) - ca(1, 0)), 10.0, 0.1);
}

TEST(KMeans, TooFewPointsIsInitError) {
  Rng rng(6);
  EXPECT_THROW(kmeans(RowMatrix::Zero(2, 1), 3, rng), InitError);
  std::vector<Sequence> tiny{Sequence::Zero(4, 1)};
  EXPECT_THROW(gmm_init(tiny, 2, 3, 0), InitError);
}

TEST(GmmInit, OneEmissionPerStateWithKComponents) {
  Rng rng(7);
  std::vector<Sequence> data{testing::normal_sequence(300, 3, rng)};
  const auto em = gmm_init(data, 4, 3, 1);
  ASSERT_EQ(em.size(), 3u);
  for (const auto& e : em) {
    EXPECT_EQ(e.components(), 4u);
    EXPECT_EQ(e.dim(), 3u);
  }
}

}  // namespace
}  // namespace vitalhmm
