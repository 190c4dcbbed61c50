#include "vitalhmm/baselines.hpp"
#include "vitalhmm/errors.hpp"

#include <gtest/gtest.h>

namespace vitalhmm {
namespace {

struct Problem {
  Matrix X;
  std::vector<int> y;
};

Problem noisy_problem(int B, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Problem p{Matrix(B, d), {}};
  Vector w(d);
  for (auto& v : w) v = n(rng);
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < d; ++j) p.X(i, j) = n(rng);
    p.y.push_back(p.X.row(i).dot(w) + 1.5 * n(rng) > 0.0 ? 1 : 0);
  }
  return p;
}

TEST(Logreg, GradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 10; ++trial) {
    const Problem p = noisy_problem(40, 5, static_cast<std::uint64_t>(trial));
    Rng rng(50 + static_cast<std::uint64_t>(trial));
    std::normal_distribution<double> n(0.0, 0.5);
    Vector w(5);
    for (auto& v : w) v = n(rng);
    const double b = n(rng);
    const double lambda = 0.3;
    const Vector g = logreg_gradient(p.X, p.y, lambda, w, b);
    const double h = 1e-6;
    for (int i = 0; i <= 5; ++i) {
      Vector wp = w, wm = w;
      double bp = b, bm = b;
      if (i < 5) {
        wp[i] += h;
        wm[i] -= h;
      } else {
        bp += h;
        bm -= h;
      }
      const double fd = (logreg_objective(p.X, p.y, lambda, wp, bp) - logreg_objective(p.X, p.y, lambda, wm, bm)) / (2 * h);
      EXPECT_NEAR(g[i], fd, 1e-6) << "coordinate " << i;
    }
  }
}

TEST(Logreg, ConvexFitIsInitIndependent) {
  const Problem p = noisy_problem(80, 4, 7);
  Vector init(5);
  init << 3.0, -2.0, 1.0, 0.5, -4.0;
  const auto a = logreg_fit(p.X, p.y, 0.05, 1e-10);
  const auto b = logreg_fit(p.X, p.y, 0.05, 1e-10, &init);
  EXPECT_LT((a.weights - b.weights).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(a.bias, b.bias, 1e-6);
  EXPECT_LE(logreg_gradient(p.X, p.y, 0.05, a.weights, a.bias).norm(), 1e-10);
}

TEST(Logreg, HugePenaltyShrinksWeights) {
  const Problem p = noisy_problem(60, 3, 8);
  const auto m = logreg_fit(p.X, p.y, 1e9);
  EXPECT_LE(m.weights.norm(), 1e-3);
  const double frac = static_cast<double>(std::count(p.y.begin(), p.y.end(), 1)) / 60.0;
  EXPECT_NEAR(1.0 / (1.0 + std::exp(-m.bias)), frac, 1e-6);
}

TEST(Baselines, SingleClassIsFitError) {
  Matrix X = Matrix::Random(5, 2);
  std::vector<int> y(5, 1);
  EXPECT_THROW(logreg_fit(X, y, 1.0), FitError);
  EXPECT_THROW(elm_fit(X, y, 4, 1.0, 0), FitError);
}

TEST(Logreg, CrossValidationPicksFromGridAndBreaksTiesUpward) {
  // all-identical rows: every lambda predicts the same, so the largest wins
  Matrix X = Matrix::Ones(12, 2);
  std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 0};
  const auto grid = decade_grid();
  ASSERT_EQ(grid.size(), 11u);
  EXPECT_EQ(grid.front(), 1e-5);
  EXPECT_EQ(grid.back(), 1e5);
  const auto r = logreg_cv_grid(X, y, grid, 3, 1);
  EXPECT_EQ(r.chosen_lambda, 1e5);
  EXPECT_EQ(r.cv_accuracy.size(), 11u);

  const Problem p = noisy_problem(90, 3, 9);
  const auto a = logreg_cv_grid(p.X, p.y, grid, 3, 4);
  const auto b = logreg_cv_grid(p.X, p.y, grid, 3, 4);
  EXPECT_EQ(a.chosen_lambda, b.chosen_lambda);
  EXPECT_EQ(a.model.weights, b.model.weights);
  EXPECT_THROW(logreg_cv_grid(p.X.topRows(2), std::vector<int>(p.y.begin(), p.y.begin() + 2), grid, 3, 4), FitError);
}

TEST(Elm, InterpolatesWhenHiddenWidthExceedsSamples) {
  const Problem p = noisy_problem(50, 6, 10);
  const ElmModel m = elm_fit(p.X, p.y, 100, 1e-10, 3);
  std::vector<int> pred;
  for (Eigen::Index i = 0; i < p.X.rows(); ++i) pred.push_back(m.predict(p.X.row(i).transpose()));
  EXPECT_EQ(accuracy(pred, p.y), 1.0);
}

TEST(Elm, HugeRidgeGivesConstantPrediction) {
  const Problem p = noisy_problem(50, 6, 11);
  const ElmModel m = elm_fit(p.X, p.y, 30, 1e9, 3);
  EXPECT_LT(m.readout.norm(), 1e-6);
  const double frac = static_cast<double>(std::count(p.y.begin(), p.y.end(), 1)) / 50.0;
  EXPECT_NEAR(m.readout_bias, frac, 1e-6);
}

TEST(Elm, ReadoutSolvesRidgeNormalEquations) {
  for (int B : {40, 150}) {
    const Problem p = noisy_problem(B, 4, 12);
    const double ridge = 0.5;
    const ElmModel m = elm_fit(p.X, p.y, 60, ridge, 5);
    const Matrix H = m.hidden_activations(p.X);
    const Eigen::RowVectorXd mean = H.colwise().mean();
    const Matrix Hc = H.rowwise() - mean;
    Vector t(B);
    for (int i = 0; i < B; ++i) t[i] = p.y[static_cast<std::size_t>(i)];
    const Vector tc = t.array() - t.mean();
    const Vector residual = (Hc.transpose() * Hc + ridge * Matrix::Identity(60, 60)) * m.readout - Hc.transpose() * tc;
    EXPECT_LE(residual.cwiseAbs().maxCoeff(), 1e-8) << "B = " << B;
  }
}

TEST(Elm, HiddenLayerIsUniformInUnitBox) {
  const Problem p = noisy_problem(20, 3, 13);
  const ElmModel m = elm_fit(p.X, p.y, 200, 1e-3, 6);
  EXPECT_LE(m.hidden_weights.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_LE(m.hidden_bias.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_NEAR(m.hidden_weights.mean(), 0.0, 0.05);
  const ElmModel again = elm_fit(p.X, p.y, 200, 1e-3, 6);
  EXPECT_EQ(again.hidden_weights, m.hidden_weights);
}

TEST(Baselines, JsonRoundTrip) {
  const Problem p = noisy_problem(30, 3, 14);
  const auto lr = logreg_fit(p.X, p.y, 0.1);
  const auto lr2 = logistic_from_json(nlohmann::json::parse(to_json(lr).dump()));
  EXPECT_EQ(lr2.weights, lr.weights);
  EXPECT_EQ(lr2.bias, lr.bias);
  const auto elm = elm_fit(p.X, p.y, 10, 0.1, 1);
  const auto elm2 = elm_from_json(nlohmann::json::parse(to_json(elm).dump()));
  EXPECT_EQ(elm2.hidden_weights, elm.hidden_weights);
  EXPECT_EQ(elm2.readout, elm.readout);
  EXPECT_EQ(to_json(elm)["format"], "baseline-v1");
  EXPECT_THROW(elm_from_json(to_json(lr)), ContractError);
}

}  // namespace
}  // namespace vitalhmm
