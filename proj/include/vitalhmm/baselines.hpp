#pragma once

#include "vitalhmm/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace vitalhmm {

inline constexpr const char* kBaselineFormatTag = "baseline-v1";

struct LogisticModel {
  Vector weights;
  double bias = 0.0;
  double lambda = 0.0;

  double probability(const Eigen::Ref<const Vector>& x) const;
  int predict(const Eigen::Ref<const Vector>& x) const { return probability(x) > 0.5 ? 1 : 0; }
};

/// Mean cross-entropy + (lambda / 2) * |w|^2; the bias is not penalized.
double logreg_objective(const Matrix& X, std::span<const int> y, double lambda, const Vector& w, double b);

/// Gradient of logreg_objective; the last entry is the bias component.
Vector logreg_gradient(const Matrix& X, std::span<const int> y, double lambda, const Vector& w, double b);

/// Damped Newton iterations until the gradient norm is at most `tol`.
/// `init` (length d + 1, bias last) defaults to zeros.
LogisticModel logreg_fit(const Matrix& X, std::span<const int> y, double lambda, double tol = 1e-8,
                         const Vector* init = nullptr);

/// Decades 10^lo ... 10^hi.
std::vector<double> decade_grid(int lo = -5, int hi = 5);

struct GridSearchResult {
  LogisticModel model;  // refit on all data with the chosen lambda
  std::vector<double> lambdas;
  std::vector<double> cv_accuracy;
  double chosen_lambda = 0.0;
};

/// Stratified k-fold accuracy per lambda; the best lambda (ties -> larger)
/// is refit on all the data.
GridSearchResult logreg_cv_grid(const Matrix& X, std::span<const int> y, std::span<const double> grid,
                                int folds, std::uint64_t seed, double tol = 1e-8);

/// Extreme learning machine: frozen random sigmoid hidden layer and a
/// ridge-regression linear readout against 0/1 targets.
struct ElmModel {
  Matrix hidden_weights;  // h x d
  Vector hidden_bias;     // h
  Vector readout;         // h
  double readout_bias = 0.0;
  double ridge = 0.0;

  Matrix hidden_activations(const Matrix& X) const;  // B x h
  double score(const Eigen::Ref<const Vector>& x) const;
  int predict(const Eigen::Ref<const Vector>& x) const { return score(x) > 0.5 ? 1 : 0; }
};

/// Hidden parameters U(-1, 1). The readout bias is unpenalized (both the
/// activations and targets are centered before the ridge solve).
ElmModel elm_fit(const Matrix& X, std::span<const int> y, std::size_t hidden, double ridge,
                 std::uint64_t seed);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

nlohmann::json to_json(const LogisticModel& m);
nlohmann::json to_json(const ElmModel& m);
LogisticModel logistic_from_json(const nlohmann::json& j);
ElmModel elm_from_json(const nlohmann::json& j);

}  // namespace vitalhmm
