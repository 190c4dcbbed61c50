#include "vitalhmm/baselines.hpp"

#include "vitalhmm/errors.hpp"

#include <algorithm>
#include <string>

namespace vitalhmm {
namespace {

constexpr int kMaxNewtonIters = 200;

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_labels(const Matrix& X, std::span<const int> y) {
  if (static_cast<Eigen::Index>(y.size()) != X.rows()) throw ContractError("one label per row required");
  for (int v : y) {
    if (v != 0 && v != 1) throw ContractError("labels must be 0 or 1");
  }
}

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }
Vector from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

double LogisticModel::probability(const Eigen::Ref<const Vector>& x) const {
  return sigmoid(weights.dot(x) + bias);
}

double logreg_objective(const Matrix& X, std::span<const int> y, double lambda, const Vector& w, double b) {
  check_labels(X, y);
  const Vector z = (X * w).array() + b;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(z[i]) - y[static_cast<std::size_t>(i)] * z[i];
  return loss / static_cast<double>(X.rows()) + 0.5 * lambda * w.squaredNorm();
}

Vector logreg_gradient(const Matrix& X, std::span<const int> y, double lambda, const Vector& w, double b) {
  check_labels(X, y);
  const Eigen::Index B = X.rows();
  const Eigen::Index d = X.cols();
  Vector r(B);
  for (Eigen::Index i = 0; i < B; ++i) r[i] = sigmoid(X.row(i).dot(w) + b) - y[static_cast<std::size_t>(i)];
  Vector g(d + 1);
  g.head(d) = X.transpose() * r / static_cast<double>(B) + lambda * w;
  g[d] = r.sum() / static_cast<double>(B);
  return g;
}

LogisticModel logreg_fit(const Matrix& X, std::span<const int> y, double lambda, double tol, const Vector* init) {
  check_labels(X, y);
  const Eigen::Index B = X.rows();
  const Eigen::Index d = X.cols();
  const auto ones = std::count(y.begin(), y.end(), 1);
  if (B < 2 || ones == 0 || ones == B) throw FitError("logistic regression needs both classes present");
  if (!(lambda >= 0.0)) throw ContractError("lambda must be non-negative");

  Vector theta = Vector::Zero(d + 1);
  if (init) {
    if (init->size() != d + 1) throw ContractError("initial parameter vector has wrong length");
    theta = *init;
  }
  Matrix Xa(B, d + 1);
  Xa.leftCols(d) = X;
  Xa.col(d).setOnes();

  auto objective = [&](const Vector& t) { return logreg_objective(X, y, lambda, t.head(d), t[d]); };
  double f = objective(theta);
  for (int it = 0; it < kMaxNewtonIters; ++it) {
    const Vector g = logreg_gradient(X, y, lambda, theta.head(d), theta[d]);
    if (g.norm() <= tol) break;
    Vector s(B);
    for (Eigen::Index i = 0; i < B; ++i) {
      const double p = sigmoid(Xa.row(i).dot(theta));
      s[i] = p * (1.0 - p);
    }
    Matrix H = Xa.transpose() * s.asDiagonal() * Xa / static_cast<double>(B);
    H.diagonal().head(d).array() += lambda;
    H.diagonal().array() += 1e-12;
    const Vector step = H.ldlt().solve(g);
    // backtracking (Armijo) along the Newton direction
    double alpha = 1.0;
    Vector next = theta - step;
    double f_next = objective(next);
    while (f_next > f - 1e-4 * alpha * g.dot(step) && alpha > 1e-10) {
      alpha *= 0.5;
      next = theta - alpha * step;
      f_next = objective(next);
    }
    if (!(f_next <= f)) break;
    theta = next;
    f = f_next;
  }
  return {theta.head(d), theta[d], lambda};
}

std::vector<double> decade_grid(int lo, int hi) {
  std::vector<double> out;
  for (int e = lo; e <= hi; ++e) out.push_back(std::pow(10.0, e));
  return out;
}

GridSearchResult logreg_cv_grid(const Matrix& X, std::span<const int> y, std::span<const double> grid,
                                int folds, std::uint64_t seed, double tol) {
  check_labels(X, y);
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  if (folds < 2 || X.rows() < folds) throw FitError("cross-validation needs at least `folds` samples and folds >= 2");

  // stratified assignment: shuffle each class, deal out round-robin
  Rng rng(seed);
  std::vector<int> fold_of(y.size());
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) idx.push_back(i);
    }
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    for (std::size_t k = 0; k < idx.size(); ++k) fold_of[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  }

  GridSearchResult result;
  result.lambdas.assign(grid.begin(), grid.end());
  std::sort(result.lambdas.begin(), result.lambdas.end());
  double best = -1.0;
  for (double lambda : result.lambdas) {
    std::size_t correct = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> tr, te;
      for (std::size_t i = 0; i < y.size(); ++i) (fold_of[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
      if (te.empty()) continue;
      Matrix Xtr = X(tr, Eigen::all);
      std::vector<int> ytr;
      for (auto i : tr) ytr.push_back(y[static_cast<std::size_t>(i)]);
      const auto model = logreg_fit(Xtr, ytr, lambda, tol);
      for (auto i : te) {
        if (model.predict(X.row(i).transpose()) == y[static_cast<std::size_t>(i)]) ++correct;
      }
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(y.size());
    result.cv_accuracy.push_back(acc);
    if (acc >= best) {
      best = acc;
      result.chosen_lambda = lambda;
    }
  }
  result.model = logreg_fit(X, y, result.chosen_lambda, tol);
  return result;
}

Matrix ElmModel::hidden_activations(const Matrix& X) const {
  if (X.cols() != hidden_weights.cols()) throw ContractError("ELM input width mismatch");
  Matrix pre = (X * hidden_weights.transpose()).rowwise() + hidden_bias.transpose();
  return pre.unaryExpr([](double z) { return sigmoid(z); });
}

double ElmModel::score(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != hidden_weights.cols()) throw ContractError("ELM input width mismatch");
  const Vector h = ((hidden_weights * x) + hidden_bias).unaryExpr([](double z) { return sigmoid(z); });
  return h.dot(readout) + readout_bias;
}

ElmModel elm_fit(const Matrix& X, std::span<const int> y, std::size_t hidden, double ridge, std::uint64_t seed) {
  check_labels(X, y);
  if (X.rows() < 1 || hidden < 1) throw ContractError("elm_fit needs samples and a positive hidden width");
  if (!(ridge >= 0.0)) throw ContractError("ridge must be non-negative");
  const auto ones = std::count(y.begin(), y.end(), 1);
  if (ones == 0 || ones == static_cast<std::ptrdiff_t>(y.size())) throw FitError("ELM needs both classes present");
  const auto h = static_cast<Eigen::Index>(hidden);
  ElmModel m;
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  m.hidden_weights.resize(h, X.cols());
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) m.hidden_weights(i, j) = uni(rng);
  }
  m.hidden_bias.resize(h);
  for (Eigen::Index i = 0; i < h; ++i) m.hidden_bias[i] = uni(rng);
  m.ridge = ridge;

  const Matrix H = m.hidden_activations(X);
  Vector t(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) t[i] = y[static_cast<std::size_t>(i)];
  const Eigen::RowVectorXd h_mean = H.colwise().mean();
  const double t_mean = t.mean();
  const Matrix Hc = H.rowwise() - h_mean;
  const Vector tc = t.array() - t_mean;
  // ridge solution through the SVD: beta = V diag(s / (s^2 + ridge)) U^T t
  Eigen::BDCSVD<Matrix> svd(Hc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Vector coef = svd.matrixU().transpose() * tc;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double denom = s[i] * s[i] + ridge;
    coef[i] = denom > 0.0 ? coef[i] * s[i] / denom : 0.0;
  }
  m.readout = svd.matrixV() * coef;
  m.readout_bias = t_mean - h_mean.dot(m.readout);
  return m;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw ContractError("accuracy needs equal nonempty label lists");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(truth.size());
}

nlohmann::json to_json(const LogisticModel& m) {
  return {{"format", kBaselineFormatTag}, {"kind", "logreg"}, {"weights", to_vec(m.weights)},
          {"bias", m.bias}, {"lambda", m.lambda}};
}

nlohmann::json to_json(const ElmModel& m) {
  std::vector<double> w(static_cast<std::size_t>(m.hidden_weights.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      w.data(), m.hidden_weights.rows(), m.hidden_weights.cols()) = m.hidden_weights;
  return {{"format", kBaselineFormatTag}, {"kind", "elm"},
          {"hidden", m.hidden_weights.rows()}, {"inputs", m.hidden_weights.cols()},
          {"hidden_weights", w}, {"hidden_bias", to_vec(m.hidden_bias)},
          {"readout", to_vec(m.readout)}, {"readout_bias", m.readout_bias}, {"ridge", m.ridge}};
}

LogisticModel logistic_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kBaselineFormatTag || j.value("kind", "") != "logreg") {
    throw ContractError("record is not a baseline-v1 logistic model");
  }
  return {from_vec(j.at("weights").get<std::vector<double>>()), j.at("bias").get<double>(),
          j.at("lambda").get<double>()};
}

ElmModel elm_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kBaselineFormatTag || j.value("kind", "") != "elm") {
    throw ContractError("record is not a baseline-v1 ELM model");
  }
  ElmModel m;
  const auto h = j.at("hidden").get<Eigen::Index>();
  const auto d = j.at("inputs").get<Eigen::Index>();
  const auto w = j.at("hidden_weights").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(w.size()) != h * d) throw ContractError("ELM weight matrix has wrong size");
  m.hidden_weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), h, d);
  m.hidden_bias = from_vec(j.at("hidden_bias").get<std::vector<double>>());
  m.readout = from_vec(j.at("readout").get<std::vector<double>>());
  m.readout_bias = j.at("readout_bias").get<double>();
  m.ridge = j.at("ridge").get<double>();
  return m;
}

}  // namespace vitalhmm
