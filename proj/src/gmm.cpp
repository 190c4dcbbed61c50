#include "vitalhmm/gmm.hpp"

#include "vitalhmm/errors.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace vitalhmm {
namespace {

constexpr std::size_t kInitPoolRows = 20000;

template <typename F>
void with_scratch(std::size_t n, F&& f) {
  if (n <= 64) {
    std::array<double, 64> buf;
    f(std::span<double>(buf.data(), n));
  } else {
    std::vector<double> buf(n);
    f(std::span<double>(buf));
  }
}

void check_weights(std::span<const Sequence> sequences, std::span<const Vector> weights) {
  if (sequences.size() != weights.size()) throw ContractError("one weight vector per sequence required");
  for (std::size_t k = 0; k < sequences.size(); ++k) {
    if (weights[k].size() != sequences[k].rows()) {
      throw ContractError("weight vector length does not match sequence length");
    }
  }
}

}  // namespace

GmmEmission::GmmEmission(const Vector& weights, Matrix means, Matrix variances)
    : means_(std::move(means)), variances_(std::move(variances)) {
  const auto k = means_.rows();
  if (k < 1 || means_.cols() < 1) throw ContractError("GMM needs at least one component and one dimension");
  if (weights.size() != k || variances_.rows() != k || variances_.cols() != means_.cols()) {
    throw ContractError("GMM parameter shapes disagree");
  }
  if (!(weights.array() >= 0.0).all() || !(weights.sum() > 0.0)) {
    throw ContractError("GMM weights must be non-negative with positive sum");
  }
  log_weights_ = (weights / weights.sum()).array().log();
  variances_ = variances_.cwiseMax(kVarianceFloor);
  refresh_constants();
}

void GmmEmission::refresh_constants() {
  inv_variances_ = variances_.cwiseInverse();
  log_norm_.resize(means_.rows());
  for (Eigen::Index k = 0; k < means_.rows(); ++k) {
    log_norm_[k] = log_weights_[k] -
                   0.5 * (static_cast<double>(means_.cols()) * kLog2Pi +
                          variances_.row(k).array().log().sum());
  }
}

void GmmEmission::component_log_densities(std::span<const double> x, std::span<double> out) const {
  if (x.size() != dim()) {
    throw ContractError("GMM input has dimension " + std::to_string(x.size()) + ", expected " +
                        std::to_string(dim()));
  }
  const auto n = means_.cols();
  for (Eigen::Index k = 0; k < means_.rows(); ++k) {
    double q = 0.0;
    for (Eigen::Index d = 0; d < n; ++d) {
      const double diff = x[static_cast<std::size_t>(d)] - means_(k, d);
      q += diff * diff * inv_variances_(k, d);
    }
    out[static_cast<std::size_t>(k)] = log_norm_[k] - 0.5 * q;
  }
}

double GmmEmission::log_density(std::span<const double> x) const {
  double result = 0.0;
  with_scratch(components(), [&](std::span<double> buf) {
    component_log_densities(x, buf);
    result = log_sum_exp(buf);
  });
  return result;
}

void GmmEmission::sample(Rng& rng, std::span<double> out) const {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  double u = uni(rng);
  Eigen::Index k = 0;
  for (; k + 1 < means_.rows(); ++k) {
    u -= std::exp(log_weights_[k]);
    if (u < 0.0) break;
  }
  for (Eigen::Index d = 0; d < means_.cols(); ++d) {
    out[static_cast<std::size_t>(d)] = means_(k, d) + std::sqrt(variances_(k, d)) * normal(rng);
  }
}

MStepReport GmmEmission::m_step(std::span<const Sequence> sequences, std::span<const Vector> weights,
                                const MStepConfig&, Rng&) {
  MStepReport report;
  report.objective_before = weighted_loglik(*this, sequences, weights);
  *this = gmm_mstep(*this, sequences, weights);
  report.objective_after = weighted_loglik(*this, sequences, weights);
  report.steps_taken = 1;
  return report;
}

std::unique_ptr<EmissionModel> GmmEmission::clone() const {
  return std::make_unique<GmmEmission>(*this);
}

nlohmann::json GmmEmission::to_json() const {
  nlohmann::json j;
  j["kind"] = "gmm";
  j["log_weights"] = std::vector<double>(log_weights_.data(), log_weights_.data() + log_weights_.size());
  auto rows = [](const Matrix& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(m(r, c));
    }
    return out;
  };
  j["means"] = rows(means_);
  j["variances"] = rows(variances_);
  return j;
}

GmmEmission GmmEmission::from_json(const nlohmann::json& j) {
  const auto lw = j.at("log_weights").get<std::vector<double>>();
  const auto mu = j.at("means").get<std::vector<std::vector<double>>>();
  const auto var = j.at("variances").get<std::vector<std::vector<double>>>();
  if (lw.empty() || mu.size() != lw.size() || var.size() != lw.size()) {
    throw ContractError("malformed gmm emission record");
  }
  const auto k = static_cast<Eigen::Index>(lw.size());
  const auto n = static_cast<Eigen::Index>(mu.front().size());
  Matrix means(k, n), variances(k, n);
  Vector w(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto& mr = mu[static_cast<std::size_t>(r)];
    const auto& vr = var[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(mr.size()) != n || static_cast<Eigen::Index>(vr.size()) != n) {
      throw ContractError("malformed gmm emission record");
    }
    w[r] = std::exp(lw[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < n; ++c) {
      means(r, c) = mr[static_cast<std::size_t>(c)];
      variances(r, c) = vr[static_cast<std::size_t>(c)];
    }
  }
  GmmEmission e(w, std::move(means), std::move(variances));
  e.log_weights_ = Eigen::Map<const Vector>(lw.data(), k);
  e.refresh_constants();
  return e;
}

GmmEmission gmm_mstep(const GmmEmission& e, std::span<const Sequence> sequences,
                      std::span<const Vector> gammas) {
  check_weights(sequences, gammas);
  const auto K = static_cast<Eigen::Index>(e.components());
  const auto N = static_cast<Eigen::Index>(e.dim());
  double total = 0.0;
  for (const auto& g : gammas) {
    if ((g.array() < 0.0).any()) throw ContractError("state weights must be non-negative");
    total += g.sum();
  }
  if (!(total > 0.0)) throw ContractError("gmm_mstep: all state weights are zero");

  // responsibilities r[t][k] = gamma_t * posterior of component k
  std::vector<Matrix> resp(sequences.size());
  Vector mass = Vector::Zero(K);
  Matrix sum_x = Matrix::Zero(K, N);
  std::vector<double> comp(static_cast<std::size_t>(K));
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    if (seq.cols() != N) throw ContractError("gmm_mstep: sample dimension mismatch");
    resp[s].resize(seq.rows(), K);
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
      const double g = gammas[s][t];
      if (g == 0.0) {
        resp[s].row(t).setZero();
        continue;
      }
      e.component_log_densities(row_span(seq, t), comp);
      const double norm = log_sum_exp(comp);
      for (Eigen::Index k = 0; k < K; ++k) {
        const double r = g * std::exp(comp[static_cast<std::size_t>(k)] - norm);
        resp[s](t, k) = r;
        mass[k] += r;
        sum_x.row(k) += r * seq.row(t);
      }
    }
  }

  Vector weights(K);
  Matrix means = e.means();
  Matrix variances = e.variances();
  std::vector<bool> live(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    live[static_cast<std::size_t>(k)] = mass[k] > 1e-300;
    weights[k] = std::max(mass[k] / total, GmmEmission::kWeightFloor);
    if (live[static_cast<std::size_t>(k)]) means.row(k) = sum_x.row(k) / mass[k];
  }
  Matrix sum_sq = Matrix::Zero(K, N);
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
      if (gammas[s][t] == 0.0) continue;
      for (Eigen::Index k = 0; k < K; ++k) {
        const double r = resp[s](t, k);
        if (r == 0.0) continue;
        sum_sq.row(k) += r * (seq.row(t) - means.row(k)).cwiseAbs2();
      }
    }
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    if (live[static_cast<std::size_t>(k)]) variances.row(k) = sum_sq.row(k) / mass[k];
  }
  return GmmEmission(weights, std::move(means), std::move(variances));
}

GmmEmission gmm_mstep(const GmmEmission& e, const Sequence& samples, const Vector& gammas) {
  return gmm_mstep(e, std::span<const Sequence>(&samples, 1), std::span<const Vector>(&gammas, 1));
}

double weighted_loglik(const EmissionModel& e, std::span<const Sequence> sequences,
                       std::span<const Vector> weights) {
  check_weights(sequences, weights);
  double total = 0.0;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    for (Eigen::Index t = 0; t < sequences[s].rows(); ++t) {
      const double w = weights[s][t];
      if (w != 0.0) total += w * e.log_density(row_span(sequences[s], t));
    }
  }
  return total;
}

RowMatrix pool_rows(std::span<const Sequence> sequences, std::size_t max_rows, Rng& rng) {
  std::vector<std::pair<std::size_t, Eigen::Index>> index;
  Eigen::Index cols = 0;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    cols = sequences[s].cols();
    for (Eigen::Index t = 0; t < sequences[s].rows(); ++t) index.emplace_back(s, t);
  }
  if (index.size() > max_rows) {
    for (std::size_t i = 0; i < max_rows; ++i) {
      std::swap(index[i], index[i + rng() % (index.size() - i)]);
    }
    index.resize(max_rows);
    std::sort(index.begin(), index.end());
  }
  RowMatrix out(static_cast<Eigen::Index>(index.size()), cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = sequences[index[i].first].row(index[i].second);
  }
  return out;
}

RowMatrix kmeans(const RowMatrix& points, std::size_t k, Rng& rng, int lloyd_iters) {
  const Eigen::Index R = points.rows();
  const auto K = static_cast<Eigen::Index>(k);
  if (K < 1 || R < K) {
    throw InitError("k-means needs at least " + std::to_string(k) + " samples, got " + std::to_string(R));
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  RowMatrix centers(K, points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(R)));
  Vector d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < K; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = uni(rng) * total;
      for (pick = 0; pick + 1 < R; ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(R));
    }
    centers.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(R), 0);
  for (int it = 0; it < lloyd_iters; ++it) {
    for (Eigen::Index r = 0; r < R; ++r) {
      Eigen::Index best = 0;
      (centers.rowwise() - points.row(r)).rowwise().squaredNorm().minCoeff(&best);
      assign[static_cast<std::size_t>(r)] = best;
    }
    RowMatrix sums = RowMatrix::Zero(K, points.cols());
    Vector counts = Vector::Zero(K);
    for (Eigen::Index r = 0; r < R; ++r) {
      sums.row(assign[static_cast<std::size_t>(r)]) += points.row(r);
      counts[assign[static_cast<std::size_t>(r)]] += 1.0;
    }
    for (Eigen::Index c = 0; c < K; ++c) {
      if (counts[c] > 0.0) centers.row(c) = sums.row(c) / counts[c];
    }
  }
  return centers;
}

std::vector<GmmEmission> gmm_init(std::span<const Sequence> pooled, std::size_t components,
                                  std::size_t states, std::uint64_t seed) {
  if (components < 1 || states < 1) throw InitError("gmm_init: components and states must be positive");
  std::size_t total_rows = 0;
  for (const auto& s : pooled) total_rows += static_cast<std::size_t>(s.rows());
  const std::size_t n_centers = components * states;
  if (total_rows < n_centers) {
    throw InitError("gmm_init: " + std::to_string(total_rows) + " samples for " +
                    std::to_string(n_centers) + " centers");
  }
  Rng rng(seed);
  const RowMatrix points = pool_rows(pooled, kInitPoolRows, rng);
  const RowMatrix centers = kmeans(points, n_centers, rng);

  const Eigen::RowVectorXd mean = points.colwise().mean();
  const Eigen::RowVectorXd var =
      ((points.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(points.rows()))
          .cwiseMax(GmmEmission::kVarianceFloor);

  std::vector<GmmEmission> out;
  out.reserve(states);
  const auto K = static_cast<Eigen::Index>(components);
  for (std::size_t s = 0; s < states; ++s) {
    Matrix means(K, points.cols());
    for (Eigen::Index k = 0; k < K; ++k) {
      means.row(k) = centers.row(static_cast<Eigen::Index>(s + static_cast<std::size_t>(k) * states));
    }
    Matrix variances = var.replicate(K, 1);
    out.emplace_back(Vector::Ones(K), std::move(means), std::move(variances));
  }
  return out;
}

}  // namespace vitalhmm
