#pragma once

#include "vitalhmm/emission.hpp"

#include <vector>

namespace vitalhmm {

/// Mixture of K diagonal Gaussians in N dimensions.
class GmmEmission final : public EmissionModel {
 public:
  static constexpr double kVarianceFloor = 1e-6;
  static constexpr double kWeightFloor = 1e-10;

  GmmEmission() = default;
  /// `weights` are probabilities (normalized here); means and variances are
  /// K x N. Variances below the floor are raised to it.
  GmmEmission(const Vector& weights, Matrix means, Matrix variances);

  std::size_t components() const { return static_cast<std::size_t>(means_.rows()); }
  const Vector& log_weights() const { return log_weights_; }
  const Matrix& means() const { return means_; }
  const Matrix& variances() const { return variances_; }

  std::string_view kind() const override { return "gmm"; }
  std::size_t dim() const override { return static_cast<std::size_t>(means_.cols()); }
  double log_density(std::span<const double> x) const override;
  void sample(Rng& rng, std::span<double> out) const override;
  MStepReport m_step(std::span<const Sequence> sequences, std::span<const Vector> weights,
                     const MStepConfig& cfg, Rng& rng) override;
  std::unique_ptr<EmissionModel> clone() const override;
  nlohmann::json to_json() const override;
  static GmmEmission from_json(const nlohmann::json& j);

  /// log w_k + log N(x; mu_k, diag var_k) for every component.
  void component_log_densities(std::span<const double> x, std::span<double> out) const;

 private:
  void refresh_constants();

  Vector log_weights_;
  Matrix means_;
  Matrix variances_;
  Matrix inv_variances_;
  Vector log_norm_;  // log w_k - 0.5 * sum_d log(2 pi var_kd)
};

/// One EM update of the mixture against state-weighted samples. A component
/// whose responsibility mass vanishes keeps its parameters and its weight is
/// floored at kWeightFloor.
GmmEmission gmm_mstep(const GmmEmission& e, std::span<const Sequence> sequences,
                      std::span<const Vector> gammas);
GmmEmission gmm_mstep(const GmmEmission& e, const Sequence& samples, const Vector& gammas);

/// Weighted data log-likelihood sum_t w_t log p(x_t).
double weighted_loglik(const EmissionModel& e, std::span<const Sequence> sequences,
                       std::span<const Vector> weights);

/// k-means++ seeding (refined by Lloyd iterations) of K * n centers on the
/// pooled samples; center c goes to state c mod n. Variances start at the
/// global per-channel variance, weights uniform.
std::vector<GmmEmission> gmm_init(std::span<const Sequence> pooled, std::size_t components,
                                  std::size_t states, std::uint64_t seed);

/// Plain k-means++ with Lloyd refinement over the rows of `points`.
/// Deterministic given the seed; returns centers in seeding order.
RowMatrix kmeans(const RowMatrix& points, std::size_t k, Rng& rng, int lloyd_iters = 10);

/// Stacks up to `max_rows` rows drawn without replacement from the sequences.
RowMatrix pool_rows(std::span<const Sequence> sequences, std::size_t max_rows, Rng& rng);

}  // namespace vitalhmm
