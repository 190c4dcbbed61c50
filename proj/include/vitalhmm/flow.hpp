#pragma once

#include "vitalhmm/emission.hpp"

#include <vector>

namespace vitalhmm {

/// One-hidden-layer tanh network: out = w2 * tanh(w1 * in + b1) + b2.
/// Matrices are stored row-major.
struct TinyNet {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;
  std::vector<double> w1;  // hidden x in
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // out x hidden
  std::vector<double> b2;  // out

  TinyNet() = default;
  TinyNet(std::size_t in, std::size_t hidden, std::size_t out);
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

/// Affine coupling: coordinates in `masked` pass through and condition the
/// shift and log-scale of the coordinates in `unmasked`:
///   y_u = x_u * exp(s(x_m)) + t(x_m),   s clamped to [-5, 5].
struct CouplingLayer {
  static constexpr double kLogScaleClamp = 5.0;

  std::vector<std::size_t> masked;
  std::vector<std::size_t> unmasked;
  TinyNet shift;
  TinyNet logscale;

  std::vector<bool> mask(std::size_t dim) const;
  std::size_t parameter_count() const { return shift.parameter_count() + logscale.parameter_count(); }
};

/// Generator g: z -> x as a stack of coupling layers applied in order, with a
/// standard normal base density on z.
struct FlowComponent {
  std::size_t dim = 0;
  std::vector<CouplingLayer> layers;

  std::size_t parameter_count() const;
};

struct FlowPass {
  Vector value;          // x for a forward pass, z for an inverse pass
  double log_det = 0.0;  // log|det d(output)/d(input)|
};

FlowPass flow_forward(const FlowComponent& c, std::span<const double> z);
FlowPass flow_inverse(const FlowComponent& c, std::span<const double> x);

/// log N(z; 0, I) + log|det dz/dx| with z = g^{-1}(x).
double component_log_density(const FlowComponent& c, std::span<const double> x);

/// Adds weight * d log p(x) / d(parameters) into `grad` (layout of
/// FlowComponent parameters: layer by layer, shift net then log-scale net,
/// each as w1, b1, w2, b2). Returns log p(x).
double component_log_density_gradient(const FlowComponent& c, std::span<const double> x,
                                      double weight, std::span<double> grad);

/// Mixture of flow components; the emission density of one HMM state.
class FlowEmission final : public EmissionModel {
 public:
  FlowEmission() = default;
  FlowEmission(std::vector<FlowComponent> components, const Vector& mix_weights);

  std::size_t mixture_size() const { return components_.size(); }
  const std::vector<FlowComponent>& components() const { return components_; }
  FlowComponent& component(std::size_t m) { return components_.at(m); }
  const Vector& log_mix_weights() const { return log_mix_weights_; }
  void set_mix_weights(const Vector& weights);

  /// Coupling-network parameters of every component, flattened. Mixture
  /// weights are not part of this vector.
  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  /// Adds weight * d log p(x) / d(parameters) into `grad`; returns log p(x).
  double log_density_gradient(std::span<const double> x, double weight, std::span<double> grad) const;

  std::string_view kind() const override { return "flow"; }
  std::size_t dim() const override { return dim_; }
  double log_density(std::span<const double> x) const override;
  void sample(Rng& rng, std::span<double> out) const override;
  MStepReport m_step(std::span<const Sequence> sequences, std::span<const Vector> weights,
                     const MStepConfig& cfg, Rng& rng) override;
  std::unique_ptr<EmissionModel> clone() const override;
  nlohmann::json to_json() const override;
  static FlowEmission from_json(const nlohmann::json& j);

 private:
  std::size_t dim_ = 0;
  std::vector<FlowComponent> components_;
  Vector log_mix_weights_;
};

/// Near-identity flow: network weights U(-0.01, 0.01), zero biases. Layer
/// masks alternate, the first layer keeping the leading ceil(dim / 2)
/// coordinates fixed.
FlowEmission flow_init(std::size_t dim, std::size_t mixture_size, std::size_t layers,
                       std::uint64_t seed, std::size_t hidden = 3);

/// Generalized-EM update: closed-form mixture weights from component
/// responsibilities, then `cfg.gradient_steps` ADAM ascent steps on the
/// weighted log-density sum_t w_t log p(x_t).
FlowEmission flow_mstep(const FlowEmission& e, std::span<const Sequence> sequences,
                        std::span<const Vector> weights, const MStepConfig& cfg, Rng& rng,
                        MStepReport* report = nullptr);

/// Data-driven starting point: clusters the weighted samples into one group
/// per mixture component and sets each component's output biases so that it
/// starts as the diagonal Gaussian of its group.
void flow_warm_start(FlowEmission& e, std::span<const Sequence> sequences,
                     std::span<const Vector> weights, Rng& rng);

}  // namespace vitalhmm
