#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace vitalhmm {

/// ADAM hyper-parameters; defaults are the method's published defaults.
struct AdamConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// One bias-corrected ADAM update in the ascent direction (maximization).
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const AdamConfig& cfg);

}  // namespace vitalhmm
