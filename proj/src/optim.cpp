#include "vitalhmm/optim.hpp"

#include "vitalhmm/errors.hpp"

#include <cmath>
#include <string>

namespace vitalhmm {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ContractError("adam_step: shape mismatch (params " + std::to_string(params.size()) +
                        ", grads " + std::to_string(grads.size()) + ", state " +
                        std::to_string(state.m.size()) + ")");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] += cfg.step_size * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace vitalhmm
