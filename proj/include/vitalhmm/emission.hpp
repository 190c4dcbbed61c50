#pragma once

#include "vitalhmm/optim.hpp"
#include "vitalhmm/types.hpp"

#include <json.hpp>

#include <memory>
#include <span>
#include <string_view>

namespace vitalhmm {

/// Options for emissions whose M-step is a gradient search. Closed-form
/// emissions ignore them.
struct MStepConfig {
  AdamConfig adam;
  int gradient_steps = 20;
  /// Time points drawn (proportionally to their state weight) per gradient
  /// step; 0 means the full weighted batch.
  std::size_t batch_size = 2048;
};

struct MStepReport {
  double objective_before = 0.0;  // sum_t w_t log p(x_t) before the update
  double objective_after = 0.0;
  int steps_taken = 0;
  bool aborted = false;
};

/// Per-state observation density p(x | s). Implementations are values:
/// `clone()` deep-copies, and the M-step mutates only the receiving object.
class EmissionModel {
 public:
  virtual ~EmissionModel() = default;

  virtual std::string_view kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual double log_density(std::span<const double> x) const = 0;
  virtual void sample(Rng& rng, std::span<double> out) const = 0;

  /// Weighted maximum-likelihood update. `weights[i]` holds one weight per row
  /// of `sequences[i]` (the state posteriors).
  virtual MStepReport m_step(std::span<const Sequence> sequences, std::span<const Vector> weights,
                             const MStepConfig& cfg, Rng& rng) = 0;

  virtual std::unique_ptr<EmissionModel> clone() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

}  // namespace vitalhmm
