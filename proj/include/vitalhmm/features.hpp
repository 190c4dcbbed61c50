#pragma once

#include "vitalhmm/dataset.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string_view>

namespace vitalhmm {

enum class FeatureMode { Raw, Deriv, Hrci, Pops, Flat };

FeatureMode parse_feature_mode(std::string_view text);
std::string_view to_string(FeatureMode mode);
/// Raw and Deriv feed the HMMs; the others produce one vector per frame.
bool is_sequence_mode(FeatureMode mode);

struct FeatureFrame {
  std::string patient_id;
  std::int64_t start_epoch = 0;
  Sequence data;  // T x 3 (raw) or T x 9 (with derivatives)
  std::optional<int> label;
};

struct StaticFeatures {
  Vector values;
  std::optional<int> label;
};

FeatureFrame raw_features(const Frame& frame);

/// Columns [raw | first difference | second difference]; differences are
/// backward with the first row set to zero.
FeatureFrame extend_derivatives(const Frame& frame);

FeatureFrame sequence_features(const Frame& frame, FeatureMode mode);

/// Sum of squared positive deviations from the median over the sum of
/// squared negative ones; the denominator is floored at 1e-12.
double sample_asymmetry(std::span<const double> x);

/// [mean, population variance, sample asymmetry] of the RRi channel.
StaticFeatures hrci(const Frame& frame);

/// [mean, std, skewness, kurtosis] of RRi and of SpO2, then the min and max
/// over lags -30..30 s of the Pearson correlation of RRi[t] with SpO2[t+lag].
StaticFeatures pops(const Frame& frame);

/// Row-major flattening of a (standardized) frame, for the ELM.
Vector flatten(const Sequence& data);

struct Moments {
  double mean = 0.0;
  double std = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // non-excess
};
Moments population_moments(std::span<const double> x);

struct CorrelationRange {
  double min = 0.0;
  double max = 0.0;
};
/// Pearson correlation of a[t] and b[t + lag] on their overlap, for every lag
/// in [-max_lag, max_lag]; zero-variance overlaps count as correlation 0.
CorrelationRange lagged_correlation_range(std::span<const double> a, std::span<const double> b,
                                          int max_lag);

inline constexpr int kPopsMaxLag = 30;

/// Per-column z-scoring fitted on training data only.
class Standardizer {
 public:
  static constexpr double kStdFloor = 1e-6;

  Standardizer() = default;
  Standardizer(Vector mean, Vector stddev);

  /// Fits on the rows of every block.
  static Standardizer fit(std::span<const Sequence> blocks);
  static Standardizer fit(const RowMatrix& rows) { return fit(std::span<const Sequence>(&rows, 1)); }

  RowMatrix apply(const RowMatrix& x) const;
  Vector apply(const Vector& x) const;

  const Vector& mean() const { return mean_; }
  const Vector& stddev() const { return stddev_; }

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);

 private:
  Vector mean_;
  Vector stddev_;
};

}  // namespace vitalhmm
