#include "vitalhmm/errors.hpp"
#include "vitalhmm/features.hpp"

#include <gtest/gtest.h>

#include <random>

namespace vitalhmm {
namespace {

Frame random_frame(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Frame f;
  f.patient_id = "p";
  f.data.resize(kFrameLength, kChannelCount);
  for (auto& v : f.data.reshaped()) v = n(rng);
  return f;
}

/// Pearson correlation of a[t] with b[t + lag] using one-pass sums in
/// extended precision.
double pearson_at_lag(const std::vector<double>& a, const std::vector<double>& b, int lag) {
  long double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  long double n = 0;
  for (int t = 0; t < static_cast<int>(a.size()); ++t) {
    const int u = t + lag;
    if (u < 0 || u >= static_cast<int>(b.size())) continue;
    const long double x = a[static_cast<std::size_t>(t)], y = b[static_cast<std::size_t>(u)];
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
    sab += x * y;
    n += 1;
  }
  const long double cov = sab / n - (sa / n) * (sb / n);
  const long double va = saa / n - (sa / n) * (sa / n);
  const long double vb = sbb / n - (sb / n) * (sb / n);
  return static_cast<double>(cov / std::sqrt(va * vb));
}

TEST(Features, SampleAsymmetryHandValue) {
  const std::vector<double> x{-3.0, 0.0, 0.0, 0.0, 1.0};
  EXPECT_EQ(sample_asymmetry(x), 1.0 / 9.0);
}

TEST(Features, SampleAsymmetryWithoutNegativeSideUsesFloor) {
  const std::vector<double> x{0.0, 0.0, 0.0, 2.0};
  EXPECT_TRUE(std::isfinite(sample_asymmetry(x)));
  EXPECT_GT(sample_asymmetry(x), 1e6);
  EXPECT_EQ(sample_asymmetry(std::vector<double>{1.0, 1.0}), 0.0);
}

TEST(Features, DerivativeExtensionTriplesWidth) {
  Frame f = random_frame(1);
  const FeatureFrame d = extend_derivatives(f);
  ASSERT_EQ(d.data.cols(), 9);
  ASSERT_EQ(d.data.rows(), kFrameLength);
  EXPECT_EQ(d.data.leftCols(3), f.data);
  EXPECT_EQ(d.data.row(0).tail(6).cwiseAbs().maxCoeff(), 0.0);
  for (Eigen::Index t : {1, 2, 500, 1199}) {
    for (Eigen::Index c = 0; c < 3; ++c) {
      EXPECT_EQ(d.data(t, 3 + c), f.data(t, c) - f.data(t - 1, c));
      if (t >= 2) {
        EXPECT_NEAR(d.data(t, 6 + c), f.data(t, c) - 2.0 * f.data(t - 1, c) + f.data(t - 2, c), 1e-12);
      }
    }
  }
  EXPECT_EQ(sequence_features(f, FeatureMode::Raw).data.cols(), 3);
  EXPECT_THROW(sequence_features(f, FeatureMode::Pops), ConfigError);
}

TEST(Features, PopsCorrelationRangeMatchesLagScan) {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(100 + static_cast<std::uint64_t>(trial));
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> a(kFrameLength), b(kFrameLength);
    for (auto& v : a) v = n(rng);
    // b partly follows a shifted copy so the extremes are not trivial
    const int shift = trial % 7 - 3;
    for (int t = 0; t < static_cast<int>(b.size()); ++t) {
      const int s = std::clamp(t - shift, 0, static_cast<int>(a.size()) - 1);
      b[static_cast<std::size_t>(t)] = 0.6 * a[static_cast<std::size_t>(s)] + n(rng) + 3.0;
    }
    double lo = 2.0, hi = -2.0;
    for (int lag = -30; lag <= 30; ++lag) {
      const double r = pearson_at_lag(a, b, lag);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    const auto range = lagged_correlation_range(a, b, kPopsMaxLag);
    EXPECT_NEAR(range.min, lo, 1e-12);
    EXPECT_NEAR(range.max, hi, 1e-12);
  }
}

TEST(Features, MomentsOfKnownSeries) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 10.0};
  const Moments m = population_moments(x);
  const double mean = 4.0;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    m2 += std::pow(v - mean, 2) / 5.0;
    m3 += std::pow(v - mean, 3) / 5.0;
    m4 += std::pow(v - mean, 4) / 5.0;
  }
  EXPECT_NEAR(m.mean, mean, 1e-15);
  EXPECT_NEAR(m.std, std::sqrt(m2), 1e-14);
  EXPECT_NEAR(m.skewness, m3 / std::pow(m2, 1.5), 1e-13);
  EXPECT_NEAR(m.kurtosis, m4 / (m2 * m2), 1e-13);
  const Moments flat = population_moments(std::vector<double>{2.0, 2.0, 2.0});
  EXPECT_EQ(flat.skewness, 0.0);
  EXPECT_EQ(flat.kurtosis, 0.0);
}

TEST(Features, HrciAndPopsLayout) {
  const Frame f = random_frame(2);
  const auto h = hrci(f);
  ASSERT_EQ(h.values.size(), 3);
  std::vector<double> rri(kFrameLength);
  for (Eigen::Index t = 0; t < kFrameLength; ++t) rri[static_cast<std::size_t>(t)] = f.data(t, 1);
  const Moments m = population_moments(rri);
  EXPECT_NEAR(h.values[0], m.mean, 1e-14);
  EXPECT_NEAR(h.values[1], m.std * m.std, 1e-14);
  EXPECT_EQ(h.values[2], sample_asymmetry(rri));

  const auto p = pops(f);
  ASSERT_EQ(p.values.size(), 10);
  EXPECT_NEAR(p.values[0], m.mean, 1e-14);
  EXPECT_NEAR(p.values[1], m.std, 1e-14);
  EXPECT_LE(p.values[8], p.values[9]);
}

TEST(Features, FlattenIsRowMajor) {
  Sequence s(2, 3);
  s << 1, 2, 3, 4, 5, 6;
  const Vector v = flatten(s);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(v[i], i + 1.0);
}

TEST(Standardizer, FittedDataHasZeroMeanUnitStd) {
  Rng rng(3);
  std::normal_distribution<double> n(5.0, 3.0);
  std::vector<Sequence> blocks(3, Sequence(400, 4));
  for (auto& b : blocks)
    for (auto& v : b.reshaped()) v = n(rng);
  const Standardizer s = Standardizer::fit(blocks);
  std::vector<Sequence> z;
  for (const auto& b : blocks) z.push_back(s.apply(b));
  for (Eigen::Index c = 0; c < 4; ++c) {
    double sum = 0, sq = 0;
    for (const auto& b : z) {
      sum += b.col(c).sum();
      sq += b.col(c).squaredNorm();
    }
    const double mean = sum / 1200.0;
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(std::sqrt(sq / 1200.0 - mean * mean), 1.0, 1e-9);
  }
}

TEST(Standardizer, ConstantChannelMapsToZero) {
  Sequence x(50, 2);
  x.col(0).setConstant(7.25);
  x.col(1).setLinSpaced(50, 0.0, 1.0);
  const Standardizer s = Standardizer::fit(x);
  EXPECT_LT(s.apply(x).col(0).cwiseAbs().maxCoeff(), 1e-9);
  const Standardizer back = Standardizer::from_json(nlohmann::json::parse(s.to_json().dump()));
  EXPECT_EQ(back.mean(), s.mean());
  EXPECT_EQ(back.stddev(), s.stddev());
}

TEST(Features, ModeNames) {
  for (auto m : {FeatureMode::Raw, FeatureMode::Deriv, FeatureMode::Hrci, FeatureMode::Pops, FeatureMode::Flat}) {
    EXPECT_EQ(parse_feature_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_feature_mode("wavelet"), ConfigError);
}

}  // namespace
}  // namespace vitalhmm
