#include "vitalhmm/features.hpp"

#include "vitalhmm/errors.hpp"

#include <algorithm>
#include <vector>

namespace vitalhmm {
namespace {

constexpr double kAsymmetryEpsilon = 1e-12;
constexpr double kDegenerateVariance = 1e-300;

std::vector<double> column(const Frame& frame, Channel ch) {
  const auto c = static_cast<Eigen::Index>(ch);
  if (frame.data.cols() <= c) throw ContractError("frame lacks channel " + std::string(kChannelNames[static_cast<std::size_t>(c)]));
  std::vector<double> out(static_cast<std::size_t>(frame.data.rows()));
  for (Eigen::Index t = 0; t < frame.data.rows(); ++t) out[static_cast<std::size_t>(t)] = frame.data(t, c);
  return out;
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

double pearson(const double* a, const double* b, std::size_t n) {
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= kDegenerateVariance || sbb <= kDegenerateVariance) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace

FeatureMode parse_feature_mode(std::string_view text) {
  if (text == "raw") return FeatureMode::Raw;
  if (text == "deriv") return FeatureMode::Deriv;
  if (text == "hrci") return FeatureMode::Hrci;
  if (text == "pops") return FeatureMode::Pops;
  if (text == "flat") return FeatureMode::Flat;
  throw ConfigError("unknown feature mode '" + std::string(text) + "'");
}

std::string_view to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::Raw: return "raw";
    case FeatureMode::Deriv: return "deriv";
    case FeatureMode::Hrci: return "hrci";
    case FeatureMode::Pops: return "pops";
    case FeatureMode::Flat: return "flat";
  }
  return "raw";
}

bool is_sequence_mode(FeatureMode mode) { return mode == FeatureMode::Raw || mode == FeatureMode::Deriv; }

FeatureFrame raw_features(const Frame& frame) {
  return {frame.patient_id, frame.start_epoch, frame.data, frame.label};
}

FeatureFrame extend_derivatives(const Frame& frame) {
  const Eigen::Index T = frame.data.rows();
  const Eigen::Index N = frame.data.cols();
  FeatureFrame out{frame.patient_id, frame.start_epoch, Sequence(T, 3 * N), frame.label};
  out.data.leftCols(N) = frame.data;
  auto d1 = out.data.middleCols(N, N);
  auto d2 = out.data.rightCols(N);
  if (T > 0) {
    d1.row(0).setZero();
    d2.row(0).setZero();
  }
  for (Eigen::Index t = 1; t < T; ++t) d1.row(t) = frame.data.row(t) - frame.data.row(t - 1);
  for (Eigen::Index t = 1; t < T; ++t) d2.row(t) = d1.row(t) - d1.row(t - 1);
  return out;
}

FeatureFrame sequence_features(const Frame& frame, FeatureMode mode) {
  switch (mode) {
    case FeatureMode::Raw: return raw_features(frame);
    case FeatureMode::Deriv: return extend_derivatives(frame);
    default: throw ConfigError("feature mode '" + std::string(to_string(mode)) + "' is not a sequence mode");
  }
}

double sample_asymmetry(std::span<const double> x) {
  if (x.empty()) throw ContractError("sample_asymmetry needs at least one value");
  const double med = median(std::vector<double>(x.begin(), x.end()));
  double pos = 0.0, neg = 0.0;
  for (double v : x) {
    const double xi = v - med;
    if (xi > 0.0) pos += xi * xi;
    else if (xi < 0.0) neg += xi * xi;
  }
  return pos / std::max(neg, kAsymmetryEpsilon);
}

Moments population_moments(std::span<const double> x) {
  if (x.empty()) throw ContractError("moments of an empty series");
  const double n = static_cast<double>(x.size());
  Moments m;
  for (double v : x) m.mean += v;
  m.mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - m.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  m.std = std::sqrt(m2);
  if (m2 > kDegenerateVariance) {
    m.skewness = m3 / std::pow(m2, 1.5);
    m.kurtosis = m4 / (m2 * m2);
  }
  return m;
}

CorrelationRange lagged_correlation_range(std::span<const double> a, std::span<const double> b,
                                          int max_lag) {
  if (a.size() != b.size() || a.empty()) throw ContractError("lagged correlation needs equal nonempty series");
  if (max_lag < 0) throw ContractError("max_lag must be non-negative");
  const auto T = static_cast<std::ptrdiff_t>(a.size());
  CorrelationRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    // pairs (a[t], b[t + lag]) with both indices in range
    const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -lag);
    const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(T, T - lag);
    if (t1 - t0 < 1) continue;
    const double c = pearson(a.data() + t0, b.data() + t0 + lag, static_cast<std::size_t>(t1 - t0));
    r.min = std::min(r.min, c);
    r.max = std::max(r.max, c);
  }
  if (r.min > r.max) r = {0.0, 0.0};
  return r;
}

StaticFeatures hrci(const Frame& frame) {
  const auto rri = column(frame, Channel::RRi);
  const auto m = population_moments(rri);
  StaticFeatures out;
  out.values.resize(3);
  out.values << m.mean, m.std * m.std, sample_asymmetry(rri);
  out.label = frame.label;
  return out;
}

StaticFeatures pops(const Frame& frame) {
  const auto rri = column(frame, Channel::RRi);
  const auto spo2 = column(frame, Channel::SpO2);
  const auto mr = population_moments(rri);
  const auto ms = population_moments(spo2);
  const auto xc = lagged_correlation_range(rri, spo2, kPopsMaxLag);
  StaticFeatures out;
  out.values.resize(10);
  out.values << mr.mean, mr.std, mr.skewness, mr.kurtosis, ms.mean, ms.std, ms.skewness, ms.kurtosis,
      xc.min, xc.max;
  out.label = frame.label;
  return out;
}

Vector flatten(const Sequence& data) {
  return Eigen::Map<const Vector>(data.data(), data.size());
}

Standardizer::Standardizer(Vector mean, Vector stddev) : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.size() != stddev_.size()) throw ContractError("standardizer vectors differ in length");
  stddev_ = stddev_.cwiseMax(kStdFloor);
}

Standardizer Standardizer::fit(std::span<const Sequence> blocks) {
  if (blocks.empty()) throw ContractError("standardizer needs data");
  const Eigen::Index N = blocks.front().cols();
  Vector sum = Vector::Zero(N);
  double count = 0.0;
  for (const auto& b : blocks) {
    if (b.cols() != N) throw ContractError("standardizer blocks differ in width");
    sum += b.colwise().sum().transpose();
    count += static_cast<double>(b.rows());
  }
  if (count < 1.0) throw ContractError("standardizer needs at least one row");
  const Vector mean = sum / count;
  Vector sq = Vector::Zero(N);
  for (const auto& b : blocks) sq += (b.rowwise() - mean.transpose()).colwise().squaredNorm().transpose();
  return Standardizer(mean, (sq / count).cwiseSqrt());
}

RowMatrix Standardizer::apply(const RowMatrix& x) const {
  if (x.cols() != mean_.size()) throw ContractError("standardizer width mismatch");
  RowMatrix out = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) out.col(c) = (x.col(c).array() - mean_[c]) / stddev_[c];
  return out;
}

Vector Standardizer::apply(const Vector& x) const {
  if (x.size() != mean_.size()) throw ContractError("standardizer width mismatch");
  return (x - mean_).cwiseQuotient(stddev_);
}

nlohmann::json Standardizer::to_json() const {
  return {{"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
          {"std", std::vector<double>(stddev_.data(), stddev_.data() + stddev_.size())}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("std").get<std::vector<double>>();
  return Standardizer(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size())),
                      Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())));
}

}  // namespace vitalhmm
