#include "vitalhmm/flow.hpp"

#include "vitalhmm/errors.hpp"
#include "vitalhmm/gmm.hpp"

#include <algorithm>
#include <array>
#include <string>

namespace vitalhmm {
namespace {

constexpr std::size_t kMaxWidth = 64;
constexpr std::size_t kWarmStartRows = 4000;
using Buffer = std::array<double, kMaxWidth>;

void net_eval(const TinyNet& n, const double* a, double* h, double* o) {
  for (std::size_t k = 0; k < n.hidden; ++k) {
    double s = n.b1[k];
    const double* w = &n.w1[k * n.in];
    for (std::size_t i = 0; i < n.in; ++i) s += w[i] * a[i];
    h[k] = std::tanh(s);
  }
  for (std::size_t j = 0; j < n.out; ++j) {
    double s = n.b2[j];
    const double* w = &n.w2[j * n.hidden];
    for (std::size_t k = 0; k < n.hidden; ++k) s += w[k] * h[k];
    o[j] = s;
  }
}

// Accumulates parameter gradients (w1, b1, w2, b2 order) and adds the input
// gradient into g_a.
void net_backward(const TinyNet& n, const double* a, const double* h, const double* g_o,
                  double* grad, double* g_a) {
  double* gw1 = grad;
  double* gb1 = gw1 + n.hidden * n.in;
  double* gw2 = gb1 + n.hidden;
  double* gb2 = gw2 + n.out * n.hidden;
  Buffer g_pre{};
  for (std::size_t j = 0; j < n.out; ++j) {
    gb2[j] += g_o[j];
    for (std::size_t k = 0; k < n.hidden; ++k) {
      gw2[j * n.hidden + k] += g_o[j] * h[k];
      g_pre[k] += n.w2[j * n.hidden + k] * g_o[j];
    }
  }
  for (std::size_t k = 0; k < n.hidden; ++k) {
    g_pre[k] *= 1.0 - h[k] * h[k];
    gb1[k] += g_pre[k];
    for (std::size_t i = 0; i < n.in; ++i) {
      gw1[k * n.in + i] += g_pre[k] * a[i];
      g_a[i] += n.w1[k * n.in + i] * g_pre[k];
    }
  }
}

double clamp_logscale(double s) {
  return std::clamp(s, -CouplingLayer::kLogScaleClamp, CouplingLayer::kLogScaleClamp);
}

void gather(const CouplingLayer& layer, const double* v, double* a) {
  for (std::size_t i = 0; i < layer.masked.size(); ++i) a[i] = v[layer.masked[i]];
}

// Inverts one layer in place; returns the layer's contribution to
// log|det d(out)/d(in)| of the inverse map.
double layer_inverse(const CouplingLayer& layer, double* v) {
  Buffer a, h, t, s;
  gather(layer, v, a.data());
  net_eval(layer.shift, a.data(), h.data(), t.data());
  net_eval(layer.logscale, a.data(), h.data(), s.data());
  double ld = 0.0;
  for (std::size_t j = 0; j < layer.unmasked.size(); ++j) {
    const double sj = clamp_logscale(s[j]);
    double& y = v[layer.unmasked[j]];
    y = (y - t[j]) * std::exp(-sj);
    ld -= sj;
  }
  return ld;
}

double layer_forward(const CouplingLayer& layer, double* v) {
  Buffer a, h, t, s;
  gather(layer, v, a.data());
  net_eval(layer.shift, a.data(), h.data(), t.data());
  net_eval(layer.logscale, a.data(), h.data(), s.data());
  double ld = 0.0;
  for (std::size_t j = 0; j < layer.unmasked.size(); ++j) {
    const double sj = clamp_logscale(s[j]);
    double& x = v[layer.unmasked[j]];
    x = x * std::exp(sj) + t[j];
    ld += sj;
  }
  return ld;
}

void check_dim(const FlowComponent& c, std::size_t n) {
  if (n != c.dim) {
    throw ContractError("flow input has dimension " + std::to_string(n) + ", expected " +
                        std::to_string(c.dim));
  }
}

void check_finite(const Vector& v, double ld, const char* where) {
  if (!v.allFinite() || !std::isfinite(ld)) {
    throw NumericalError(std::string("non-finite value in ") + where);
  }
}

double standard_normal_log_density(const double* z, std::size_t n) {
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i) q += z[i] * z[i];
  return -0.5 * q - 0.5 * static_cast<double>(n) * kLog2Pi;
}

template <typename F>
void for_each_tensor(TinyNet& n, F&& f) {
  f(n.w1);
  f(n.b1);
  f(n.w2);
  f(n.b2);
}

template <typename F>
void for_each_tensor(const TinyNet& n, F&& f) {
  f(n.w1);
  f(n.b1);
  f(n.w2);
  f(n.b2);
}

std::vector<double> flat(const std::vector<double>& v) { return v; }

}  // namespace

TinyNet::TinyNet(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim)
    : in(in_dim), hidden(hidden_dim), out(out_dim),
      w1(hidden_dim * in_dim, 0.0), b1(hidden_dim, 0.0), w2(out_dim * hidden_dim, 0.0), b2(out_dim, 0.0) {
  if (in == 0 || hidden == 0 || out == 0 || in > kMaxWidth || hidden > kMaxWidth || out > kMaxWidth) {
    throw ContractError("coupling network sizes must lie in [1, 64]");
  }
}

std::vector<bool> CouplingLayer::mask(std::size_t dim) const {
  std::vector<bool> m(dim, false);
  for (auto i : masked) m.at(i) = true;
  return m;
}

std::size_t FlowComponent::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

FlowPass flow_forward(const FlowComponent& c, std::span<const double> z) {
  check_dim(c, z.size());
  FlowPass out;
  out.value = Eigen::Map<const Vector>(z.data(), static_cast<Eigen::Index>(z.size()));
  for (const auto& layer : c.layers) out.log_det += layer_forward(layer, out.value.data());
  check_finite(out.value, out.log_det, "flow_forward");
  return out;
}

FlowPass flow_inverse(const FlowComponent& c, std::span<const double> x) {
  check_dim(c, x.size());
  FlowPass out;
  out.value = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  for (auto it = c.layers.rbegin(); it != c.layers.rend(); ++it) {
    out.log_det += layer_inverse(*it, out.value.data());
  }
  check_finite(out.value, out.log_det, "flow_inverse");
  return out;
}

double component_log_density(const FlowComponent& c, std::span<const double> x) {
  check_dim(c, x.size());
  Buffer v;
  std::copy(x.begin(), x.end(), v.begin());
  double ld = 0.0;
  for (auto it = c.layers.rbegin(); it != c.layers.rend(); ++it) ld += layer_inverse(*it, v.data());
  return standard_normal_log_density(v.data(), c.dim) + ld;
}

double component_log_density_gradient(const FlowComponent& c, std::span<const double> x,
                                      double weight, std::span<double> grad) {
  check_dim(c, x.size());
  if (grad.size() != c.parameter_count()) throw ContractError("gradient buffer has wrong size");
  const std::size_t N = c.dim;
  const std::size_t C = c.layers.size();
  // states[l] is the input of the inverse of layer l; states[C] = x.
  thread_local std::vector<double> states;
  thread_local std::vector<std::size_t> offsets;
  states.resize((C + 1) * N);
  offsets.resize(C + 1);
  offsets[0] = 0;
  for (std::size_t l = 0; l < C; ++l) offsets[l + 1] = offsets[l] + c.layers[l].parameter_count();

  std::copy(x.begin(), x.end(), states.begin() + static_cast<std::ptrdiff_t>(C * N));
  double ld = 0.0;
  for (std::size_t l = C; l-- > 0;) {
    std::copy_n(&states[(l + 1) * N], N, &states[l * N]);
    ld += layer_inverse(c.layers[l], &states[l * N]);
  }
  const double* z = &states[0];
  const double logp = standard_normal_log_density(z, N) + ld;

  Buffer g;
  for (std::size_t i = 0; i < N; ++i) g[i] = -weight * z[i];
  for (std::size_t l = 0; l < C; ++l) {
    const CouplingLayer& layer = c.layers[l];
    const double* y = &states[(l + 1) * N];
    const double* u = &states[l * N];
    Buffer a, hs, t, hl, sraw, g_t, g_s, g_a;
    gather(layer, y, a.data());
    net_eval(layer.shift, a.data(), hs.data(), t.data());
    net_eval(layer.logscale, a.data(), hl.data(), sraw.data());
    for (std::size_t i = 0; i < layer.masked.size(); ++i) g_a[i] = g[layer.masked[i]];
    for (std::size_t j = 0; j < layer.unmasked.size(); ++j) {
      const std::size_t idx = layer.unmasked[j];
      const double inv_scale = std::exp(-clamp_logscale(sraw[j]));
      const double g_out = g[idx];
      g_t[j] = -g_out * inv_scale;
      const bool inside = std::abs(sraw[j]) < CouplingLayer::kLogScaleClamp;
      g_s[j] = inside ? (-g_out * u[idx] - weight) : 0.0;
      g[idx] = g_out * inv_scale;
    }
    double* pg = grad.data() + offsets[l];
    net_backward(layer.shift, a.data(), hs.data(), g_t.data(), pg, g_a.data());
    net_backward(layer.logscale, a.data(), hl.data(), g_s.data(), pg + layer.shift.parameter_count(),
                 g_a.data());
    for (std::size_t i = 0; i < layer.masked.size(); ++i) g[layer.masked[i]] = g_a[i];
  }
  return logp;
}

FlowEmission::FlowEmission(std::vector<FlowComponent> components, const Vector& mix_weights)
    : components_(std::move(components)) {
  if (components_.empty()) throw ContractError("flow emission needs at least one component");
  dim_ = components_.front().dim;
  if (dim_ < 2) throw ContractError("flow emissions need input dimension >= 2");
  for (const auto& c : components_) {
    if (c.dim != dim_) throw ContractError("flow components disagree on dimension");
    if (c.dim > kMaxWidth) throw ContractError("flow dimension exceeds 64");
    for (const auto& l : c.layers) {
      if (l.masked.empty() || l.unmasked.empty() || l.masked.size() + l.unmasked.size() != c.dim) {
        throw ContractError("coupling mask must split the coordinates into two nonempty parts");
      }
      if (l.shift.in != l.masked.size() || l.shift.out != l.unmasked.size() ||
          l.logscale.in != l.masked.size() || l.logscale.out != l.unmasked.size()) {
        throw ContractError("coupling network shapes do not match the mask");
      }
    }
  }
  set_mix_weights(mix_weights);
}

void FlowEmission::set_mix_weights(const Vector& weights) {
  if (weights.size() != static_cast<Eigen::Index>(components_.size()) ||
      !(weights.array() >= 0.0).all() || !(weights.sum() > 0.0)) {
    throw ContractError("flow mixture weights must be non-negative, one per component");
  }
  log_mix_weights_ = (weights / weights.sum()).array().log();
}

std::size_t FlowEmission::parameter_count() const {
  std::size_t n = 0;
  for (const auto& c : components_) n += c.parameter_count();
  return n;
}

std::vector<double> FlowEmission::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& c : components_) {
    for (const auto& l : c.layers) {
      for (const TinyNet* net : {&l.shift, &l.logscale}) {
        for_each_tensor(*net, [&](const std::vector<double>& v) { out.insert(out.end(), v.begin(), v.end()); });
      }
    }
  }
  return out;
}

void FlowEmission::set_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) throw ContractError("parameter vector has wrong size");
  std::size_t pos = 0;
  for (auto& c : components_) {
    for (auto& l : c.layers) {
      for (TinyNet* net : {&l.shift, &l.logscale}) {
        for_each_tensor(*net, [&](std::vector<double>& v) {
          std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), v.size(), v.begin());
          pos += v.size();
        });
      }
    }
  }
}

double FlowEmission::log_density(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw ContractError("flow input has dimension " + std::to_string(x.size()) + ", expected " +
                        std::to_string(dim_));
  }
  if (components_.size() == 1) return log_mix_weights_[0] + component_log_density(components_[0], x);
  double acc = kNegInf;
  for (std::size_t m = 0; m < components_.size(); ++m) {
    acc = log_add_exp(acc, log_mix_weights_[static_cast<Eigen::Index>(m)] +
                               component_log_density(components_[m], x));
  }
  return acc;
}

double FlowEmission::log_density_gradient(std::span<const double> x, double weight,
                                          std::span<double> grad) const {
  if (grad.size() != parameter_count()) throw ContractError("gradient buffer has wrong size");
  if (components_.size() == 1) {
    return log_mix_weights_[0] + component_log_density_gradient(components_[0], x, weight, grad);
  }
  // d log p / d theta_m = r_m * d log p_m / d theta_m
  std::vector<double> comp_logp(components_.size());
  double total = kNegInf;
  for (std::size_t m = 0; m < components_.size(); ++m) {
    comp_logp[m] = log_mix_weights_[static_cast<Eigen::Index>(m)] + component_log_density(components_[m], x);
    total = log_add_exp(total, comp_logp[m]);
  }
  std::size_t offset = 0;
  for (std::size_t m = 0; m < components_.size(); ++m) {
    const std::size_t count = components_[m].parameter_count();
    const double r = std::exp(comp_logp[m] - total);
    if (r > 0.0) {
      component_log_density_gradient(components_[m], x, weight * r, grad.subspan(offset, count));
    }
    offset += count;
  }
  return total;
}

void FlowEmission::sample(Rng& rng, std::span<double> out) const {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  double u = uni(rng);
  std::size_t m = 0;
  for (; m + 1 < components_.size(); ++m) {
    u -= std::exp(log_mix_weights_[static_cast<Eigen::Index>(m)]);
    if (u < 0.0) break;
  }
  std::vector<double> z(dim_);
  for (auto& v : z) v = normal(rng);
  const auto x = flow_forward(components_[m], z);
  std::copy(x.value.data(), x.value.data() + x.value.size(), out.begin());
}

MStepReport FlowEmission::m_step(std::span<const Sequence> sequences, std::span<const Vector> weights,
                                 const MStepConfig& cfg, Rng& rng) {
  MStepReport report;
  *this = flow_mstep(*this, sequences, weights, cfg, rng, &report);
  return report;
}

std::unique_ptr<EmissionModel> FlowEmission::clone() const {
  return std::make_unique<FlowEmission>(*this);
}

nlohmann::json FlowEmission::to_json() const {
  nlohmann::json j;
  j["kind"] = "flow";
  j["dim"] = dim_;
  j["log_mix_weights"] = std::vector<double>(log_mix_weights_.data(),
                                             log_mix_weights_.data() + log_mix_weights_.size());
  auto net_json = [](const TinyNet& n) {
    return nlohmann::json{{"w1", flat(n.w1)}, {"b1", flat(n.b1)}, {"w2", flat(n.w2)}, {"b2", flat(n.b2)}};
  };
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : components_) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : c.layers) {
      layers.push_back({{"mask", l.mask(c.dim)},
                        {"hidden", l.shift.hidden},
                        {"shift", net_json(l.shift)},
                        {"logscale", net_json(l.logscale)}});
    }
    comps.push_back({{"layers", layers}});
  }
  j["components"] = comps;
  return j;
}

FlowEmission FlowEmission::from_json(const nlohmann::json& j) {
  const auto dim = j.at("dim").get<std::size_t>();
  const auto lw = j.at("log_mix_weights").get<std::vector<double>>();
  auto read_net = [](const nlohmann::json& nj, std::size_t in, std::size_t hidden, std::size_t out) {
    TinyNet n(in, hidden, out);
    for (const char* key : {"w1", "b1", "w2", "b2"}) {
      auto v = nj.at(key).get<std::vector<double>>();
      auto& dst = key[0] == 'w' ? (key[1] == '1' ? n.w1 : n.w2) : (key[1] == '1' ? n.b1 : n.b2);
      if (v.size() != dst.size()) throw ContractError(std::string("flow tensor '") + key + "' has wrong size");
      dst = std::move(v);
    }
    return n;
  };
  std::vector<FlowComponent> comps;
  for (const auto& cj : j.at("components")) {
    FlowComponent c;
    c.dim = dim;
    for (const auto& lj : cj.at("layers")) {
      const auto mask = lj.at("mask").get<std::vector<bool>>();
      if (mask.size() != dim) throw ContractError("flow mask has wrong length");
      CouplingLayer layer;
      for (std::size_t i = 0; i < dim; ++i) (mask[i] ? layer.masked : layer.unmasked).push_back(i);
      const auto hidden = lj.at("hidden").get<std::size_t>();
      layer.shift = read_net(lj.at("shift"), layer.masked.size(), hidden, layer.unmasked.size());
      layer.logscale = read_net(lj.at("logscale"), layer.masked.size(), hidden, layer.unmasked.size());
      c.layers.push_back(std::move(layer));
    }
    comps.push_back(std::move(c));
  }
  if (lw.size() != comps.size()) throw ContractError("flow mixture weight count mismatch");
  Vector w(static_cast<Eigen::Index>(lw.size()));
  for (std::size_t m = 0; m < lw.size(); ++m) w[static_cast<Eigen::Index>(m)] = std::exp(lw[m]);
  FlowEmission e(std::move(comps), w);
  e.log_mix_weights_ = Eigen::Map<const Vector>(lw.data(), static_cast<Eigen::Index>(lw.size()));
  return e;
}

FlowEmission flow_init(std::size_t dim, std::size_t mixture_size, std::size_t layers,
                       std::uint64_t seed, std::size_t hidden) {
  if (dim < 2) throw ContractError("flow emissions do not support input dimension " + std::to_string(dim));
  if (mixture_size < 1 || layers < 1) throw ContractError("flow_init: mixture size and layer count must be positive");
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(-0.01, 0.01);
  const std::size_t head = (dim + 1) / 2;
  std::vector<FlowComponent> comps;
  for (std::size_t m = 0; m < mixture_size; ++m) {
    FlowComponent c;
    c.dim = dim;
    for (std::size_t l = 0; l < layers; ++l) {
      CouplingLayer layer;
      for (std::size_t i = 0; i < dim; ++i) {
        const bool in_head = i < head;
        ((l % 2 == 0) == in_head ? layer.masked : layer.unmasked).push_back(i);
      }
      layer.shift = TinyNet(layer.masked.size(), hidden, layer.unmasked.size());
      layer.logscale = TinyNet(layer.masked.size(), hidden, layer.unmasked.size());
      for (TinyNet* net : {&layer.shift, &layer.logscale}) {
        for (auto& w : net->w1) w = uni(rng);
        for (auto& w : net->w2) w = uni(rng);
      }
      c.layers.push_back(std::move(layer));
    }
    comps.push_back(std::move(c));
  }
  return FlowEmission(std::move(comps), Vector::Ones(static_cast<Eigen::Index>(mixture_size)));
}

namespace {

struct WeightedIndex {
  std::vector<std::pair<std::size_t, Eigen::Index>> rows;
  std::vector<double> cumulative;

  WeightedIndex(std::span<const Sequence> sequences, std::span<const Vector> weights) {
    double acc = 0.0;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
      if (weights[s].size() != sequences[s].rows()) {
        throw ContractError("weight vector length does not match sequence length");
      }
      for (Eigen::Index t = 0; t < sequences[s].rows(); ++t) {
        const double w = weights[s][t];
        if (w < 0.0) throw ContractError("state weights must be non-negative");
        if (w == 0.0) continue;
        acc += w;
        rows.emplace_back(s, t);
        cumulative.push_back(acc);
      }
    }
  }

  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }

  std::size_t draw(Rng& rng) const {
    std::uniform_real_distribution<double> uni(0.0, total());
    const double u = uni(rng);
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), rows.size() - 1);
  }
};

}  // namespace

FlowEmission flow_mstep(const FlowEmission& e, std::span<const Sequence> sequences,
                        std::span<const Vector> weights, const MStepConfig& cfg, Rng& rng,
                        MStepReport* report) {
  if (sequences.size() != weights.size()) throw ContractError("one weight vector per sequence required");
  if (cfg.gradient_steps < 1) throw ContractError("flow_mstep needs at least one gradient step");
  const WeightedIndex index(sequences, weights);
  const double total = index.total();
  if (!(total > 0.0)) throw ContractError("flow_mstep: all state weights are zero");

  FlowEmission out = e;
  MStepReport rep;
  const std::size_t M = out.mixture_size();
  auto x_of = [&](std::size_t i) {
    return row_span(sequences[index.rows[i].first], index.rows[i].second);
  };
  auto w_of = [&](std::size_t i) { return weights[index.rows[i].first][index.rows[i].second]; };

  // closed-form mixture weights from responsibilities; also yields the
  // objective before the update
  {
    Vector acc = Vector::Zero(static_cast<Eigen::Index>(M));
    std::vector<double> comp(M);
    double objective = 0.0;
    for (std::size_t i = 0; i < index.rows.size(); ++i) {
      const auto x = x_of(i);
      double lse = kNegInf;
      for (std::size_t m = 0; m < M; ++m) {
        comp[m] = out.log_mix_weights()[static_cast<Eigen::Index>(m)] +
                  component_log_density(out.components()[m], x);
        lse = log_add_exp(lse, comp[m]);
      }
      objective += w_of(i) * lse;
      for (std::size_t m = 0; m < M; ++m) acc[static_cast<Eigen::Index>(m)] += w_of(i) * std::exp(comp[m] - lse);
    }
    rep.objective_before = objective;
    if (M > 1) out.set_mix_weights((acc / total).cwiseMax(GmmEmission::kWeightFloor));
  }

  const std::size_t P = out.parameter_count();
  std::vector<double> params = out.parameters();
  std::vector<double> grad(P);
  AdamState state(P);
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= index.rows.size();
  for (int step = 0; step < cfg.gradient_steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    if (full_batch) {
      for (std::size_t i = 0; i < index.rows.size(); ++i) {
        out.log_density_gradient(x_of(i), w_of(i) / total, grad);
      }
    } else {
      const double scale = 1.0 / static_cast<double>(cfg.batch_size);
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        out.log_density_gradient(x_of(index.draw(rng)), scale, grad);
      }
    }
    if (!std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
      rep.aborted = true;
      break;
    }
    adam_step(state, params, grad, cfg.adam);
    out.set_parameters(params);
    ++rep.steps_taken;
  }

  double objective = 0.0;
  for (std::size_t i = 0; i < index.rows.size(); ++i) objective += w_of(i) * out.log_density(x_of(i));
  rep.objective_after = objective;
  if (report) *report = rep;
  return out;
}

void flow_warm_start(FlowEmission& e, std::span<const Sequence> sequences,
                     std::span<const Vector> weights, Rng& rng) {
  if (sequences.size() != weights.size()) throw ContractError("one weight vector per sequence required");
  const WeightedIndex index(sequences, weights);
  if (index.rows.empty()) throw ContractError("flow_warm_start: all weights are zero");
  const auto N = static_cast<Eigen::Index>(e.dim());
  const std::size_t M = e.mixture_size();

  RowMatrix points(static_cast<Eigen::Index>(kWarmStartRows), N);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    const auto& [s, t] = index.rows[index.draw(rng)];
    points.row(r) = sequences[s].row(t);
  }
  const RowMatrix centers = kmeans(points, M, rng);

  std::vector<std::vector<Eigen::Index>> members(M);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    Eigen::Index best = 0;
    (centers.rowwise() - points.row(r)).rowwise().squaredNorm().minCoeff(&best);
    members[static_cast<std::size_t>(best)].push_back(r);
  }
  auto moments = [&](const std::vector<Eigen::Index>& rows) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(N), var = Eigen::RowVectorXd::Zero(N);
    for (auto r : rows) mean += points.row(r);
    mean /= static_cast<double>(rows.size());
    for (auto r : rows) var += (points.row(r) - mean).cwiseAbs2();
    var /= static_cast<double>(rows.size());
    return std::pair{mean, var};
  };
  std::vector<Eigen::Index> all(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index r = 0; r < points.rows(); ++r) all[static_cast<std::size_t>(r)] = r;

  Vector mix(static_cast<Eigen::Index>(M));
  for (std::size_t m = 0; m < M; ++m) {
    const auto& rows = members[m].size() >= 2 ? members[m] : all;
    auto [mean, var] = moments(rows);
    mix[static_cast<Eigen::Index>(m)] =
        std::max(static_cast<double>(members[m].size()) / static_cast<double>(points.rows()), GmmEmission::kWeightFloor);
    FlowComponent& c = e.component(m);
    for (Eigen::Index j = 0; j < N; ++j) {
      // the last layer transforming coordinate j sets its location and scale
      for (std::size_t l = c.layers.size(); l-- > 0;) {
        auto& u = c.layers[l].unmasked;
        auto it = std::find(u.begin(), u.end(), static_cast<std::size_t>(j));
        if (it == u.end()) continue;
        const auto p = static_cast<std::size_t>(it - u.begin());
        const double log_sd = std::clamp(0.5 * std::log(std::max(var[j], 1e-6)), -4.5, 4.5);
        c.layers[l].logscale.b2[p] = log_sd;
        c.layers[l].shift.b2[p] = mean[j];
        break;
      }
    }
  }
  e.set_mix_weights(mix);
}

}  // namespace vitalhmm
