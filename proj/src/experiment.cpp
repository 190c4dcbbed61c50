#include "vitalhmm/experiment.hpp"

#include "vitalhmm/csv_io.hpp"
#include "vitalhmm/errors.hpp"
#include "vitalhmm/flow.hpp"
#include "vitalhmm/gmm.hpp"
#include "vitalhmm/model_io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

namespace vitalhmm {
namespace {

using nlohmann::json;

constexpr std::size_t kWarmStartPoolRows = 20000;

constexpr std::array<std::pair<ModelFamily, std::string_view>, 5> kFamilyNames = {{
    {ModelFamily::GmmHmm, "gmm_hmm"},
    {ModelFamily::FlowHmm, "flow_hmm"},
    {ModelFamily::DflowHmm, "dflow_hmm"},
    {ModelFamily::Logreg, "logreg"},
    {ModelFamily::Elm, "elm"},
}};

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T>
std::vector<T> json_list(const json& j, const char* key, std::vector<T> fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<std::vector<T>>();
}

template <class T, class Parse>
std::vector<T> parse_list(const json& j, const char* key, std::vector<T> fallback, Parse parse) {
  if (!j.contains(key)) return fallback;
  std::vector<T> out;
  for (const auto& item : j.at(key)) out.push_back(parse(item.get<std::string>()));
  return out;
}

template <class T, class Name>
json name_list(const std::vector<T>& values, Name name) {
  json out = json::array();
  for (const auto& v : values) out.push_back(std::string(name(v)));
  return out;
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

std::vector<int> labels_of(std::span<const Frame> frames) {
  std::vector<int> y;
  y.reserve(frames.size());
  for (const auto& f : frames) {
    if (!f.label) throw ContractError("training frames must be labeled");
    y.push_back(*f.label);
  }
  return y;
}

Vector static_vector(const Frame& frame, FeatureMode mode) {
  switch (mode) {
    case FeatureMode::Hrci: return hrci(frame).values;
    case FeatureMode::Pops: return pops(frame).values;
    default: throw ContractError("feature mode '" + std::string(to_string(mode)) + "' is not a static feature");
  }
}

std::vector<std::unique_ptr<EmissionModel>> box(std::vector<GmmEmission> emissions) {
  std::vector<std::unique_ptr<EmissionModel>> out;
  for (auto& e : emissions) out.push_back(std::make_unique<GmmEmission>(std::move(e)));
  return out;
}

HmmModel make_hmm(std::vector<std::unique_ptr<EmissionModel>> emissions, std::uint64_t seed) {
  Rng rng(seed);
  auto [q, A] = initial_markov_parameters(emissions.size(), rng);
  return HmmModel::from_probabilities(q, A, std::move(emissions));
}

/// Hard k-means assignment of every row to one of n states, used to give each
/// state's flows a distinct starting density.
std::vector<std::vector<Vector>> kmeans_state_weights(std::span<const Sequence> seqs, std::size_t n, Rng& rng) {
  const RowMatrix points = pool_rows(seqs, kWarmStartPoolRows, rng);
  const RowMatrix centers = kmeans(points, n, rng);
  std::vector<std::vector<Vector>> weights(n, std::vector<Vector>(seqs.size()));
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    for (std::size_t s = 0; s < n; ++s) weights[s][k] = Vector::Zero(seqs[k].rows());
    for (Eigen::Index t = 0; t < seqs[k].rows(); ++t) {
      Eigen::Index best = 0;
      (centers.rowwise() - seqs[k].row(t)).rowwise().squaredNorm().minCoeff(&best);
      weights[static_cast<std::size_t>(best)][k][t] = 1.0;
    }
  }
  return weights;
}

json trace_json(const std::vector<double>& trace) { return trace; }

struct SequenceData {
  Standardizer standardizer;
  std::vector<Sequence> seqs;
  std::vector<int> labels;
};

SequenceData sequence_data(std::span<const Frame> frames, FeatureMode mode) {
  SequenceData d;
  d.labels = labels_of(frames);
  for (const auto& f : frames) d.seqs.push_back(sequence_features(f, mode).data);
  d.standardizer = Standardizer::fit(d.seqs);
  for (auto& s : d.seqs) s = d.standardizer.apply(s);
  return d;
}

json report_json(const MStepReport& r) {
  return {{"objective_before", r.objective_before}, {"objective_after", r.objective_after},
          {"steps_taken", r.steps_taken}, {"aborted", r.aborted}};
}

ClassifierPair train_hmm_pair(const ExperimentConfig& cfg, const SequenceData& data, const CellSpec& cell,
                              std::uint64_t seed, json& prov) {
  const auto& tr = cfg.training;
  const bool flow = cell.family != ModelFamily::GmmHmm;
  std::array<HmmModel, 2> models;
  std::array<std::size_t, 2> counts{};
  json traces = json::array();
  for (int c = 0; c < 2; ++c) {
    std::vector<Sequence> seqs;
    for (std::size_t i = 0; i < data.seqs.size(); ++i) {
      if (data.labels[i] == c) seqs.push_back(data.seqs[i]);
    }
    counts[static_cast<std::size_t>(c)] = seqs.size();
    if (seqs.empty()) throw FitError("no training frames with label " + std::to_string(c));
    const std::uint64_t class_seed = mix_seed(seed, static_cast<std::uint64_t>(c));
    const auto n = static_cast<std::size_t>(cell.states);

    BaumWelchConfig bw;
    bw.tol = tr.tol;
    bw.seed = mix_seed(class_seed, 3);
    HmmModel init;
    if (!flow) {
      bw.max_iters = tr.gmm_max_iters;
      init = make_hmm(box(gmm_init(seqs, static_cast<std::size_t>(cell.components), n, mix_seed(class_seed, 1))),
                      mix_seed(class_seed, 2));
    } else {
      bw.max_iters = tr.flow_max_iters;
      bw.mstep = tr.flow_mstep;
      const std::size_t dim = static_cast<std::size_t>(seqs.front().cols());
      std::vector<FlowEmission> emissions;
      for (std::size_t s = 0; s < n; ++s) {
        emissions.push_back(flow_init(dim, static_cast<std::size_t>(cell.mixture),
                                      static_cast<std::size_t>(cell.layers), mix_seed(class_seed, 100 + s)));
      }
      if (tr.flow_warm_start) {
        Rng rng(mix_seed(class_seed, 4));
        const auto weights = kmeans_state_weights(seqs, n, rng);
        for (std::size_t s = 0; s < n; ++s) flow_warm_start(emissions[s], seqs, weights[s], rng);
      }
      std::vector<std::unique_ptr<EmissionModel>> boxed;
      for (auto& e : emissions) boxed.push_back(std::make_unique<FlowEmission>(std::move(e)));
      init = make_hmm(std::move(boxed), mix_seed(class_seed, 2));
    }
    auto result = baum_welch(std::move(init), seqs, bw);
    json mstep = json::array();
    for (const auto& r : result.last_mstep) mstep.push_back(report_json(r));
    traces.push_back({{"label", c}, {"loglik_trace", trace_json(result.loglik_trace)},
                      {"iterations", result.iterations}, {"last_mstep", mstep}});
    models[static_cast<std::size_t>(c)] = std::move(result.model);
  }
  const auto [lp0, lp1] = log_priors_from_counts(counts[0], counts[1]);
  prov["baum_welch"] = traces;
  prov["train_counts"] = {counts[0], counts[1]};
  return {std::move(models[0]), std::move(models[1]), lp0, lp1};
}

std::vector<double> split_params(std::string_view params) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < params.size()) {
    const auto end = std::min(params.find(';', pos), params.size());
    const auto item = params.substr(pos, end - pos);
    const auto eq = item.find('=');
    const std::string value(eq == std::string_view::npos ? item : item.substr(eq + 1));
    char* stop = nullptr;
    const double v = std::strtod(value.c_str(), &stop);
    out.push_back(stop != value.c_str() ? v : 0.0);
    pos = end + 1;
  }
  return out;
}

std::string sanitize(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') {
      out.push_back(c);
    } else if (c == ';') {
      out.push_back('_');
    }
  }
  return out;
}

std::string clean_field(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t max_fields) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (out.size() + 1 < max_fields) {
    const auto comma = line.find(',', pos);
    if (comma == std::string::npos) break;
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  out.push_back(line.substr(pos));
  return out;
}

double parse_number(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw IoError("malformed number '" + text + "' in result table");
  }
  if (used != text.size()) throw IoError("malformed number '" + text + "' in result table");
  return v;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

ModelFamily parse_model_family(std::string_view text) {
  for (const auto& [f, name] : kFamilyNames) {
    if (name == text) return f;
  }
  throw ConfigError("unknown model family '" + std::string(text) + "'");
}

std::string_view to_string(ModelFamily family) {
  for (const auto& [f, name] : kFamilyNames) {
    if (f == family) return name;
  }
  return "unknown";
}

bool is_hmm_family(ModelFamily family) {
  return family == ModelFamily::GmmHmm || family == ModelFamily::FlowHmm || family == ModelFamily::DflowHmm;
}

void ExperimentConfig::validate() const {
  if (!data.synthetic && data.signals_dir.empty()) throw ConfigError("no data source configured");
  if (!data.synthetic && data.events_csv.empty()) throw ConfigError("CSV data source needs an events file");
  if (models.empty()) throw ConfigError("no model families selected");
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  auto positive = [](const std::vector<int>& v, const char* what) {
    if (v.empty()) throw ConfigError(std::string(what) + " grid is empty");
    for (int x : v) {
      if (x < 1) throw ConfigError(std::string(what) + " grid values must be positive");
    }
  };
  auto uses = [&](ModelFamily f) { return std::find(models.begin(), models.end(), f) != models.end(); };
  const bool any_hmm = uses(ModelFamily::GmmHmm) || uses(ModelFamily::FlowHmm) || uses(ModelFamily::DflowHmm);
  if (any_hmm) {
    positive(states, "states");
    if (hmm_features.empty()) throw ConfigError("hmm_features is empty");
    for (auto m : hmm_features) {
      if (!is_sequence_mode(m)) throw ConfigError("HMM features must be raw or deriv");
    }
  }
  if (uses(ModelFamily::GmmHmm)) positive(gmm_components, "gmm_components");
  if (uses(ModelFamily::FlowHmm) || uses(ModelFamily::DflowHmm)) {
    positive(flow_layers, "flow_layers");
    positive(flow_mixture, "flow_mixture");
  }
  if (uses(ModelFamily::Logreg)) {
    if (logreg_features.empty()) throw ConfigError("logreg_features is empty");
    for (auto m : logreg_features) {
      if (m != FeatureMode::Hrci && m != FeatureMode::Pops) throw ConfigError("logreg features must be hrci or pops");
    }
    if (training.logreg_folds < 2) throw ConfigError("logreg_folds must be at least 2");
    if (training.logreg_grid_lo > training.logreg_grid_hi) throw ConfigError("logreg_grid is empty");
  }
  if (uses(ModelFamily::Elm)) {
    if (elm_features.empty()) throw ConfigError("elm_features is empty");
    for (auto m : elm_features) {
      if (m != FeatureMode::Flat) throw ConfigError("the ELM consumes flattened frames; elm_features must be flat");
    }
    if (training.elm_hidden < 1) throw ConfigError("elm_hidden must be positive");
    if (!(training.elm_ridge >= 0.0)) throw ConfigError("elm_ridge must be non-negative");
  }
  if (training.gmm_max_iters < 0 || training.flow_max_iters < 0) throw ConfigError("iteration caps must be >= 0");
  if (training.flow_mstep.gradient_steps < 1) throw ConfigError("flow_gradient_steps must be positive");
  if (training.discriminative.epochs < 1) throw ConfigError("dflow_epochs must be at least 1");
  if (training.discriminative.batch_size < 1) throw ConfigError("dflow_batch_size must be at least 1");
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig cfg;
  try {
    check_keys(j,
               {"data", "models", "hmm_features", "logreg_features", "elm_features", "states", "gmm_components",
                "flow_layers", "flow_mixture", "repeats", "test_fraction", "seed", "output_dir", "training"},
               "config");
    const json data = j.value("data", json{{"synthetic", json::object()}});
    check_keys(data, {"synthetic", "seed", "signals_dir", "events_csv"}, "data");
    if (data.contains("synthetic")) cfg.data.synthetic = synth_spec_from_json(data.at("synthetic"));
    cfg.data.synthetic_seed = data.value("seed", std::uint64_t{0});
    if (data.contains("signals_dir")) cfg.data.signals_dir = data.at("signals_dir").get<std::string>();
    if (data.contains("events_csv")) cfg.data.events_csv = data.at("events_csv").get<std::string>();

    cfg.models = parse_list(j, "models", cfg.models, parse_model_family);
    cfg.hmm_features = parse_list(j, "hmm_features", cfg.hmm_features, parse_feature_mode);
    cfg.logreg_features = parse_list(j, "logreg_features", cfg.logreg_features, parse_feature_mode);
    cfg.elm_features = parse_list(j, "elm_features", cfg.elm_features, parse_feature_mode);
    cfg.states = json_list(j, "states", cfg.states);
    cfg.gmm_components = json_list(j, "gmm_components", cfg.gmm_components);
    cfg.flow_layers = json_list(j, "flow_layers", cfg.flow_layers);
    cfg.flow_mixture = json_list(j, "flow_mixture", cfg.flow_mixture);
    cfg.repeats = j.value("repeats", cfg.repeats);
    cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("training")) {
      const json& t = j.at("training");
      check_keys(t,
                 {"gmm_max_iters", "flow_max_iters", "tol", "flow_gradient_steps", "flow_batch_size",
                  "flow_learning_rate", "flow_warm_start", "dflow_epochs", "dflow_batch_size",
                  "dflow_learning_rate", "elm_hidden", "elm_ridge", "logreg_folds", "logreg_grid"},
                 "training");
      auto& tr = cfg.training;
      tr.gmm_max_iters = t.value("gmm_max_iters", tr.gmm_max_iters);
      tr.flow_max_iters = t.value("flow_max_iters", tr.flow_max_iters);
      tr.tol = t.value("tol", tr.tol);
      tr.flow_mstep.gradient_steps = t.value("flow_gradient_steps", tr.flow_mstep.gradient_steps);
      tr.flow_mstep.batch_size = t.value("flow_batch_size", tr.flow_mstep.batch_size);
      tr.flow_mstep.adam.step_size = t.value("flow_learning_rate", tr.flow_mstep.adam.step_size);
      tr.flow_warm_start = t.value("flow_warm_start", tr.flow_warm_start);
      tr.discriminative.epochs = t.value("dflow_epochs", tr.discriminative.epochs);
      tr.discriminative.batch_size = t.value("dflow_batch_size", tr.discriminative.batch_size);
      tr.discriminative.adam.step_size = t.value("dflow_learning_rate", tr.discriminative.adam.step_size);
      tr.elm_hidden = t.value("elm_hidden", tr.elm_hidden);
      tr.elm_ridge = t.value("elm_ridge", tr.elm_ridge);
      tr.logreg_folds = t.value("logreg_folds", tr.logreg_folds);
      if (t.contains("logreg_grid")) {
        const auto g = t.at("logreg_grid").get<std::vector<int>>();
        if (g.size() != 2) throw ConfigError("logreg_grid must be [lowest decade, highest decade]");
        tr.logreg_grid_lo = g[0];
        tr.logreg_grid_hi = g[1];
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json data = json::object();
  if (cfg.data.synthetic) {
    data["synthetic"] = to_json(*cfg.data.synthetic);
    data["seed"] = cfg.data.synthetic_seed;
  } else {
    data["signals_dir"] = cfg.data.signals_dir.string();
    data["events_csv"] = cfg.data.events_csv.string();
  }
  const auto& tr = cfg.training;
  return {
      {"data", data},
      {"models", name_list(cfg.models, [](ModelFamily f) { return to_string(f); })},
      {"hmm_features", name_list(cfg.hmm_features, [](FeatureMode m) { return to_string(m); })},
      {"logreg_features", name_list(cfg.logreg_features, [](FeatureMode m) { return to_string(m); })},
      {"elm_features", name_list(cfg.elm_features, [](FeatureMode m) { return to_string(m); })},
      {"states", cfg.states},
      {"gmm_components", cfg.gmm_components},
      {"flow_layers", cfg.flow_layers},
      {"flow_mixture", cfg.flow_mixture},
      {"repeats", cfg.repeats},
      {"test_fraction", cfg.test_fraction},
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir.string()},
      {"training",
       {{"gmm_max_iters", tr.gmm_max_iters},
        {"flow_max_iters", tr.flow_max_iters},
        {"tol", tr.tol},
        {"flow_gradient_steps", tr.flow_mstep.gradient_steps},
        {"flow_batch_size", tr.flow_mstep.batch_size},
        {"flow_learning_rate", tr.flow_mstep.adam.step_size},
        {"flow_warm_start", tr.flow_warm_start},
        {"dflow_epochs", tr.discriminative.epochs},
        {"dflow_batch_size", tr.discriminative.batch_size},
        {"dflow_learning_rate", tr.discriminative.adam.step_size},
        {"elm_hidden", tr.elm_hidden},
        {"elm_ridge", tr.elm_ridge},
        {"logreg_folds", tr.logreg_folds},
        {"logreg_grid", {tr.logreg_grid_lo, tr.logreg_grid_hi}}}},
  };
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig cfg = experiment_config_from_json(j);
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(cfg.data.signals_dir);
  resolve(cfg.data.events_csv);
  return cfg;
}

std::string CellSpec::params(const TrainingConfig& training) const {
  switch (family) {
    case ModelFamily::GmmHmm: return "n=" + std::to_string(states) + ";K=" + std::to_string(components);
    case ModelFamily::FlowHmm:
    case ModelFamily::DflowHmm:
      return "n=" + std::to_string(states) + ";C=" + std::to_string(layers) + ";M=" + std::to_string(mixture);
    case ModelFamily::Elm: return "h=" + std::to_string(training.elm_hidden);
    case ModelFamily::Logreg: return "";
  }
  return "";
}

std::string CellSpec::key(const TrainingConfig& training) const {
  std::string k = std::string(to_string(family)) + "-" + std::string(to_string(features));
  const auto p = params(training);
  if (!p.empty()) k += "-" + sanitize(p);
  return k;
}

std::vector<CellSpec> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<CellSpec> cells;
  for (ModelFamily f : cfg.models) {
    switch (f) {
      case ModelFamily::GmmHmm:
        for (auto m : cfg.hmm_features)
          for (int n : cfg.states)
            for (int K : cfg.gmm_components) cells.push_back({f, m, n, K, 0, 0});
        break;
      case ModelFamily::FlowHmm:
      case ModelFamily::DflowHmm:
        for (auto m : cfg.hmm_features)
          for (int n : cfg.states)
            for (int C : cfg.flow_layers)
              for (int M : cfg.flow_mixture) cells.push_back({f, m, n, 0, C, M});
        break;
      case ModelFamily::Logreg:
        for (auto m : cfg.logreg_features) cells.push_back({f, m});
        break;
      case ModelFamily::Elm:
        for (auto m : cfg.elm_features) cells.push_back({f, m});
        break;
    }
  }
  // flows before their discriminative refinements so the shared pair is cached
  std::stable_sort(cells.begin(), cells.end(), [](const CellSpec& a, const CellSpec& b) {
    return a.family == ModelFamily::FlowHmm && b.family == ModelFamily::DflowHmm;
  });
  return cells;
}

Dataset load_dataset(const DataSource& source) {
  std::vector<Recording> recordings;
  std::vector<EhrEvent> events;
  if (source.synthetic) {
    auto corpus = synth_generate(*source.synthetic, source.synthetic_seed);
    recordings = std::move(corpus.recordings);
    events = std::move(corpus.events);
  } else {
    std::tie(recordings, events) = read_corpus(source.signals_dir, source.events_csv);
  }
  std::vector<Frame> frames;
  for (const auto& r : recordings) {
    auto f = segment(r);
    std::move(f.begin(), f.end(), std::back_inserter(frames));
  }
  return label_frames(std::move(frames), events);
}

std::uint64_t split_seed(const ExperimentConfig& cfg, int repeat) {
  return mix_seed(cfg.seed, static_cast<std::uint64_t>(repeat));
}

int TrainedModel::predict(const Frame& frame) const {
  if (const auto* pair = std::get_if<ClassifierPair>(&model)) {
    return classify(*pair, standardizer.apply(sequence_features(frame, features).data)).label;
  }
  if (const auto* lr = std::get_if<LogisticModel>(&model)) {
    return lr->predict(standardizer.apply(static_vector(frame, features)));
  }
  const auto& elm = std::get<ElmModel>(model);
  return elm.predict(flatten(standardizer.apply(frame.data)));
}

double TrainedModel::accuracy(std::span<const Frame> frames) const {
  if (frames.empty()) throw ContractError("no frames to evaluate");
  std::vector<int> pred;
  for (const auto& f : frames) pred.push_back(predict(f));
  return vitalhmm::accuracy(pred, labels_of(frames));
}

json to_json(const TrainedModel& m) {
  json meta = {{"family", to_string(m.family)},
               {"features", to_string(m.features)},
               {"standardizer", m.standardizer.to_json()},
               {"provenance", m.provenance}};
  json out;
  if (const auto* pair = std::get_if<ClassifierPair>(&m.model)) {
    meta["discriminative"] = m.family == ModelFamily::DflowHmm;
    return pair_to_json(*pair, meta);
  }
  out = std::holds_alternative<LogisticModel>(m.model) ? to_json(std::get<LogisticModel>(m.model))
                                                        : to_json(std::get<ElmModel>(m.model));
  out.update(meta);
  return out;
}

TrainedModel trained_model_from_json(const json& j) {
  TrainedModel m;
  try {
    m.family = parse_model_family(j.at("family").get<std::string>());
    m.features = parse_feature_mode(j.at("features").get<std::string>());
    m.standardizer = Standardizer::from_json(j.at("standardizer"));
    m.provenance = j.value("provenance", json::object());
  } catch (const json::exception& e) {
    throw IoError(std::string("trained model record: ") + e.what());
  }
  switch (m.family) {
    case ModelFamily::Logreg: m.model = logistic_from_json(j); break;
    case ModelFamily::Elm: m.model = elm_from_json(j); break;
    default: m.model = pair_from_json(j); break;
  }
  return m;
}

TrainedModel train_cell(const ExperimentConfig& cfg, const Dataset& train, const CellSpec& cell,
                        std::uint64_t seed, FlowPairCache* cache) {
  TrainedModel out;
  out.family = cell.family;
  out.features = cell.features;
  json prov = {{"train_patients", train.patients}, {"seed", seed}};
  const auto& tr = cfg.training;

  if (is_hmm_family(cell.family)) {
    const SequenceData data = sequence_data(train.frames, cell.features);
    out.standardizer = data.standardizer;
    ClassifierPair pair;
    if (cell.family == ModelFamily::GmmHmm) {
      pair = train_hmm_pair(cfg, data, cell, seed, prov);
    } else {
      CellSpec flow_cell = cell;
      flow_cell.family = ModelFamily::FlowHmm;
      const std::string cache_key = flow_cell.key(tr);
      if (cache && cache->count(cache_key)) {
        pair = cache->at(cache_key);
        prov["flow_pair"] = "cached";
      } else {
        pair = train_hmm_pair(cfg, data, flow_cell, seed, prov);
        if (cache) cache->emplace(cache_key, pair);
      }
      if (cell.family == ModelFamily::DflowHmm) {
        std::vector<LabeledSequence> labeled;
        for (std::size_t i = 0; i < data.seqs.size(); ++i) labeled.push_back({&data.seqs[i], data.labels[i]});
        DiscriminativeConfig dc = tr.discriminative;
        dc.seed = mix_seed(seed, 7);
        FinetuneReport rep;
        pair = discriminative_finetune(std::move(pair), labeled, dc, &rep);
        prov["finetune"] = {{"batches_run", rep.batches_run}, {"batches_skipped", rep.batches_skipped}};
      }
    }
    prov["log_priors"] = {pair.log_prior0, pair.log_prior1};
    out.model = std::move(pair);
    out.provenance = std::move(prov);
    return out;
  }

  const std::vector<int> y = labels_of(train.frames);
  if (train.frames.empty()) throw FitError("no training frames");
  if (cell.family == ModelFamily::Logreg) {
    std::vector<Sequence> rows;
    for (const auto& f : train.frames) rows.push_back(static_vector(f, cell.features).transpose());
    out.standardizer = Standardizer::fit(rows);
    Matrix X(static_cast<Eigen::Index>(rows.size()), rows.front().cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      X.row(static_cast<Eigen::Index>(i)) = out.standardizer.apply(Vector(rows[i].row(0).transpose())).transpose();
    }
    const auto grid = decade_grid(tr.logreg_grid_lo, tr.logreg_grid_hi);
    auto cv = logreg_cv_grid(X, y, grid, tr.logreg_folds, mix_seed(seed, 5));
    prov["lambda"] = cv.chosen_lambda;
    prov["cv_accuracy"] = cv.cv_accuracy;
    out.model = std::move(cv.model);
  } else {
    if (cell.features != FeatureMode::Flat) throw ConfigError("the ELM consumes flattened frames");
    std::vector<Sequence> raw;
    for (const auto& f : train.frames) raw.push_back(f.data);
    out.standardizer = Standardizer::fit(raw);
    Matrix X(static_cast<Eigen::Index>(raw.size()), raw.front().size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      X.row(static_cast<Eigen::Index>(i)) = flatten(out.standardizer.apply(raw[i])).transpose();
    }
    out.model = elm_fit(X, y, tr.elm_hidden, tr.elm_ridge, mix_seed(seed, 6));
  }
  out.provenance = std::move(prov);
  return out;
}

namespace {

std::uint64_t cell_seed(const ExperimentConfig& cfg, const CellSpec& cell, int repeat) {
  // Flow and dFlow cells with equal hyper-parameters share a seed so the
  // discriminative model refines exactly the generative one.
  const std::string tag = std::string(to_string(cell.features)) + "|" + cell.params(cfg.training) + "|" +
                          (is_hmm_family(cell.family) ? "hmm" : std::string(to_string(cell.family)));
  return mix_seed(split_seed(cfg, repeat), fnv1a(tag));
}

CellRun run_on_split(const ExperimentConfig& cfg, const Dataset& train, const Dataset& test, const CellSpec& cell,
                     int repeat, FlowPairCache* cache) {
  CellRun run;
  run.cell = cell;
  run.repeat = repeat;
  run.seed = cell_seed(cfg, cell, repeat);
  run.log = {{"model", to_string(cell.family)},
             {"features", to_string(cell.features)},
             {"params", cell.params(cfg.training)},
             {"repeat", repeat},
             {"split_seed", split_seed(cfg, repeat)},
             {"seed", run.seed},
             {"test_fraction", cfg.test_fraction},
             {"train_patients", train.patients},
             {"test_patients", test.patients}};
  try {
    TrainedModel model = train_cell(cfg, train, cell, run.seed, cache);
    run.accuracy = model.accuracy(test.frames);
    run.ok = true;
    run.log["standardizer"] = model.standardizer.to_json();
    run.log["provenance"] = model.provenance;
    run.log["accuracy"] = run.accuracy;
    run.log["status"] = "ok";
  } catch (const std::exception& e) {
    const auto* err = dynamic_cast<const Error*>(&e);
    run.error = std::string(err ? err->category() : "internal") + ": " + e.what();
    run.log["status"] = "failed";
    run.log["error"] = run.error;
  }
  return run;
}

}  // namespace

CellRun run_cell(const ExperimentConfig& cfg, const Dataset& data, const CellSpec& cell, int repeat,
                 FlowPairCache* cache) {
  const auto [train, test] = patient_split(data, cfg.test_fraction, split_seed(cfg, repeat));
  return run_on_split(cfg, train, test, cell, repeat, cache);
}

double ResultRow::mean() const {
  if (accuracies.empty()) return std::numeric_limits<double>::quiet_NaN();
  // equal repeats report their common value exactly
  if (std::all_of(accuracies.begin(), accuracies.end(), [&](double a) { return a == accuracies.front(); })) {
    return accuracies.front();
  }
  double s = 0.0;
  for (double a : accuracies) s += a;
  return s / static_cast<double>(accuracies.size());
}

double ResultRow::stddev() const {
  if (accuracies.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean();
  double s = 0.0;
  for (double a : accuracies) s += (a - m) * (a - m);
  return std::sqrt(s / static_cast<double>(accuracies.size()));
}

void ResultTable::sort() {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.model != b.model) return a.model < b.model;
    if (a.features != b.features) return a.features < b.features;
    const auto pa = split_params(a.params);
    const auto pb = split_params(b.params);
    if (pa != pb) return pa < pb;
    return a.params < b.params;
  });
}

const ResultRow* ResultTable::find(std::string_view model, std::string_view features, std::string_view params) const {
  for (const auto& r : rows) {
    if (r.model == model && r.features == features && r.params == params) return &r;
  }
  return nullptr;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg, const Dataset& data) {
  cfg.validate();
  const auto cells = enumerate_cells(cfg);
  ExperimentOutput out;
  std::map<std::string, ResultRow> rows;
  for (const auto& cell : cells) {
    ResultRow r;
    r.model = to_string(cell.family);
    r.features = to_string(cell.features);
    r.params = cell.params(cfg.training);
    rows.emplace(cell.key(cfg.training), std::move(r));
  }
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    std::optional<std::pair<Dataset, Dataset>> split;
    std::string split_error;
    try {
      split = patient_split(data, cfg.test_fraction, split_seed(cfg, rep));
    } catch (const Error& e) {
      split_error = std::string(e.category()) + ": " + e.what();
    }
    FlowPairCache cache;
    for (const auto& cell : cells) {
      CellRun run;
      if (split) {
        run = run_on_split(cfg, split->first, split->second, cell, rep, &cache);
      } else {
        run.cell = cell;
        run.repeat = rep;
        run.error = split_error;
        run.log = {{"status", "failed"}, {"error", split_error}, {"repeat", rep}};
      }
      ResultRow& row = rows.at(cell.key(cfg.training));
      if (run.ok) {
        row.accuracies.push_back(run.accuracy);
      } else {
        ++row.failed;
        if (row.error.empty()) row.error = run.error;
      }
      out.runs.push_back(std::move(run));
    }
  }
  for (auto& [_, r] : rows) out.table.rows.push_back(std::move(r));
  out.table.sort();
  return out;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_experiment(cfg, load_dataset(cfg.data));
}

std::string render_csv(const ResultTable& table) {
  std::ostringstream os;
  os << "model,features,params,status,mean,std,accuracies,failed,error\n";
  for (const auto& r : table.rows) {
    os << r.model << ',' << r.features << ',' << r.params << ',' << (r.ok() ? "ok" : "failed") << ',';
    if (!r.accuracies.empty()) os << format_double(r.mean()) << ',' << format_double(r.stddev());
    else os << ',';
    os << ',';
    for (std::size_t i = 0; i < r.accuracies.size(); ++i) os << (i ? ";" : "") << format_double(r.accuracies[i]);
    os << ',' << r.failed << ',' << clean_field(r.error) << '\n';
  }
  return os.str();
}

ResultTable parse_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "model,features,params,status,mean,std,accuracies,failed,error") {
    throw IoError("result table header not recognized");
  }
  ResultTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line, 9);
    if (f.size() != 9) throw IoError("result table row has " + std::to_string(f.size()) + " fields");
    ResultRow r;
    r.model = f[0];
    r.features = f[1];
    r.params = f[2];
    std::size_t pos = 0;
    while (pos < f[6].size()) {
      const auto end = std::min(f[6].find(';', pos), f[6].size());
      r.accuracies.push_back(parse_number(f[6].substr(pos, end - pos)));
      pos = end + 1;
    }
    r.failed = static_cast<int>(parse_number(f[7]));
    r.error = f[8];
    if (!r.accuracies.empty() && (parse_number(f[4]) != r.mean() || parse_number(f[5]) != r.stddev())) {
      throw IoError("result table row " + r.model + " " + r.params + " has inconsistent mean/std");
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::string render_markdown(const ResultTable& table) {
  double best = -1.0;
  for (const auto& r : table.rows) {
    if (r.ok()) best = std::max(best, r.mean());
  }
  std::ostringstream os;
  os << "| Model | Features | Params | Accuracy | Repeats |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& r : table.rows) {
    os << "| " << r.model << " | " << r.features << " | " << (r.params.empty() ? "-" : r.params) << " | ";
    if (r.ok()) {
      const std::string m = fixed3(r.mean());
      os << (r.mean() == best ? "**" + m + "**" : m) << " ± " << fixed3(r.stddev());
    } else {
      os << "failed (" << clean_field(r.error) << ")";
    }
    os << " | " << r.accuracies.size() << "/" << r.accuracies.size() + static_cast<std::size_t>(r.failed) << " |\n";
  }
  return os.str();
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::Csv;
  if (text == "markdown" || text == "md") return ReportFormat::Markdown;
  throw ConfigError("unknown report format '" + std::string(text) + "'");
}

void write_report(const ResultTable& table, ReportFormat format, const std::filesystem::path& path) {
  if (table.rows.empty()) throw ContractError("cannot report an empty table");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (format == ReportFormat::Csv ? render_csv(table) : render_markdown(table));
  if (!out) throw IoError("write failed for " + path.string());
}

std::filesystem::path make_run_directory(const std::filesystem::path& root) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "run-%Y%m%dT%H%M%SZ", &utc);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  for (int i = 0;; ++i) {
    const auto dir = root / (i == 0 ? std::string(stamp) : std::string(stamp) + "-" + std::to_string(i));
    if (std::filesystem::create_directory(dir, ec)) return dir;
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
}

void write_experiment_outputs(const std::filesystem::path& run_dir, const ExperimentConfig& cfg,
                              const ExperimentOutput& output) {
  std::error_code ec;
  std::filesystem::create_directories(run_dir / "cells", ec);
  if (ec) throw IoError("cannot create " + (run_dir / "cells").string() + ": " + ec.message());
  save_json(run_dir / "config.json", to_json(cfg));
  write_report(output.table, ReportFormat::Csv, run_dir / "results.csv");
  write_report(output.table, ReportFormat::Markdown, run_dir / "results.md");
  for (const auto& run : output.runs) {
    save_json(run_dir / "cells" / (run.cell.key(cfg.training) + "_r" + std::to_string(run.repeat) + ".json"),
              run.log);
  }
}

}  // namespace vitalhmm
