#pragma once

#include "vitalhmm/baselines.hpp"
#include "vitalhmm/discriminative.hpp"
#include "vitalhmm/features.hpp"
#include "vitalhmm/hmm.hpp"
#include "vitalhmm/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace vitalhmm {

enum class ModelFamily { GmmHmm, FlowHmm, DflowHmm, Logreg, Elm };

ModelFamily parse_model_family(std::string_view text);
std::string_view to_string(ModelFamily family);
bool is_hmm_family(ModelFamily family);

struct DataSource {
  std::optional<SynthSpec> synthetic;
  std::uint64_t synthetic_seed = 0;
  std::filesystem::path signals_dir;
  std::filesystem::path events_csv;
};

struct TrainingConfig {
  int gmm_max_iters = 30;
  int flow_max_iters = 30;
  double tol = 1e-3;
  MStepConfig flow_mstep;
  bool flow_warm_start = true;
  DiscriminativeConfig discriminative;
  std::size_t elm_hidden = 100;
  double elm_ridge = 1e-2;
  int logreg_folds = 3;
  int logreg_grid_lo = -5;
  int logreg_grid_hi = 5;
};

struct ExperimentConfig {
  DataSource data;
  std::vector<ModelFamily> models{ModelFamily::GmmHmm, ModelFamily::FlowHmm, ModelFamily::DflowHmm,
                                  ModelFamily::Logreg, ModelFamily::Elm};
  std::vector<FeatureMode> hmm_features{FeatureMode::Raw, FeatureMode::Deriv};
  std::vector<FeatureMode> logreg_features{FeatureMode::Hrci, FeatureMode::Pops};
  std::vector<FeatureMode> elm_features{FeatureMode::Flat};
  std::vector<int> states{3, 6, 9};
  std::vector<int> gmm_components{2, 4, 6, 8, 10, 12};
  std::vector<int> flow_layers{4, 8};
  std::vector<int> flow_mixture{1, 2};
  int repeats = 3;
  double test_fraction = 0.3;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";
  TrainingConfig training;

  /// Throws ConfigError on empty grids or out-of-range values.
  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// One grid cell: model family, feature mode and hyper-parameters. Unused
/// hyper-parameters are zero.
struct CellSpec {
  ModelFamily family = ModelFamily::GmmHmm;
  FeatureMode features = FeatureMode::Raw;
  int states = 0;
  int components = 0;  // gmm K
  int layers = 0;      // coupling layers per flow
  int mixture = 0;     // flows per state

  /// e.g. "n=3;K=2", "n=3;C=4;M=1", "h=100"; empty for logistic regression.
  std::string params(const TrainingConfig& training) const;
  std::string key(const TrainingConfig& training) const;
};

/// Grid cells in report order.
std::vector<CellSpec> enumerate_cells(const ExperimentConfig& cfg);

/// Labeled frames of the configured corpus.
Dataset load_dataset(const DataSource& source);

/// Seed of the patient split for a repeat.
std::uint64_t split_seed(const ExperimentConfig& cfg, int repeat);

/// A fitted model plus the preprocessing it expects.
struct TrainedModel {
  ModelFamily family = ModelFamily::GmmHmm;
  FeatureMode features = FeatureMode::Raw;
  Standardizer standardizer;
  std::variant<ClassifierPair, LogisticModel, ElmModel> model;
  nlohmann::json provenance;  // training patients, seeds, priors, lambda, ...

  int predict(const Frame& frame) const;
  double accuracy(std::span<const Frame> frames) const;
};

nlohmann::json to_json(const TrainedModel& m);
TrainedModel trained_model_from_json(const nlohmann::json& j);

/// Generatively trained flow pairs keyed by (features, n, C, M), shared by
/// the Flow-HMM and dFlow-HMM cells of one split.
using FlowPairCache = std::map<std::string, ClassifierPair>;

/// Trains one cell on the training side of a split. Deterministic given the
/// config, the split and the cell.
TrainedModel train_cell(const ExperimentConfig& cfg, const Dataset& train, const CellSpec& cell,
                        std::uint64_t seed, FlowPairCache* cache = nullptr);

struct CellRun {
  CellSpec cell;
  int repeat = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double accuracy = 0.0;
  std::string error;
  nlohmann::json log;
};

/// Splits for `repeat`, trains the cell and scores the test side.
CellRun run_cell(const ExperimentConfig& cfg, const Dataset& data, const CellSpec& cell, int repeat,
                 FlowPairCache* cache = nullptr);

struct ResultRow {
  std::string model;
  std::string features;
  std::string params;
  std::vector<double> accuracies;  // successful repeats in repeat order
  int failed = 0;
  std::string error;  // first failure message

  bool ok() const { return failed == 0 && !accuracies.empty(); }
  double mean() const;
  double stddev() const;  // population standard deviation
};

struct ResultTable {
  std::vector<ResultRow> rows;

  /// Orders rows by (model, features, params) with numeric comparison of
  /// hyper-parameter values.
  void sort();
  const ResultRow* find(std::string_view model, std::string_view features, std::string_view params) const;
};

struct ExperimentOutput {
  ResultTable table;
  std::vector<CellRun> runs;
};

/// Full sweep: every repeat of every grid cell. Failed cells are recorded and
/// the sweep continues.
ExperimentOutput run_experiment(const ExperimentConfig& cfg, const Dataset& data);
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

std::string render_csv(const ResultTable& table);
ResultTable parse_csv(std::string_view text);
/// Markdown table with the best mean accuracy in bold.
std::string render_markdown(const ResultTable& table);

enum class ReportFormat { Csv, Markdown };
ReportFormat parse_report_format(std::string_view text);
void write_report(const ResultTable& table, ReportFormat format, const std::filesystem::path& path);

/// Creates `<root>/run-<stamp>` (suffixing a counter on collision).
std::filesystem::path make_run_directory(const std::filesystem::path& root);

/// Writes config.json, results.csv, results.md and cells/<key>_r<k>.json.
void write_experiment_outputs(const std::filesystem::path& run_dir, const ExperimentConfig& cfg,
                              const ExperimentOutput& output);

}  // namespace vitalhmm
