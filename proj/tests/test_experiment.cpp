#include "vitalhmm/errors.hpp"
#include "vitalhmm/experiment.hpp"

#include <gtest/gtest.h>

#include <set>

namespace vitalhmm {
namespace {

using nlohmann::json;

/// Small, well separated corpus: GMM-HMMs should classify it perfectly.
ExperimentConfig small_config() {
  ExperimentConfig cfg;
  SynthSpec spec;
  spec.patients = 6;
  spec.septic_patients = 3;
  spec.recording_hours = 2;
  spec.separation = 3.0;
  cfg.data.synthetic = spec;
  cfg.data.synthetic_seed = 3;
  cfg.models = {ModelFamily::GmmHmm};
  cfg.hmm_features = {FeatureMode::Raw};
  cfg.states = {2};
  cfg.gmm_components = {1};
  cfg.repeats = 2;
  cfg.seed = 11;
  cfg.training.gmm_max_iters = 10;
  return cfg;
}

TEST(Config, DefaultsValidate) {
  ExperimentConfig cfg;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.data.synthetic = SynthSpec{};
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_NO_THROW(experiment_config_from_json(json::object()).validate());
}

TEST(Config, JsonRoundTrip) {
  const ExperimentConfig cfg = small_config();
  const ExperimentConfig back = experiment_config_from_json(json::parse(to_json(cfg).dump()));
  EXPECT_EQ(to_json(back), to_json(cfg));
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(experiment_config_from_json(json{{"repeats", 0}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(json{{"test_fraction", 1.0}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(json{{"states", json::array()}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(json{{"models", {"svm"}}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(json{{"logreg_features", {"raw"}}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(json{{"elm_features", {"pops"}}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(json{{"shuffle", true}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(json{{"training", {{"epochs", 3}}}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json(json{{"repeats", "three"}}), ConfigError);
  EXPECT_THROW(load_experiment_config("/nonexistent/cfg.json"), IoError);
}

TEST(Cells, EnumerationCoversGrid) {
  ExperimentConfig cfg;
  cfg.states = {3};
  cfg.gmm_components = {2, 4};
  cfg.flow_layers = {4};
  cfg.flow_mixture = {1, 2};
  const auto cells = enumerate_cells(cfg);
  std::map<ModelFamily, int> per_family;
  for (const auto& c : cells) ++per_family[c.family];
  EXPECT_EQ(per_family[ModelFamily::GmmHmm], 4);
  EXPECT_EQ(per_family[ModelFamily::FlowHmm], 4);
  EXPECT_EQ(per_family[ModelFamily::DflowHmm], 4);
  EXPECT_EQ(per_family[ModelFamily::Logreg], 2);
  EXPECT_EQ(per_family[ModelFamily::Elm], 1);
  std::set<std::string> keys;
  for (const auto& c : cells) keys.insert(c.key(cfg.training));
  EXPECT_EQ(keys.size(), cells.size());

  CellSpec gmm{ModelFamily::GmmHmm, FeatureMode::Raw, 3, 2, 0, 0};
  EXPECT_EQ(gmm.params(cfg.training), "n=3;K=2");
  CellSpec flow{ModelFamily::FlowHmm, FeatureMode::Deriv, 3, 0, 4, 1};
  EXPECT_EQ(flow.params(cfg.training), "n=3;C=4;M=1");
}

TEST(Results, MeanAndPopulationStd) {
  ResultRow r;
  r.accuracies = {0.5, 0.7, 0.9};
  EXPECT_NEAR(r.mean(), 0.7, 1e-15);
  EXPECT_NEAR(r.stddev(), std::sqrt(0.08 / 3.0), 1e-15);
  r.accuracies = {0.8, 0.8, 0.8};
  EXPECT_EQ(r.stddev(), 0.0);
}

ResultTable sample_table() {
  ResultTable t;
  t.rows.push_back({"gmm_hmm", "raw", "n=12;K=2", {0.68, 0.7}, 0, ""});
  t.rows.push_back({"gmm_hmm", "raw", "n=3;K=2", {0.7, 0.7}, 0, ""});
  t.rows.push_back({"flow_hmm", "raw", "n=3;C=4;M=1", {}, 2, "fit: no frames, \"quoted\"\nline"});
  t.rows.push_back({"logreg", "hrci", "", {0.1 + 0.2, 1.0 / 3.0}, 1, "numerical: x"});
  t.sort();
  return t;
}

TEST(Results, SortIsNumericWithinParams) {
  const ResultTable t = sample_table();
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[0].model, "flow_hmm");
  EXPECT_EQ(t.rows[1].params, "n=3;K=2");
  EXPECT_EQ(t.rows[2].params, "n=12;K=2");
  EXPECT_EQ(t.rows[3].model, "logreg");
}

TEST(Results, CsvRoundTripIsExact) {
  const ResultTable t = sample_table();
  const std::string csv = render_csv(t);
  const ResultTable back = parse_csv(csv);
  ASSERT_EQ(back.rows.size(), t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].accuracies, t.rows[i].accuracies);
    EXPECT_EQ(back.rows[i].failed, t.rows[i].failed);
    EXPECT_EQ(back.rows[i].params, t.rows[i].params);
  }
  EXPECT_EQ(render_csv(back), csv);
  EXPECT_EQ(back.rows[0].error.find('\n'), std::string::npos);
  EXPECT_THROW(parse_csv("model,features\n"), IoError);
}

TEST(Results, CsvWithInconsistentMeanIsRejected) {
  const std::string text =
      "model,features,params,status,mean,std,accuracies,failed,error\n"
      "gmm_hmm,raw,n=3;K=2,ok,0.5,0,0.7;0.7,0,\n";
  EXPECT_THROW(parse_csv(text), IoError);
}

TEST(Results, MarkdownBoldsBestMean) {
  const std::string md = render_markdown(sample_table());
  EXPECT_NE(md.find("**0.700** ± 0.000"), std::string::npos);
  EXPECT_NE(md.find("| 0.690 ± 0.010 |"), std::string::npos);
  EXPECT_NE(md.find("failed ("), std::string::npos);
  EXPECT_NE(md.find("| logreg | hrci | - |"), std::string::npos);

  ResultTable single;
  single.rows.push_back({"elm", "flat", "h=100", {0.5}, 0, ""});
  EXPECT_NE(render_markdown(single).find("**0.500**"), std::string::npos);
}

TEST(Experiment, SeparableGmmIsPerfectAndDeterministic) {
  const ExperimentConfig cfg = small_config();
  const Dataset data = load_dataset(cfg.data);
  const auto a = run_experiment(cfg, data);
  ASSERT_EQ(a.table.rows.size(), 1u);
  ASSERT_TRUE(a.table.rows[0].ok());
  EXPECT_EQ(a.table.rows[0].mean(), 1.0);
  const auto b = run_experiment(cfg, data);
  EXPECT_EQ(render_csv(a.table), render_csv(b.table));
  ASSERT_EQ(a.runs.size(), 2u);
  EXPECT_EQ(a.runs[0].log.dump(), b.runs[0].log.dump());
}

TEST(Experiment, TrainingStatisticsComeFromTrainPatientsOnly) {
  ExperimentConfig cfg = small_config();
  cfg.models = {ModelFamily::GmmHmm, ModelFamily::Logreg};
  cfg.logreg_features = {FeatureMode::Hrci};
  cfg.training.logreg_grid_lo = -1;
  cfg.training.logreg_grid_hi = 1;
  const Dataset data = load_dataset(cfg.data);
  const auto out = run_experiment(cfg, data);
  for (const auto& run : out.runs) {
    ASSERT_TRUE(run.ok) << run.error;
    const std::set<std::string> train_ids(run.log["train_patients"].begin(), run.log["train_patients"].end());
    for (const auto& id : run.log["test_patients"]) EXPECT_FALSE(train_ids.contains(id.get<std::string>()));

    std::vector<Sequence> rows;
    std::size_t n0 = 0, n1 = 0;
    for (const auto& f : data.frames) {
      if (!train_ids.contains(f.patient_id)) continue;
      (*f.label == 1 ? n1 : n0)++;
      if (run.cell.family == ModelFamily::GmmHmm) {
        rows.push_back(f.data);
      } else {
        rows.push_back(hrci(f).values.transpose());
      }
    }
    const Standardizer refit = Standardizer::fit(rows);
    const Standardizer logged = Standardizer::from_json(run.log["standardizer"]);
    EXPECT_EQ(refit.mean(), logged.mean());
    EXPECT_EQ(refit.stddev(), logged.stddev());
    if (run.cell.family == ModelFamily::GmmHmm) {
      EXPECT_EQ(run.log["provenance"]["train_counts"], json({n0, n1}));
      const double total = static_cast<double>(n0 + n1);
      EXPECT_NEAR(run.log["provenance"]["log_priors"][1].get<double>(), std::log(n1 / total), 1e-12);
    }
  }
}

TEST(Experiment, RerunningACellReproducesItsAccuracy) {
  const ExperimentConfig cfg = small_config();
  const Dataset data = load_dataset(cfg.data);
  const auto out = run_experiment(cfg, data);
  for (const auto& run : out.runs) {
    const CellRun again = run_cell(cfg, data, run.cell, run.repeat);
    EXPECT_EQ(again.accuracy, run.accuracy);
    EXPECT_EQ(again.seed, run.seed);
  }
}

TEST(Experiment, FailedCellIsRecordedAndSweepContinues) {
  ExperimentConfig cfg = small_config();
  cfg.data.synthetic->septic_patients = 0;
  cfg.repeats = 1;
  cfg.models = {ModelFamily::GmmHmm, ModelFamily::Elm};
  cfg.training.elm_hidden = 5;
  const auto out = run_experiment(cfg);
  ASSERT_EQ(out.table.rows.size(), 2u);
  for (const auto& r : out.table.rows) {
    EXPECT_FALSE(r.ok());
    EXPECT_EQ(r.failed, 1);
    EXPECT_NE(r.error.find("fit"), std::string::npos) << r.error;
  }
  EXPECT_EQ(out.runs[0].log["status"], "failed");
  EXPECT_NE(render_markdown(out.table).find("failed"), std::string::npos);
}

TEST(Experiment, TrainedModelJsonRoundTrip) {
  ExperimentConfig cfg = small_config();
  const Dataset data = load_dataset(cfg.data);
  const auto [train, test] = patient_split(data, cfg.test_fraction, 1);
  for (const CellSpec& cell : {CellSpec{ModelFamily::GmmHmm, FeatureMode::Deriv, 2, 1, 0, 0},
                               CellSpec{ModelFamily::Logreg, FeatureMode::Pops, 0, 0, 0, 0},
                               CellSpec{ModelFamily::Elm, FeatureMode::Flat, 0, 0, 0, 0}}) {
    cfg.training.logreg_grid_lo = 0;
    cfg.training.logreg_grid_hi = 0;
    cfg.training.elm_hidden = 8;
    const TrainedModel m = train_cell(cfg, train, cell, 5);
    const TrainedModel back = trained_model_from_json(json::parse(to_json(m).dump()));
    EXPECT_EQ(back.family, m.family);
    EXPECT_EQ(back.features, m.features);
    for (const auto& f : test.frames) EXPECT_EQ(back.predict(f), m.predict(f));
    EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
  }
}

TEST(Experiment, RunDirectoriesDoNotCollide) {
  const auto root = std::filesystem::temp_directory_path() / "vitalhmm_test_runs";
  std::filesystem::remove_all(root);
  const auto a = make_run_directory(root);
  const auto b = make_run_directory(root);
  EXPECT_NE(a, b);
  EXPECT_TRUE(std::filesystem::is_directory(a));
  EXPECT_EQ(a.filename().string().rfind("run-", 0), 0u);
  std::filesystem::remove_all(root);
}

}  // namespace
}  // namespace vitalhmm
