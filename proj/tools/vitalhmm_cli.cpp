#include "vitalhmm/csv_io.hpp"
#include "vitalhmm/errors.hpp"
#include "vitalhmm/experiment.hpp"
#include "vitalhmm/model_io.hpp"
#include "vitalhmm/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace vitalhmm;

namespace {

std::string quote(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c == '\n' ? ' ' : c);
  }
  return out + "\"";
}

int fail(std::string_view category, std::string_view message) {
  std::cerr << "error category=" << category << " message=" << quote(message) << "\n";
  return 1;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

ExperimentConfig experiment_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? experiment_config_from_json(nlohmann::json::object())
                                          : load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  return cfg;
}

void add_common(CLI::App* cmd, Common& c, bool with_out_dir = true) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--seed", c.seed, "Override the master seed");
  if (with_out_dir) cmd->add_option("--out-dir", c.out_dir, "Root directory for run outputs");
}

int cmd_synth(const Common& c) {
  SynthSpec spec;
  std::uint64_t seed = 0;
  if (!c.config.empty()) {
    const auto j = read_json(c.config);
    if (j.contains("data")) {
      const auto cfg = load_experiment_config(c.config);
      if (!cfg.data.synthetic) throw ConfigError("config has no synthetic data source");
      spec = *cfg.data.synthetic;
      seed = cfg.data.synthetic_seed;
    } else {
      spec = synth_spec_from_json(j);
    }
  }
  if (c.seed) seed = *c.seed;
  const auto corpus = synth_generate(spec, seed);
  const fs::path dir = make_run_directory(c.out_dir.empty() ? "runs" : c.out_dir);
  write_corpus(dir, corpus);
  save_json(dir / "synth_spec.json", {{"spec", to_json(spec)}, {"seed", seed}});
  std::cout << dir.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string model = "gmm_hmm";
  std::string features;
  int states = 3;
  int components = 2;
  int layers = 4;
  int mixture = 1;
  int repeat = 0;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  const ExperimentConfig cfg = experiment_config(c);
  CellSpec cell;
  cell.family = parse_model_family(a.model);
  std::string features = a.features;
  if (features.empty()) {
    features = is_hmm_family(cell.family) ? "raw" : cell.family == ModelFamily::Elm ? "flat" : "hrci";
  }
  cell.features = parse_feature_mode(features);
  if (is_hmm_family(cell.family)) {
    cell.states = a.states;
    if (cell.family == ModelFamily::GmmHmm) cell.components = a.components;
    else {
      cell.layers = a.layers;
      cell.mixture = a.mixture;
    }
  }
  const Dataset data = load_dataset(cfg.data);
  const auto [train, test] = patient_split(data, cfg.test_fraction, split_seed(cfg, a.repeat));
  const std::uint64_t seed = mix_seed(split_seed(cfg, a.repeat), 0x7a1dULL);
  TrainedModel model = train_cell(cfg, train, cell, seed);
  model.provenance["test_patients"] = test.patients;
  model.provenance["repeat"] = a.repeat;
  const double acc = model.accuracy(test.frames);

  const fs::path dir = make_run_directory(cfg.output_dir);
  save_json(dir / "model.json", to_json(model));
  save_json(dir / "config.json", to_json(cfg));
  std::cout << "model=" << (dir / "model.json").string() << " cell=" << cell.key(cfg.training)
            << " test_accuracy=" << format_double(acc) << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& model_path, bool all_frames) {
  const ExperimentConfig cfg = experiment_config(c);
  const TrainedModel model = trained_model_from_json(load_json(model_path));
  const Dataset data = load_dataset(cfg.data);
  std::vector<Frame> frames;
  if (all_frames) {
    frames = data.frames;
  } else {
    const auto train = model.provenance.value("train_patients", std::vector<std::string>{});
    for (const auto& f : data.frames) {
      if (std::find(train.begin(), train.end(), f.patient_id) == train.end()) frames.push_back(f);
    }
  }
  if (frames.empty()) throw ContractError("no frames to evaluate");
  std::cout << "frames=" << frames.size() << " accuracy=" << format_double(model.accuracy(frames)) << "\n";
  return 0;
}

int cmd_sweep(const Common& c) {
  const ExperimentConfig cfg = experiment_config(c);
  const ExperimentOutput out = run_experiment(cfg);
  const fs::path dir = make_run_directory(cfg.output_dir);
  write_experiment_outputs(dir, cfg, out);
  std::size_t failed = 0;
  for (const auto& r : out.table.rows) failed += r.ok() ? 0 : 1;
  std::cout << "run_dir=" << dir.string() << " rows=" << out.table.rows.size() << " failed_rows=" << failed
            << "\n";
  return 0;
}

int cmd_report(const std::string& input, const std::string& format, const std::string& output) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw IoError("cannot open " + input);
  std::stringstream buf;
  buf << in.rdbuf();
  const ResultTable table = parse_csv(buf.str());
  if (table.rows.empty()) throw ContractError("cannot report an empty table");
  const ReportFormat fmt = parse_report_format(format);
  if (output.empty()) {
    std::cout << (fmt == ReportFormat::Csv ? render_csv(table) : render_markdown(table));
  } else {
    write_report(table, fmt, output);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence classifiers for bedside vital-sign frames"};
  app.require_subcommand(1);

  Common synth_c, train_c, eval_c, sweep_c;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus (signals + events CSV)");
  add_common(synth, synth_c);

  TrainArgs targs;
  auto* train = app.add_subcommand("train", "Train one model on the training side of a split");
  add_common(train, train_c);
  train->add_option("--model", targs.model, "gmm_hmm, flow_hmm, dflow_hmm, logreg or elm");
  train->add_option("--features", targs.features, "raw, deriv, hrci, pops or flat");
  train->add_option("--states", targs.states, "HMM states");
  train->add_option("--components", targs.components, "Gaussians per state");
  train->add_option("--layers", targs.layers, "Coupling layers per flow");
  train->add_option("--mixture", targs.mixture, "Flows per state");
  train->add_option("--repeat", targs.repeat, "Split index");

  std::string model_path;
  bool all_frames = false;
  auto* eval = app.add_subcommand("eval", "Score a saved model on held-out frames");
  add_common(eval, eval_c, false);
  eval->add_option("--model", model_path, "model.json written by train")->required();
  eval->add_flag("--all", all_frames, "Score every labeled frame, not just held-out patients");

  auto* sweep = app.add_subcommand("sweep", "Run the full grid and write result tables");
  add_common(sweep, sweep_c);

  std::string report_in, report_format = "markdown", report_out;
  auto* report = app.add_subcommand("report", "Render a results.csv as csv or markdown");
  report->add_option("--input", report_in, "results.csv")->required();
  report->add_option("--format", report_format, "csv or markdown");
  report->add_option("--output", report_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what()) + 1;
  }

  try {
    if (*synth) return cmd_synth(synth_c);
    if (*train) return cmd_train(train_c, targs);
    if (*eval) return cmd_eval(eval_c, model_path, all_frames);
    if (*sweep) return cmd_sweep(sweep_c);
    if (*report) return cmd_report(report_in, report_format, report_out);
  } catch (const Error& e) {
    return fail(e.category(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
