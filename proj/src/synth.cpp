#include "vitalhmm/synth.hpp"

#include "vitalhmm/csv_io.hpp"
#include "vitalhmm/errors.hpp"
#include "vitalhmm/gmm.hpp"
#include "vitalhmm/model_io.hpp"

#include <cstdio>
#include <set>

namespace vitalhmm {

HmmModel default_synth_model(int label, double separation) {
  // per-state means of (RF [1/min], RRi [s], SpO2 [%]) and channel sds
  const Eigen::Matrix3d means{{48.0, 0.40, 96.5}, {52.0, 0.40, 95.0}, {56.0, 0.40, 93.5}};
  const Eigen::RowVector3d sd{3.0, 0.02, 1.0};
  const double shift = label == 1 ? separation : 0.0;
  std::vector<std::unique_ptr<EmissionModel>> emissions;
  for (Eigen::Index s = 0; s < 3; ++s) {
    Matrix mu = means.row(s);
    mu(0, 0) += shift * sd[0];
    mu(0, 2) -= shift * sd[2];
    emissions.push_back(std::make_unique<GmmEmission>(Vector::Ones(1), mu, Matrix(sd.cwiseAbs2())));
  }
  Matrix A{{0.98, 0.015, 0.005}, {0.01, 0.98, 0.01}, {0.005, 0.015, 0.98}};
  return HmmModel::from_probabilities(Vector::Constant(3, 1.0 / 3.0), A, std::move(emissions));
}

Sequence sample_hmm(const HmmModel& model, Eigen::Index T, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(model.states());
  Sequence out(T, static_cast<Eigen::Index>(model.dim()));
  if (T == 0) return out;
  const Vector q = model.log_initial().array().exp();
  const Matrix A = model.log_transition().array().exp();
  auto draw = [&](const auto& probs) {
    std::discrete_distribution<Eigen::Index> d(probs.data(), probs.data() + n);
    return d(rng);
  };
  Eigen::Index s = draw(q);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) {
      const Eigen::RowVectorXd row = A.row(s);
      s = draw(row);
    }
    model.emission(static_cast<std::size_t>(s))
        .sample(rng, {out.data() + t * out.cols(), static_cast<std::size_t>(out.cols())});
  }
  return out;
}

SynthCorpus synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.patients < 1) throw ConfigError("synthetic spec needs at least one patient");
  if (spec.septic_patients < 0 || spec.septic_patients > spec.patients) {
    throw ConfigError("septic patient count must lie in [0, patients]");
  }
  if (!(spec.recording_hours > 0.0)) throw ConfigError("recording length must be positive");
  if (!(spec.septic_window_hours > 0.0)) throw ConfigError("septic window must be positive");
  if (!(spec.missing_rate >= 0.0 && spec.missing_rate < 1.0)) throw ConfigError("missing rate must lie in [0, 1)");

  const HmmModel control = spec.control_model ? *spec.control_model : default_synth_model(0, spec.separation);
  const HmmModel septic = spec.septic_model ? *spec.septic_model : default_synth_model(1, spec.separation);
  if (control.dim() != static_cast<std::size_t>(kChannelCount) ||
      septic.dim() != static_cast<std::size_t>(kChannelCount)) {
    throw ConfigError("ground-truth models must emit 3 channels");
  }

  const auto L = static_cast<Eigen::Index>(std::llround(spec.recording_hours * 3600.0));
  const auto window = std::min<Eigen::Index>(L, std::llround(spec.septic_window_hours * 3600.0));
  const int width = static_cast<int>(std::to_string(spec.patients - 1).size());

  SynthCorpus corpus;
  for (int i = 0; i < spec.patients; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "p%0*d", width, i);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const bool is_septic = i < spec.septic_patients;

    Recording rec;
    rec.patient_id = id;
    rec.start_epoch = spec.base_epoch;
    rec.samples.resize(L, kChannelCount);
    const Eigen::Index head = is_septic ? L - window : L;
    if (head > 0) rec.samples.topRows(head) = sample_hmm(control, head, rng);
    if (head < L) rec.samples.bottomRows(L - head) = sample_hmm(septic, L - head, rng);
    if (spec.missing_rate > 0.0) {
      std::bernoulli_distribution miss(spec.missing_rate);
      for (Eigen::Index t = 0; t < L; ++t) {
        for (Eigen::Index c = 0; c < kChannelCount; ++c) {
          if (miss(rng)) rec.samples(t, c) = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
    if (is_septic) {
      const std::int64_t at = rec.start_epoch + L;
      corpus.events.push_back({rec.patient_id, at, EventKind::BloodCulture});
      corpus.events.push_back({rec.patient_id, at, EventKind::Note});
    }
    corpus.recordings.push_back(std::move(rec));
  }
  return corpus;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  static const std::set<std::string> known{"patients",       "septic_patients", "recording_hours",
                                          "septic_window_hours", "missing_rate", "separation",
                                          "base_epoch",     "control_model",   "septic_model"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("synthetic spec: unknown key '" + key + "'");
  }
  SynthSpec s;
  try {
    s.patients = j.value("patients", s.patients);
    s.septic_patients = j.value("septic_patients", s.septic_patients);
    s.recording_hours = j.value("recording_hours", s.recording_hours);
    s.septic_window_hours = j.value("septic_window_hours", s.septic_window_hours);
    s.missing_rate = j.value("missing_rate", s.missing_rate);
    s.separation = j.value("separation", s.separation);
    s.base_epoch = j.value("base_epoch", s.base_epoch);
    if (j.contains("control_model")) s.control_model = hmm_from_json(j.at("control_model"));
    if (j.contains("septic_model")) s.septic_model = hmm_from_json(j.at("septic_model"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

nlohmann::json to_json(const SynthSpec& spec) {
  nlohmann::json j = {{"patients", spec.patients},
                      {"septic_patients", spec.septic_patients},
                      {"recording_hours", spec.recording_hours},
                      {"septic_window_hours", spec.septic_window_hours},
                      {"missing_rate", spec.missing_rate},
                      {"separation", spec.separation},
                      {"base_epoch", spec.base_epoch}};
  if (spec.control_model) j["control_model"] = hmm_to_json(*spec.control_model);
  if (spec.septic_model) j["septic_model"] = hmm_to_json(*spec.septic_model);
  return j;
}

void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "signals", ec);
  if (ec) throw IoError("cannot create " + (dir / "signals").string() + ": " + ec.message());
  for (const auto& rec : corpus.recordings) write_signals_csv(dir / "signals" / (rec.patient_id + ".csv"), rec);
  write_events_csv(dir / "events.csv", corpus.events);
}

}  // namespace vitalhmm
