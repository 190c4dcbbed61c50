#pragma once

#include "vitalhmm/dataset.hpp"
#include "vitalhmm/hmm.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace vitalhmm {

/// Parameters of the synthetic corpus. Patients with index below
/// `septic_patients` are septic: the final `septic_window_hours` of their
/// recording come from the septic model and a blood culture (plus a note)
/// is logged right after the last sample. Everything else is drawn from the
/// control model and control patients carry no events.
struct SynthSpec {
  int patients = 10;
  int septic_patients = 5;
  double recording_hours = 12.0;
  double septic_window_hours = 72.0;
  double missing_rate = 0.0;
  /// Shift (in per-channel standard deviations) of the default septic model's
  /// RF and SpO2 means relative to the control model.
  double separation = 1.0;
  std::int64_t base_epoch = 1600041600;  // a UTC midnight
  std::optional<HmmModel> control_model;
  std::optional<HmmModel> septic_model;
};

/// Default ground-truth model: 3 sticky states, one diagonal Gaussian each
/// over (RF, RRi, SpO2). The RRi channel has the same law in every state and
/// class.
HmmModel default_synth_model(int label, double separation);

struct SynthCorpus {
  std::vector<Recording> recordings;
  std::vector<EhrEvent> events;
};

/// Deterministic given the seed. Throws ConfigError on an invalid spec.
SynthCorpus synth_generate(const SynthSpec& spec, std::uint64_t seed);

/// Draws a T-row sequence from the model.
Sequence sample_hmm(const HmmModel& model, Eigen::Index T, Rng& rng);

/// Keys: patients, septic_patients, recording_hours, septic_window_hours,
/// missing_rate, separation, base_epoch, and optional control_model /
/// septic_model in the hmm-v1 format. Missing keys keep their defaults.
SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

/// Writes `signals/<patient>.csv` and `events.csv` under `dir`.
void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus);

}  // namespace vitalhmm
