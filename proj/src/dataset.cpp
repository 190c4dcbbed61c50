#include "vitalhmm/dataset.hpp"

#include "vitalhmm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace vitalhmm {

std::string_view to_string(EventKind kind) {
  return kind == EventKind::BloodCulture ? "blood_culture" : "note";
}

EventKind parse_event_kind(std::string_view text) {
  if (text == "blood_culture") return EventKind::BloodCulture;
  if (text == "note") return EventKind::Note;
  throw ContractError("unknown event kind '" + std::string(text) + "'");
}

Dataset Dataset::from_frames(std::vector<Frame> frames) {
  Dataset out;
  std::set<std::string> ids;
  for (const auto& f : frames) ids.insert(f.patient_id);
  out.patients.assign(ids.begin(), ids.end());
  out.frames = std::move(frames);
  return out;
}

std::size_t Dataset::count_label(int label) const {
  return static_cast<std::size_t>(std::count_if(frames.begin(), frames.end(), [label](const Frame& f) {
    return f.label && *f.label == label;
  }));
}

std::vector<Frame> segment(const Recording& recording) {
  if (recording.samples.rows() > 0 && recording.samples.cols() != kChannelCount) {
    throw ContractError("recording '" + recording.patient_id + "' has " +
                        std::to_string(recording.samples.cols()) + " channels, expected 3");
  }
  std::vector<Frame> frames;
  const Eigen::Index windows = recording.samples.rows() / kFrameLength;
  for (Eigen::Index w = 0; w < windows; ++w) {
    auto block = recording.samples.middleRows(w * kFrameLength, kFrameLength);
    if (block.hasNaN()) continue;
    Frame f;
    f.patient_id = recording.patient_id;
    f.start_epoch = recording.start_epoch + w * kFrameLength;
    f.data = block;
    frames.push_back(std::move(f));
  }
  return frames;
}

Dataset label_frames(std::vector<Frame> frames, std::span<const EhrEvent> events) {
  std::map<std::string, std::vector<std::int64_t>> cultures;
  std::map<std::string, std::set<std::int64_t>> busy_days;
  for (const auto& e : events) {
    if (e.kind == EventKind::BloodCulture) cultures[e.patient_id].push_back(e.event_epoch);
    busy_days[e.patient_id].insert(utc_day(e.event_epoch));
  }
  for (auto& [id, times] : cultures) std::sort(times.begin(), times.end());

  std::vector<Frame> kept;
  kept.reserve(frames.size());
  for (auto& f : frames) {
    f.label.reset();
    if (auto it = cultures.find(f.patient_id); it != cultures.end()) {
      // first culture at or after the frame start
      auto c = std::lower_bound(it->second.begin(), it->second.end(), f.start_epoch);
      if (c != it->second.end() && *c - f.start_epoch <= kSepticWindowSeconds) f.label = 1;
    }
    if (!f.label) {
      auto it = busy_days.find(f.patient_id);
      if (it == busy_days.end() || !it->second.contains(utc_day(f.start_epoch))) f.label = 0;
    }
    if (f.label) kept.push_back(std::move(f));
  }
  return Dataset::from_frames(std::move(kept));
}

std::pair<Dataset, Dataset> patient_split(const Dataset& dataset, double test_fraction,
                                          std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw SplitError("test fraction must lie in (0, 1)");
  }
  const std::size_t n = dataset.patients.size();
  if (n < 2) throw SplitError("patient split needs at least 2 patients, got " + std::to_string(n));

  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  std::vector<std::string> order = dataset.patients;
  std::sort(order.begin(), order.end());
  Rng rng(seed);
  // Fisher-Yates on raw engine output keeps the permutation library-independent.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng() % (i + 1)]);
  }
  std::set<std::string> test_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));

  std::vector<Frame> train, test;
  for (const auto& f : dataset.frames) {
    (test_ids.contains(f.patient_id) ? test : train).push_back(f);
  }
  Dataset train_set = Dataset::from_frames(std::move(train));
  Dataset test_set = Dataset::from_frames(std::move(test));
  // Patients without frames still belong to their side of the partition.
  train_set.patients.clear();
  test_set.patients.clear();
  for (const auto& id : dataset.patients) {
    (test_ids.contains(id) ? test_set.patients : train_set.patients).push_back(id);
  }
  return {std::move(train_set), std::move(test_set)};
}

}  // namespace vitalhmm
