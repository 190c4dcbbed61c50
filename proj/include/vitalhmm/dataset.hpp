#pragma once

#include "vitalhmm/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vitalhmm {

/// Samples per frame: 20 minutes at 1 Hz.
inline constexpr Eigen::Index kFrameLength = 1200;
inline constexpr Eigen::Index kChannelCount = 3;
/// A frame is septic when a blood culture follows its start within 72 h.
inline constexpr std::int64_t kSepticWindowSeconds = 72 * 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;

enum class Channel : int { RF = 0, RRi = 1, SpO2 = 2 };
inline constexpr std::array<std::string_view, 3> kChannelNames = {"RF", "RRi", "SpO2"};

/// A raw bedside recording at 1 Hz; missing samples are NaN.
struct Recording {
  std::string patient_id;
  std::int64_t start_epoch = 0;
  RowMatrix samples{0, kChannelCount};  // L x 3, columns ordered as kChannelNames
};

enum class EventKind { BloodCulture, Note };

struct EhrEvent {
  std::string patient_id;
  std::int64_t event_epoch = 0;
  EventKind kind = EventKind::Note;
};

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

struct Frame {
  std::string patient_id;
  std::int64_t start_epoch = 0;
  Sequence data;  // kFrameLength x N
  std::optional<int> label;
};

struct Dataset {
  std::vector<Frame> frames;
  std::vector<std::string> patients;  // sorted, unique

  /// Builds a dataset from labeled frames, deriving the patient list.
  static Dataset from_frames(std::vector<Frame> frames);
  std::size_t count_label(int label) const;
};

/// Cuts a recording into consecutive non-overlapping 1200-row windows anchored
/// at the recording start. Windows containing any NaN and the trailing
/// remainder are dropped.
std::vector<Frame> segment(const Recording& recording);

/// Label 1: a blood culture for the same patient at most 72 h after the frame
/// start (inclusive of the frame start). Label 0: the UTC day holding the frame
/// start carries no event for that patient. The label-1 rule is applied first;
/// frames matching neither rule are dropped.
Dataset label_frames(std::vector<Frame> frames, std::span<const EhrEvent> events);

/// Patient-level partition into (train, test). The test side holds
/// round(test_fraction * patients) patients, at least one and at most all
/// but one.
std::pair<Dataset, Dataset> patient_split(const Dataset& dataset, double test_fraction,
                                          std::uint64_t seed);

/// Day index (UTC) of an epoch, floor division.
inline std::int64_t utc_day(std::int64_t epoch) {
  std::int64_t d = epoch / kSecondsPerDay;
  if (epoch % kSecondsPerDay < 0) --d;
  return d;
}

}  // namespace vitalhmm
