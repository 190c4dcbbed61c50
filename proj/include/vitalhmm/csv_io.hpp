#pragma once

#include "vitalhmm/dataset.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace vitalhmm {

// Signals CSV: header `epoch,RF,RRi,SpO2`, one row per second, empty field =
// missing. Events CSV: header `patient_id,epoch,kind`, kind in
// {blood_culture, note}.

Recording read_signals_csv(std::istream& in, std::string patient_id);
Recording read_signals_csv(const std::filesystem::path& path);
void write_signals_csv(std::ostream& out, const Recording& recording);
void write_signals_csv(const std::filesystem::path& path, const Recording& recording);

std::vector<EhrEvent> read_events_csv(std::istream& in);
std::vector<EhrEvent> read_events_csv(const std::filesystem::path& path);
void write_events_csv(std::ostream& out, std::span<const EhrEvent> events);
void write_events_csv(const std::filesystem::path& path, std::span<const EhrEvent> events);

/// Reads every `*.csv` in `signals_dir` (patient id = file stem, sorted by
/// name) and the events file.
std::pair<std::vector<Recording>, std::vector<EhrEvent>> read_corpus(
    const std::filesystem::path& signals_dir, const std::filesystem::path& events_csv);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace vitalhmm
