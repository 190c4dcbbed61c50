#include "vitalhmm/csv_io.hpp"

#include "vitalhmm/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace vitalhmm {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::int64_t parse_int(std::string_view s, std::size_t line_no) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IoError("line " + std::to_string(line_no) + ": bad integer '" + std::string(s) + "'");
  }
  return v;
}

double parse_value(std::string_view s, std::size_t line_no) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IoError("line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

Recording read_signals_csv(std::istream& in, std::string patient_id) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "epoch,RF,RRi,SpO2") {
    throw IoError("signals CSV for '" + patient_id + "' must start with header epoch,RF,RRi,SpO2");
  }
  std::vector<std::array<double, 3>> rows;
  Recording rec;
  rec.patient_id = std::move(patient_id);
  std::int64_t next_epoch = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = trim(line);
    if (text.empty()) continue;
    auto fields = split_fields(text);
    if (fields.size() != 4) {
      throw IoError("line " + std::to_string(line_no) + ": expected 4 fields");
    }
    const std::int64_t epoch = parse_int(trim(fields[0]), line_no);
    if (rows.empty()) {
      rec.start_epoch = epoch;
    } else if (epoch < next_epoch) {
      throw IoError("line " + std::to_string(line_no) + ": epochs must increase");
    }
    // gaps in the epoch column are missing seconds
    while (!rows.empty() && next_epoch < epoch) {
      rows.push_back({NAN, NAN, NAN});
      ++next_epoch;
    }
    rows.push_back({parse_value(trim(fields[1]), line_no), parse_value(trim(fields[2]), line_no),
                    parse_value(trim(fields[3]), line_no)});
    next_epoch = epoch + 1;
  }
  rec.samples.resize(static_cast<Eigen::Index>(rows.size()), kChannelCount);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < 3; ++c) rec.samples(static_cast<Eigen::Index>(i), c) = rows[i][c];
  }
  return rec;
}

Recording read_signals_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_signals_csv(in, path.stem().string());
}

void write_signals_csv(std::ostream& out, const Recording& recording) {
  out << "epoch,RF,RRi,SpO2\n";
  for (Eigen::Index t = 0; t < recording.samples.rows(); ++t) {
    out << recording.start_epoch + t;
    for (Eigen::Index c = 0; c < recording.samples.cols(); ++c) {
      out << ',' << format_double(recording.samples(t, c));
    }
    out << '\n';
  }
}

void write_signals_csv(const std::filesystem::path& path, const Recording& recording) {
  auto out = open_out(path);
  write_signals_csv(out, recording);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<EhrEvent> read_events_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "patient_id,epoch,kind") {
    throw IoError("events CSV must start with header patient_id,epoch,kind");
  }
  std::vector<EhrEvent> events;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = trim(line);
    if (text.empty()) continue;
    auto fields = split_fields(text);
    if (fields.size() != 3) throw IoError("line " + std::to_string(line_no) + ": expected 3 fields");
    EhrEvent e;
    e.patient_id = std::string(trim(fields[0]));
    e.event_epoch = parse_int(trim(fields[1]), line_no);
    try {
      e.kind = parse_event_kind(trim(fields[2]));
    } catch (const ContractError& err) {
      throw IoError("line " + std::to_string(line_no) + ": " + err.what());
    }
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<EhrEvent> read_events_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_events_csv(in);
}

void write_events_csv(std::ostream& out, std::span<const EhrEvent> events) {
  out << "patient_id,epoch,kind\n";
  for (const auto& e : events) {
    out << e.patient_id << ',' << e.event_epoch << ',' << to_string(e.kind) << '\n';
  }
}

void write_events_csv(const std::filesystem::path& path, std::span<const EhrEvent> events) {
  auto out = open_out(path);
  write_events_csv(out, events);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::pair<std::vector<Recording>, std::vector<EhrEvent>> read_corpus(
    const std::filesystem::path& signals_dir, const std::filesystem::path& events_csv) {
  if (!std::filesystem::is_directory(signals_dir)) {
    throw IoError("signals directory '" + signals_dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(signals_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Recording> recordings;
  for (const auto& f : files) {
    if (std::filesystem::exists(events_csv) && std::filesystem::equivalent(f, events_csv)) continue;
    recordings.push_back(read_signals_csv(f));
  }
  return {std::move(recordings), read_events_csv(events_csv)};
}

}  // namespace vitalhmm
