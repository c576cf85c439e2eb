#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace neuronet::edf {

struct SignalSpec {
  std::string label;
  std::string transducer;
  std::string physical_dimension;
  double physical_min = -1.0;
  double physical_max = 1.0;
  int digital_min = -32768;
  int digital_max = 32767;
  std::string prefilter;
  int samples_per_record = 1;
  std::string reserved;

  double gain() const {
    return (physical_max - physical_min) / static_cast<double>(digital_max - digital_min);
  }
  double to_physical(int digital) const {
    return physical_min + (digital - digital_min) * gain();
  }
  // Inverse map, rounded and clamped to the digital range.
  std::int16_t to_digital(double physical) const;
  bool is_annotation() const { return label == "EDF Annotations"; }
};

struct StartTime {
  int day = 1, month = 1, year = 2000;
  int hour = 0, minute = 0, second = 0;
};

struct RecordingHeader {
  std::string version_tag = "0";
  std::string patient_id;
  std::string recording_id;
  StartTime start;
  std::string reserved;  // "EDF+C" / "EDF+D" for EDF+
  std::int64_t num_data_records = 0;
  double record_duration = 1.0;  // seconds
  std::vector<SignalSpec> signals;

  std::size_t header_bytes() const { return 256 + 256 * signals.size(); }
  std::size_t record_bytes() const;
  double duration_seconds() const { return static_cast<double>(num_data_records) * record_duration; }
};

struct EdfFile {
  RecordingHeader header;
  std::vector<std::vector<std::int16_t>> digital;  // per signal, all records concatenated
  std::vector<std::vector<double>> physical;       // same layout, physical units

  // Case-insensitive label lookup (surrounding blanks ignored); throws
  // ConfigError naming the available labels when absent.
  std::size_t find_signal(const std::string& label) const;
  double sample_rate(std::size_t signal) const {
    return header.signals[signal].samples_per_record / header.record_duration;
  }
};

// Throws ParseError(offset) on truncation, HeaderFieldError(field) on
// malformed header fields, DegenerateCalibration on empty digital or
// physical ranges.
EdfFile parse_edf(std::span<const std::uint8_t> bytes);
EdfFile read_edf(const std::filesystem::path& path);

// Serialises header + digital samples. num_data_records is taken from the
// header and every signal must hold num_data_records * samples_per_record
// values.
std::vector<std::uint8_t> write_edf(const RecordingHeader& header,
                                    const std::vector<std::vector<std::int16_t>>& digital);
void write_edf_file(const std::filesystem::path& path, const RecordingHeader& header,
                    const std::vector<std::vector<std::int16_t>>& digital);

// Raw little-endian bytes of an annotation signal (TAL stream).
std::vector<std::uint8_t> signal_bytes(const std::vector<std::int16_t>& samples);
std::vector<std::int16_t> bytes_to_samples(std::span<const std::uint8_t> bytes);

}  // namespace neuronet::edf
