#pragma once

#include <filesystem>
#include <istream>
#include <limits>
#include <string>
#include <vector>

#include "neuronet/edf.hpp"

namespace neuronet {

struct StageAnnotation {
  double onset = 0.0;                                         // seconds from recording start
  double duration = std::numeric_limits<double>::quiet_NaN();  // NaN: lasts until the next onset
  std::string token;                                          // canonical stage token
};

// `onset_sec,stage` rows; an optional header row and blank lines are skipped.
std::vector<StageAnnotation> read_csv_annotations(std::istream& in);
std::vector<StageAnnotation> read_csv_annotations(const std::filesystem::path& path);

// Stage annotations carried by the "EDF Annotations" signal(s) of an EDF+
// file. Non-stage texts (lights off, arousals, time-keeping TALs) are skipped.
std::vector<StageAnnotation> read_tal_annotations(const edf::EdfFile& file);

// Parses one annotation-signal byte stream into (onset, duration, texts).
struct Tal {
  double onset = 0.0;
  double duration = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> texts;
};
std::vector<Tal> parse_tals(const std::vector<std::uint8_t>& bytes);

// End of the annotated span (last onset + duration, or last onset + one epoch
// when the final duration is open).
double annotation_coverage_end(const std::vector<StageAnnotation>& ann, double epoch_seconds = 30.0);

// One canonical token per epoch of [0, span_seconds). An epoch takes the
// annotation covering its start instant; overlaps resolve to the annotation
// with the latest onset. Uncovered epochs raise CoverageGap.
std::vector<std::string> parse_stage_annotations(const std::vector<StageAnnotation>& ann,
                                                 double span_seconds, double epoch_seconds = 30.0);

}  // namespace neuronet
