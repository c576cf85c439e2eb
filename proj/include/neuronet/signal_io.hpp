#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "neuronet/stages.hpp"

namespace neuronet {

inline constexpr double kTargetRate = 100.0;
inline constexpr double kEpochSeconds = 30.0;
inline constexpr std::size_t kEpochLen = 3000;

struct PreprocessOptions {
  int filter_order = 5;
  double low_hz = 1.0;
  double high_hz = 50.0;
};

struct PreprocessInfo {
  double source_rate = 0.0;
  std::size_t up = 1;
  std::size_t down = 1;
  bool lowpass_applied = false;
};

// Zero-phase Butterworth band-pass followed by polyphase resampling to
// 100 Hz. Output length is round(seconds * 100).
std::vector<double> preprocess(std::span<const double> signal, double source_rate,
                               const PreprocessOptions& opts = {}, PreprocessInfo* info = nullptr);

// Single-channel recording cut into 30 s epochs, epochs stored row-major.
struct StagedRecording {
  std::string subject_id;
  double sample_rate = kTargetRate;
  std::size_t epoch_len = kEpochLen;
  std::vector<float> samples;  // n_epochs * epoch_len
  std::vector<Stage> labels;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t num_epochs() const { return labels.size(); }
  std::span<const float> epoch(std::size_t i) const {
    return {samples.data() + i * epoch_len, epoch_len};
  }
  std::span<float> epoch(std::size_t i) { return {samples.data() + i * epoch_len, epoch_len}; }
  // Throws ShapeError / NumericalError when the invariants do not hold.
  void validate() const;
};

// Cuts a 100 Hz signal into consecutive epochs anchored at sample 0, pairs
// them with raw per-epoch tokens and drops epochs whose token maps to no
// stage. Extra trailing signal beyond the labelled span is ignored.
StagedRecording make_staged_recording(const std::string& subject_id, std::span<const double> signal100,
                                      const std::vector<std::string>& raw_tokens,
                                      std::vector<std::size_t>* dropped = nullptr);

// Per-recording z-normalisation over all retained samples.
StagedRecording z_normalize(const StagedRecording& rec);

// Reads one EDF/EDF+ recording, selects `channel`, preprocesses it and
// attaches stage labels from `annotations` (CSV path, hypnogram EDF+ path or,
// when empty, the recording's own annotation signal).
StagedRecording ingest_recording(const std::filesystem::path& edf_path, const std::string& channel,
                                 const std::filesystem::path& annotations, const PreprocessOptions& opts = {});

// Cache container: <stem>.nncache (magic, counts, float32 epochs, uint8
// labels) and <stem>.json provenance sidecar.
void save_cache(const StagedRecording& rec, const std::filesystem::path& stem);
StagedRecording load_cache(const std::filesystem::path& stem);

// Every *.nncache under `dir`, sorted by subject id.
std::vector<StagedRecording> load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::vector<StagedRecording>& recs, const std::filesystem::path& dir);

}  // namespace neuronet
