#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "neuronet/signal_io.hpp"
#include "neuronet/stages.hpp"

namespace neuronet {

struct StageRecipe {
  double center_hz = 10;
  double width_hz = 2;
  double amplitude = 1;  // RMS of the band component
};

struct SynthSpec {
  std::string name = "default";
  std::array<StageRecipe, kNumStages> recipes{};
  std::size_t subjects = 20;
  std::size_t epochs_per_subject = 120;
  std::uint64_t seed = 1;
  double background_rms = 0.3;   // pink background
  double amplitude_jitter = 0.2; // log-normal sigma on the band amplitude per epoch
  // Probability that an epoch is rendered from another stage's recipe while
  // keeping its true label. Makes single-epoch decisions ambiguous.
  double atypical_prob = 0.0;
  // Stage sampling: i.i.d. from `stage_probs`, or a Markov chain when
  // `transitions` is non-empty (chain starts from stage_probs).
  std::array<double, kNumStages> stage_probs{0.2, 0.2, 0.2, 0.2, 0.2};
  std::vector<std::array<double, kNumStages>> transitions;

  bool markov() const { return !transitions.empty(); }
  void validate() const;
  nlohmann::json to_json() const;

  // "default"/"iid" (independent stages) or "markov" (self-transition 0.9,
  // 30% atypical epochs).
  static SynthSpec preset(const std::string& name);
  static std::array<StageRecipe, kNumStages> default_recipes();
};

std::vector<Stage> sample_stage_sequence(const SynthSpec& spec, std::size_t n, std::uint64_t seed);

// One recording per subject, signals at 100 Hz.
std::vector<StagedRecording> generate(const SynthSpec& spec);

// <dir>/<subject>.edf (single "EEG Fpz-Cz" signal, 1 s records) plus
// <dir>/<subject>.csv stage annotations (onset_sec,stage).
void export_edf(const std::vector<StagedRecording>& recs, const std::filesystem::path& dir,
                const std::string& channel = "EEG Fpz-Cz");

}  // namespace neuronet
