#include "neuronet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "neuronet/dsp.hpp"
#include "neuronet/edf.hpp"
#include "neuronet/errors.hpp"
#include "neuronet/mae.hpp"

namespace neuronet {

std::array<StageRecipe, kNumStages> SynthSpec::default_recipes() {
  // W alpha, N1 theta, N2 sigma (spindle band), N3 delta, REM wide beta.
  return {{{10.0, 3.0, 1.0}, {6.0, 2.0, 1.0}, {13.5, 2.0, 1.0}, {2.0, 2.0, 1.5}, {24.0, 10.0, 0.8}}};
}

SynthSpec SynthSpec::preset(const std::string& name) {
  SynthSpec s;
  s.recipes = default_recipes();
  if (name == "default" || name == "iid") {
    s.name = name;
    return s;
  }
  if (name == "markov") {
    s.name = name;
    s.atypical_prob = 0.3;
    s.transitions.assign(kNumStages, {});
    for (std::size_t i = 0; i < kNumStages; ++i)
      for (std::size_t j = 0; j < kNumStages; ++j) s.transitions[i][j] = i == j ? 0.9 : 0.1 / (kNumStages - 1);
    return s;
  }
  throw ConfigError("unknown synthetic spec '" + name + "' (expected default, iid or markov)");
}

void SynthSpec::validate() const {
  if (subjects == 0 || epochs_per_subject == 0) throw ConfigError("synthetic spec needs subjects and epochs");
  if (!(background_rms >= 0) || !(amplitude_jitter >= 0)) throw ConfigError("negative noise level");
  if (!(atypical_prob >= 0 && atypical_prob < 1)) throw ConfigError("atypical_prob must lie in [0, 1)");
  for (std::size_t i = 0; i < kNumStages; ++i) {
    const auto& r = recipes[i];
    if (!(r.center_hz > 0 && r.width_hz > 0 && r.amplitude > 0 && r.center_hz - r.width_hz / 2 > 0 &&
          r.center_hz + r.width_hz / 2 < kTargetRate / 2))
      throw ConfigError(std::string("invalid recipe for stage ") + stage_name(stage_from_index(static_cast<int>(i))));
    for (std::size_t j = 0; j < i; ++j)
      if (recipes[j].center_hz == r.center_hz && recipes[j].width_hz == r.width_hz)
        throw ConfigError("stage recipes must be distinct");
  }
  auto check_row = [](const std::array<double, kNumStages>& row, const std::string& what) {
    double s = 0;
    for (double p : row) {
      if (!(p >= 0)) throw ConfigError(what + " has a negative entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError(what + " does not sum to 1");
  };
  check_row(stage_probs, "stage_probs");
  if (markov()) {
    if (transitions.size() != kNumStages) throw ConfigError("transition matrix must be 5x5");
    for (std::size_t i = 0; i < kNumStages; ++i) check_row(transitions[i], "transition row " + std::to_string(i));
  }
}

nlohmann::json SynthSpec::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["subjects"] = subjects;
  j["epochs_per_subject"] = epochs_per_subject;
  j["seed"] = seed;
  j["background_rms"] = background_rms;
  j["amplitude_jitter"] = amplitude_jitter;
  j["atypical_prob"] = atypical_prob;
  j["stage_probs"] = stage_probs;
  if (markov()) j["transitions"] = transitions;
  for (std::size_t i = 0; i < kNumStages; ++i)
    j["recipes"][stage_name(stage_from_index(static_cast<int>(i)))] = {
        {"center_hz", recipes[i].center_hz}, {"width_hz", recipes[i].width_hz}, {"amplitude", recipes[i].amplitude}};
  return j;
}

namespace {

using SynthRng = std::mt19937_64;

std::size_t draw(SynthRng& rng, const std::array<double, kNumStages>& p) {
  return std::discrete_distribution<std::size_t>(p.begin(), p.end())(rng);
}

constexpr std::size_t kWarmup = 500;  // samples discarded while filters settle

// Band-pass filtered white noise scaled to unit RMS.
std::vector<double> band_noise(SynthRng& rng, double lo, double hi, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> w(n + kWarmup);
  for (double& v : w) v = nd(rng);
  auto y = dsp::sosfilt(dsp::butter_bandpass(2, lo, hi, kTargetRate), w);
  y.erase(y.begin(), y.begin() + kWarmup);
  double ss = 0;
  for (double v : y) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(n));
  for (double& v : y) v /= rms;
  return y;
}

// Kellet's economy pink-noise filter, unit RMS.
std::vector<double> pink_noise(SynthRng& rng, std::size_t n) {
  std::normal_distribution<double> nd;
  double b0 = 0, b1 = 0, b2 = 0;
  std::vector<double> y;
  y.reserve(n);
  for (std::size_t i = 0; i < n + kWarmup; ++i) {
    const double w = nd(rng);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    if (i >= kWarmup) y.push_back(b0 + b1 + b2 + w * 0.1848);
  }
  double mean = 0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0;
  for (double& v : y) {
    v -= mean;
    ss += v * v;
  }
  const double rms = std::sqrt(ss / static_cast<double>(n));
  for (double& v : y) v /= rms;
  return y;
}

}  // namespace

std::vector<Stage> sample_stage_sequence(const SynthSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  SynthRng rng(seed);
  std::vector<Stage> out;
  out.reserve(n);
  std::size_t s = draw(rng, spec.stage_probs);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) s = draw(rng, spec.markov() ? spec.transitions[s] : spec.stage_probs);
    out.push_back(stage_from_index(static_cast<int>(s)));
  }
  return out;
}

std::vector<StagedRecording> generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<StagedRecording> recs(spec.subjects);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t subj = 0; subj < spec.subjects; ++subj) {
    StagedRecording& rec = recs[subj];
    char id[32];
    std::snprintf(id, sizeof id, "synth_%03zu", subj);
    rec.subject_id = id;
    rec.labels = sample_stage_sequence(spec, spec.epochs_per_subject, derive_seed(spec.seed, subj, 0));
    rec.samples.resize(spec.epochs_per_subject * kEpochLen);
    SynthRng rng(derive_seed(spec.seed, subj, 1));
    std::uniform_real_distribution<double> unit;
    std::normal_distribution<double> nd;
    std::vector<int> rendered;
    for (std::size_t e = 0; e < rec.labels.size(); ++e) {
      std::size_t recipe = static_cast<std::size_t>(stage_index(rec.labels[e]));
      if (spec.atypical_prob > 0 && unit(rng) < spec.atypical_prob) {
        const auto other = std::uniform_int_distribution<std::size_t>(0, kNumStages - 2)(rng);
        recipe = other >= recipe ? other + 1 : other;
      }
      rendered.push_back(static_cast<int>(recipe));
      const StageRecipe& r = spec.recipes[recipe];
      const double amp = r.amplitude * std::exp(spec.amplitude_jitter * nd(rng));
      const auto band = band_noise(rng, r.center_hz - r.width_hz / 2, r.center_hz + r.width_hz / 2, kEpochLen);
      const auto bg = pink_noise(rng, kEpochLen);
      float* dst = rec.samples.data() + e * kEpochLen;
      for (std::size_t i = 0; i < kEpochLen; ++i)
        dst[i] = static_cast<float>(amp * band[i] + spec.background_rms * bg[i]);
    }
    rec.provenance = {{"source", "synth"}, {"spec", spec.to_json()}, {"subject_index", subj},
                      {"rendered_recipe", rendered}};
  }
  return recs;
}

void export_edf(const std::vector<StagedRecording>& recs, const std::filesystem::path& dir,
                const std::string& channel) {
  std::filesystem::create_directories(dir);
  for (const auto& rec : recs) {
    rec.validate();
    if (rec.sample_rate != kTargetRate) throw ConfigError("EDF export expects 100 Hz recordings");
    const auto [lo, hi] = std::minmax_element(rec.samples.begin(), rec.samples.end());
    const double span = std::max(1e-6, static_cast<double>(*hi) - static_cast<double>(*lo));
    edf::RecordingHeader h;
    h.patient_id = rec.subject_id;
    h.recording_id = "synthetic";
    edf::SignalSpec s;
    s.label = channel;
    s.physical_dimension = "uV";
    s.physical_min = static_cast<double>(*lo) - 0.01 * span;
    s.physical_max = static_cast<double>(*hi) + 0.01 * span;
    s.samples_per_record = static_cast<int>(kTargetRate);
    h.signals = {s};
    h.record_duration = 1.0;
    h.num_data_records = static_cast<std::int64_t>(rec.samples.size() / static_cast<std::size_t>(kTargetRate));
    std::vector<std::int16_t> digital(static_cast<std::size_t>(h.num_data_records) * kTargetRate);
    for (std::size_t i = 0; i < digital.size(); ++i) digital[i] = s.to_digital(rec.samples[i]);
    edf::write_edf_file(dir / (rec.subject_id + ".edf"), h, {digital});

    std::ofstream csv(dir / (rec.subject_id + ".csv"));
    if (!csv) throw IoError("cannot write " + (dir / (rec.subject_id + ".csv")).string());
    csv << "onset_sec,stage\n";
    for (std::size_t e = 0; e < rec.num_epochs(); ++e)
      csv << static_cast<double>(e) * kEpochSeconds << ',' << stage_name(rec.labels[e]) << '\n';
  }
}

}  // namespace neuronet
