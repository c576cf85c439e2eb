#include "neuronet/signal_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "neuronet/annotations.hpp"
#include "neuronet/dsp.hpp"
#include "neuronet/edf.hpp"
#include "neuronet/errors.hpp"

namespace neuronet {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "cache IO assumes little-endian host");

namespace {

constexpr char kCacheMagic[8] = {'N', 'N', 'C', 'A', 'C', 'H', 'E', '1'};

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

}  // namespace

std::vector<double> preprocess(std::span<const double> signal, double source_rate,
                               const PreprocessOptions& opts, PreprocessInfo* info) {
  if (source_rate < kTargetRate)
    throw UnsupportedRate("source rate " + std::to_string(source_rate) +
                          " Hz is below 100 Hz; the 50 Hz band edge would exceed Nyquist");
  if (static_cast<double>(signal.size()) < source_rate)
    throw ConfigError("signal shorter than one second");
  const auto sos = dsp::butter_bandpass(opts.filter_order, opts.low_hz, opts.high_hz, source_rate);
  const auto filtered = dsp::sosfiltfilt(sos, signal);
  const auto ratio = dsp::rational_ratio(source_rate, kTargetRate);
  if (info) {
    info->source_rate = source_rate;
    info->up = ratio.up;
    info->down = ratio.down;
    info->lowpass_applied = sos.size() > static_cast<std::size_t>((opts.filter_order + 1) / 2);
  }
  auto out = dsp::resample_poly(filtered, ratio.up, ratio.down);
  // resample_poly rounds n*up/down; pin the length to round(seconds * 100) for
  // rates approximated at millihertz resolution.
  const auto want = static_cast<std::size_t>(
      std::llround(static_cast<double>(signal.size()) / source_rate * kTargetRate));
  out.resize(want, out.empty() ? 0.0 : out.back());
  return out;
}

void StagedRecording::validate() const {
  if (samples.size() != labels.size() * epoch_len)
    throw ShapeError("recording " + subject_id + ": epochs/labels length mismatch");
  for (float v : samples)
    if (!std::isfinite(v)) throw NumericalError("recording " + subject_id);
}

StagedRecording make_staged_recording(const std::string& subject_id, std::span<const double> signal100,
                                      const std::vector<std::string>& raw_tokens,
                                      std::vector<std::size_t>* dropped) {
  StagedRecording rec;
  rec.subject_id = subject_id;
  const std::size_t n_signal = signal100.size() / kEpochLen;
  const std::size_t n = std::min(n_signal, raw_tokens.size());
  std::vector<std::size_t> drop;
  for (std::size_t e = 0; e < n; ++e) {
    const auto stage = map_stage_token(canonical_stage_token(raw_tokens[e]));
    if (!stage) {
      drop.push_back(e);
      continue;
    }
    rec.labels.push_back(*stage);
    for (std::size_t k = 0; k < kEpochLen; ++k)
      rec.samples.push_back(static_cast<float>(signal100[e * kEpochLen + k]));
  }
  rec.provenance["dropped_epochs"] = drop;
  rec.provenance["source_epochs"] = n;
  if (dropped) *dropped = std::move(drop);
  rec.validate();
  return rec;
}

StagedRecording z_normalize(const StagedRecording& rec) {
  if (rec.samples.empty()) throw ConfigError("z_normalize: empty recording " + rec.subject_id);
  double mean = 0.0;
  for (float v : rec.samples) mean += v;
  mean /= static_cast<double>(rec.samples.size());
  double var = 0.0;
  for (float v : rec.samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(rec.samples.size());
  if (!(var > 1e-20)) throw DegenerateSignal("recording " + rec.subject_id + " has zero variance");
  const double inv = 1.0 / std::sqrt(var);
  StagedRecording out = rec;
  for (auto& v : out.samples) v = static_cast<float>((v - mean) * inv);
  out.provenance["znorm"] = {{"scope", "recording"}, {"mean", mean}, {"std", std::sqrt(var)}};
  return out;
}

StagedRecording ingest_recording(const fs::path& edf_path, const std::string& channel,
                                 const fs::path& annotations, const PreprocessOptions& opts) {
  const auto file = edf::read_edf(edf_path);
  const std::size_t sig = file.find_signal(channel);
  const double rate = file.sample_rate(sig);

  std::vector<StageAnnotation> ann;
  if (annotations.empty()) {
    ann = read_tal_annotations(file);
  } else if (annotations.extension() == ".csv") {
    ann = read_csv_annotations(annotations);
  } else {
    ann = read_tal_annotations(edf::read_edf(annotations));
  }
  if (ann.empty()) throw ConfigError("no stage annotations found for " + edf_path.string());

  PreprocessInfo info;
  const auto signal100 = preprocess(file.physical[sig], rate, opts, &info);
  const double span = std::min(file.header.duration_seconds(), annotation_coverage_end(ann));
  const auto tokens = parse_stage_annotations(ann, span);
  std::vector<std::size_t> dropped;
  auto rec = make_staged_recording(edf_path.stem().string(), signal100, tokens, &dropped);
  rec.provenance["source"] = edf_path.string();
  rec.provenance["channel"] = file.header.signals[sig].label;
  rec.provenance["filter"] = {{"type", "butterworth"},
                              {"order", opts.filter_order},
                              {"band_hz", {opts.low_hz, opts.high_hz}},
                              {"zero_phase", true},
                              {"lowpass_applied", info.lowpass_applied}};
  rec.provenance["resample"] = {{"source_rate", info.source_rate}, {"up", info.up}, {"down", info.down}};
  return rec;
}

void save_cache(const StagedRecording& rec, const fs::path& stem) {
  rec.validate();
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::ofstream out(with_ext(stem, ".nncache"), std::ios::binary);
  if (!out) throw IoError("cannot write " + with_ext(stem, ".nncache").string());
  const auto n = static_cast<std::uint32_t>(rec.num_epochs());
  const auto len = static_cast<std::uint32_t>(rec.epoch_len);
  out.write(kCacheMagic, sizeof kCacheMagic);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(reinterpret_cast<const char*>(rec.samples.data()),
            static_cast<std::streamsize>(rec.samples.size() * sizeof(float)));
  std::vector<std::uint8_t> labels(rec.labels.size());
  std::transform(rec.labels.begin(), rec.labels.end(), labels.begin(),
                 [](Stage s) { return static_cast<std::uint8_t>(s); });
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!out) throw IoError("short write to " + with_ext(stem, ".nncache").string());

  json side = rec.provenance;
  side["subject_id"] = rec.subject_id;
  side["sample_rate"] = rec.sample_rate;
  side["epoch_len"] = rec.epoch_len;
  side["n_epochs"] = rec.num_epochs();
  std::ofstream js(with_ext(stem, ".json"));
  if (!js) throw IoError("cannot write " + with_ext(stem, ".json").string());
  js << side.dump(2) << '\n';
}

StagedRecording load_cache(const fs::path& stem) {
  std::ifstream in(with_ext(stem, ".nncache"), std::ios::binary);
  if (!in) throw IoError("cannot open " + with_ext(stem, ".nncache").string());
  char magic[8];
  std::uint32_t n = 0, len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in || std::memcmp(magic, kCacheMagic, 8) != 0)
    throw IoError("not a neuronet cache: " + with_ext(stem, ".nncache").string());
  StagedRecording rec;
  rec.epoch_len = len;
  rec.samples.resize(static_cast<std::size_t>(n) * len);
  in.read(reinterpret_cast<char*>(rec.samples.data()),
          static_cast<std::streamsize>(rec.samples.size() * sizeof(float)));
  std::vector<std::uint8_t> labels(n);
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(n));
  if (!in) throw IoError("truncated cache " + with_ext(stem, ".nncache").string());
  for (auto l : labels) {
    if (l >= kNumStages) throw IoError("invalid label byte in " + with_ext(stem, ".nncache").string());
    rec.labels.push_back(static_cast<Stage>(l));
  }
  rec.subject_id = stem.filename().string();
  std::ifstream js(with_ext(stem, ".json"));
  if (js) {
    try {
      js >> rec.provenance;
    } catch (const json::exception& e) {
      throw IoError("corrupt cache sidecar: " + std::string(e.what()));
    }
    rec.subject_id = rec.provenance.value("subject_id", rec.subject_id);
    rec.sample_rate = rec.provenance.value("sample_rate", kTargetRate);
    for (const char* k : {"subject_id", "sample_rate", "epoch_len", "n_epochs"}) rec.provenance.erase(k);
  }
  rec.validate();
  return rec;
}

std::vector<StagedRecording> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<fs::path> stems;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".nncache") stems.push_back(entry.path().parent_path() / entry.path().stem());
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw IoError("no .nncache recordings in " + dir.string());
  std::vector<StagedRecording> out;
  for (const auto& s : stems) out.push_back(load_cache(s));
  return out;
}

void save_dataset(const std::vector<StagedRecording>& recs, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& r : recs) save_cache(r, dir / r.subject_id);
}

}  // namespace neuronet
