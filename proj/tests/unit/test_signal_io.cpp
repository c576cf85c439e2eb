#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "neuronet/edf.hpp"
#include "neuronet/frame_network.hpp"
#include "neuronet/framing.hpp"
#include "neuronet/signal_io.hpp"
#include "test_support.hpp"

using namespace neuronet;

namespace {

// 1-channel EDF at `fs` Hz holding a 10 Hz sine plus a slow drift.
void write_test_edf(const std::filesystem::path& path, int fs, int seconds, const std::string& label = "EEG Fpz-Cz") {
  edf::RecordingHeader h;
  h.num_data_records = seconds;
  h.record_duration = 1;
  edf::SignalSpec s;
  s.label = label;
  s.physical_min = -200;
  s.physical_max = 200;
  s.samples_per_record = fs;
  h.signals.push_back(s);
  std::vector<std::int16_t> d(static_cast<std::size_t>(fs * seconds));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double t = static_cast<double>(i) / fs;
    d[i] = s.to_digital(40 * std::sin(2 * std::numbers::pi * 10 * t) + 30 * std::sin(2 * std::numbers::pi * 0.05 * t));
  }
  edf::write_edf_file(path, h, {d});
}

}  // namespace

TEST_SUITE("signal_io") {
  TEST_CASE("preprocess output length, band limits and rate checks") {
    for (double fs : {100.0, 128.0, 200.0, 256.0, 500.0}) {
      const auto n = static_cast<std::size_t>(fs * 60);
      std::vector<double> x(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2 * std::numbers::pi * 10 * static_cast<double>(i) / fs) + 3.0;
      PreprocessInfo info;
      const auto y = preprocess(x, fs, {}, &info);
      CHECK(y.size() == 6000);
      // DC removed, 10 Hz kept.
      double mean = 0;
      for (std::size_t i = 1000; i < 5000; ++i) mean += y[i];
      CHECK(std::abs(mean / 4000) < 0.01);
      // Amplitude from the RMS: samples of a 10 Hz sine at 100 Hz never hit the crest.
      double ss = 0;
      for (std::size_t i = 1000; i < 5000; ++i) ss += y[i] * y[i];
      CHECK(std::sqrt(2 * ss / 4000) == doctest::Approx(1.0).epsilon(0.02));
      CHECK(info.lowpass_applied == (fs > 100.0));
    }
    std::vector<double> x(100 * 60, 0.0);
    CHECK_THROWS_AS(preprocess(x, 50, {}), UnsupportedRate);
    CHECK_THROWS_AS(preprocess(std::vector<double>(10, 0.0), 100, {}), ConfigError);
  }

  TEST_CASE("staged recording drops unscorable epochs and ignores trailing signal") {
    std::vector<double> sig(3000 * 4 + 1234, 1.0);
    for (std::size_t i = 0; i < sig.size(); ++i) sig[i] = static_cast<double>(i);
    std::vector<std::size_t> dropped;
    const auto rec = make_staged_recording("s", sig, {"W", "?", "N4", "REM"}, &dropped);
    CHECK(rec.num_epochs() == 3);
    CHECK(dropped == std::vector<std::size_t>{1});
    CHECK(rec.labels == std::vector<Stage>{Stage::W, Stage::N3, Stage::REM});
    CHECK(rec.epoch(1)[0] == 6000.0f);
    CHECK_NOTHROW(rec.validate());
    auto broken = rec;
    broken.labels.pop_back();
    CHECK_THROWS_AS(broken.validate(), ShapeError);
  }

  TEST_CASE("z-normalisation") {
    StagedRecording r;
    r.subject_id = "z";
    r.samples.assign(2 * kEpochLen, 0.0f);
    for (std::size_t i = 0; i < r.samples.size(); ++i) r.samples[i] = static_cast<float>(5 + (i % 7));
    r.labels = {Stage::W, Stage::N1};
    const auto z = z_normalize(r);
    double m = 0, v = 0;
    for (float x : z.samples) m += x;
    m /= static_cast<double>(z.samples.size());
    for (float x : z.samples) v += (x - m) * (x - m);
    CHECK(std::abs(m) < 1e-5);
    CHECK(v / static_cast<double>(z.samples.size()) == doctest::Approx(1.0).epsilon(1e-4));
    r.samples.assign(r.samples.size(), 2.0f);
    CHECK_THROWS_AS(z_normalize(r), DegenerateSignal);
  }

  TEST_CASE("cache round trip and dataset loading") {
    testsupport::TempDir dir("cache");
    StagedRecording r;
    r.subject_id = "b_subject";
    r.samples.resize(3 * kEpochLen);
    for (std::size_t i = 0; i < r.samples.size(); ++i) r.samples[i] = static_cast<float>(std::sin(0.01 * i));
    r.labels = {Stage::N2, Stage::N3, Stage::REM};
    r.provenance["note"] = "x";
    auto r2 = r;
    r2.subject_id = "a_subject";
    save_dataset({r, r2}, dir.path);
    const auto back = load_cache(dir.path / "b_subject");
    CHECK(back.samples == r.samples);
    CHECK(back.labels == r.labels);
    CHECK(back.provenance["note"] == "x");
    const auto all = load_dataset(dir.path);
    REQUIRE(all.size() == 2);
    CHECK(all[0].subject_id == "a_subject");
    std::ofstream(dir.path / "junk.nncache") << "garbage";
    CHECK_THROWS_AS(load_cache(dir.path / "junk"), IoError);
    CHECK_THROWS_AS(load_dataset(dir.path / "nowhere"), IoError);
  }

  TEST_CASE("ingest from EDF with CSV annotations and from EDF+ hypnogram") {
    testsupport::TempDir dir("ingest");
    write_test_edf(dir.path / "rec.edf", 200, 150);
    std::ofstream(dir.path / "rec.csv") << "onset_sec,stage\n0,W\n30,Sleep stage 2\n60,?\n90,R\n";
    const auto rec = ingest_recording(dir.path / "rec.edf", "eeg fpz-cz", dir.path / "rec.csv");
    CHECK(rec.subject_id == "rec");
    // 4 annotated epochs (coverage ends at 120 s), the '?' one dropped.
    CHECK(rec.labels == std::vector<Stage>{Stage::W, Stage::N2, Stage::REM});
    CHECK(rec.provenance["resample"]["down"] == 2);
    CHECK_THROWS_AS(ingest_recording(dir.path / "rec.edf", "EOG", dir.path / "rec.csv"), ConfigError);

    // Hypnogram in a separate EDF+ file.
    edf::RecordingHeader h;
    h.reserved = "EDF+C";
    h.num_data_records = 1;
    h.record_duration = 150;
    edf::SignalSpec a;
    a.label = "EDF Annotations";
    a.digital_min = -32768;
    a.digital_max = 32767;
    a.samples_per_record = 64;
    h.signals.push_back(a);
    std::string tal = std::string("+0\x14\x14") + '\0' + "+0\x15" "60\x14Sleep stage 1\x14" + '\0' +
                      "+60\x15" "90\x14Sleep stage 3\x14" + '\0';
    std::vector<std::uint8_t> bytes(tal.begin(), tal.end());
    bytes.resize(128, 0);
    edf::write_edf_file(dir.path / "rec-hyp.edf", h, {edf::bytes_to_samples(bytes)});
    const auto rec2 = ingest_recording(dir.path / "rec.edf", "EEG Fpz-Cz", dir.path / "rec-hyp.edf");
    CHECK(rec2.labels == std::vector<Stage>{Stage::N1, Stage::N1, Stage::N3, Stage::N3, Stage::N3});
  }
}

TEST_SUITE("framing") {
  TEST_CASE("frame counts") {
    CHECK(frame_count(3000, {300, 75}) == 37);
    CHECK(frame_count(3000, {3000, 3000}) == 1);
    CHECK(frame_count(3000, {300, 150}) == 19);
    CHECK(frame_count(3000, {500, 62}) == 41);
    CHECK_THROWS_AS(FrameConfig({300, 400}).validate(3000), ConfigError);
    CHECK_THROWS_AS(FrameConfig({4000, 100}).validate(3000), ConfigError);
    CHECK_THROWS_AS(FrameConfig({300, 0}).validate(3000), ConfigError);
  }

  TEST_CASE("frame contents and batching") {
    std::vector<double> e(3000);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = static_cast<double>(i);
    const auto f = frame_epoch(std::span<const double>(e), {300, 75});
    REQUIRE(f.shape == Shape{37, 300});
    CHECK(f.at(0, 0) == 0);
    CHECK(f.at(5, 7) == 5 * 75 + 7);
    CHECK(f.at(36, 299) == 36 * 75 + 299);

    Tensor batch({2, 3000});
    for (std::size_t i = 0; i < 6000; ++i) batch[i] = static_cast<double>(i);
    const auto fb = frame_batch(batch, {300, 150});
    REQUIRE(fb.shape == Shape{38, 1, 300});
    CHECK(fb[19 * 300] == 3000);  // first frame of the second sample
    CHECK_THROWS_AS(frame_batch(Tensor({3000}), {300, 75}), ShapeError);
  }
}

TEST_SUITE("frame_network") {
  TEST_CASE("shapes, validation and eval-mode batch independence") {
    FrameNetConfig cfg;
    cfg.shared_channels = 4;
    cfg.branch_channels = 4;
    cfg.embed_dim = 6;
    nn::ParamSet ps;
    nn::Rng rng(1);
    FrameNetwork net(ps, "fn.", cfg, rng);
    std::mt19937_64 r(2);
    const auto frames = testsupport::random_tensor({5, 1, 300}, r);
    const auto y = net(ag::constant(frames), true);
    CHECK(y.shape() == Shape{5, 6});
    CHECK(cfg.trunk_len(300) == 75);

    // Eval mode: a frame's embedding does not depend on its batch mates.
    const auto all = net(ag::constant(frames), false).value();
    Tensor one({1, 1, 300});
    std::copy(frames.data.begin() + 600, frames.data.begin() + 900, one.data.begin());
    const auto single = net(ag::constant(one), false).value();
    for (std::size_t d = 0; d < 6; ++d) CHECK(single[d] == doctest::Approx(all[2 * 6 + d]).epsilon(1e-12));

    CHECK_THROWS_AS(net(ag::constant(Tensor({2, 2, 300})), false), ShapeError);
    FrameNetConfig bad = cfg;
    bad.branch_kernels = {3, 3, 5};
    CHECK_THROWS_AS(bad.validate(300), ConfigError);
    bad.branch_kernels = {3, 4, 5};
    CHECK_THROWS_AS(bad.validate(300), ConfigError);
  }
}
