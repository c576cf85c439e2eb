#include <cstring>
#include <random>

#include "doctest.h"
#include "neuronet/annotations.hpp"
#include "neuronet/edf.hpp"
#include "neuronet/errors.hpp"
#include "test_support.hpp"

using namespace neuronet;

namespace {

// Overwrites one fixed-width ASCII header field, space padded.
void poke(std::vector<std::uint8_t>& bytes, std::size_t offset, std::size_t width, const std::string& text) {
  for (std::size_t i = 0; i < width; ++i) bytes[offset + i] = i < text.size() ? static_cast<std::uint8_t>(text[i]) : ' ';
}

}  // namespace

TEST_SUITE("edf") {
  TEST_CASE("round trip is byte exact and preserves every field") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const auto r = testsupport::random_edf(rng);
      const auto bytes = edf::write_edf(r.header, r.digital);
      REQUIRE(bytes.size() == r.header.header_bytes() + r.header.num_data_records * r.header.record_bytes());
      const auto f = edf::parse_edf(bytes);
      CHECK(f.digital == r.digital);
      CHECK(f.header.patient_id == r.header.patient_id);
      CHECK(f.header.start.year == r.header.start.year);
      CHECK(f.header.record_duration == r.header.record_duration);
      for (std::size_t s = 0; s < r.header.signals.size(); ++s) {
        CHECK(f.header.signals[s].label == r.header.signals[s].label);
        CHECK(f.header.signals[s].physical_min == r.header.signals[s].physical_min);
        CHECK(f.header.signals[s].digital_max == r.header.signals[s].digital_max);
        CHECK(f.header.signals[s].samples_per_record == r.header.signals[s].samples_per_record);
        // physical = pmin + (d - dmin) * gain
        const auto& sp = r.header.signals[s];
        const double g = (sp.physical_max - sp.physical_min) / (sp.digital_max - sp.digital_min);
        CHECK(f.physical[s][0] == doctest::Approx(sp.physical_min + (r.digital[s][0] - sp.digital_min) * g));
      }
      CHECK(edf::write_edf(f.header, f.digital) == bytes);
    }
  }

  TEST_CASE("physical/digital mapping clamps and rounds") {
    edf::SignalSpec s;
    s.physical_min = -100;
    s.physical_max = 100;
    s.digital_min = -1000;
    s.digital_max = 1000;
    CHECK(s.to_digital(0.0) == 0);
    CHECK(s.to_digital(1e9) == 1000);
    CHECK(s.to_digital(-1e9) == -1000);
    CHECK(s.to_physical(s.to_digital(12.34)) == doctest::Approx(12.3).epsilon(1e-9));
  }

  TEST_CASE("truncation anywhere raises ParseError") {
    std::mt19937_64 rng(12);
    const auto r = testsupport::random_edf(rng);
    const auto bytes = edf::write_edf(r.header, r.digital);
    for (std::size_t cut : {std::size_t{0}, std::size_t{10}, std::size_t{255}, std::size_t{256},
                            r.header.header_bytes() - 1, r.header.header_bytes() + 1, bytes.size() - 1}) {
      std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
      CHECK_THROWS_AS(edf::parse_edf(part), ParseError);
    }
  }

  TEST_CASE("malformed header fields and calibration") {
    std::mt19937_64 rng(13);
    auto r = testsupport::random_edf(rng);
    r.header.signals.resize(1);
    r.digital.resize(1);
    const auto good = edf::write_edf(r.header, r.digital);
    auto bad = good;
    poke(bad, 252, 4, "x");  // signal count
    CHECK_THROWS_AS(edf::parse_edf(bad), HeaderFieldError);
    bad = good;
    poke(bad, 168, 8, "32/13/99");  // start date with bad separators
    CHECK_THROWS_AS(edf::parse_edf(bad), HeaderFieldError);
    bad = good;
    poke(bad, 184, 8, "999");  // header byte count inconsistent
    CHECK_THROWS_AS(edf::parse_edf(bad), HeaderFieldError);
    bad = good;
    poke(bad, 244, 8, "abc");  // record duration
    CHECK_THROWS_AS(edf::parse_edf(bad), HeaderFieldError);
    // Per-signal fields start at 256: label 16, transducer 80, dimension 8,
    // pmin 8, pmax 8, dmin 8, dmax 8.
    bad = good;
    poke(bad, 256 + 16 + 80 + 8, 8, "5");
    poke(bad, 256 + 16 + 80 + 16, 8, "5");
    CHECK_THROWS_AS(edf::parse_edf(bad), DegenerateCalibration);
    bad = good;
    poke(bad, 256 + 16 + 80 + 24, 8, "7");
    poke(bad, 256 + 16 + 80 + 32, 8, "7");
    CHECK_THROWS_AS(edf::parse_edf(bad), DegenerateCalibration);
  }

  TEST_CASE("record count -1 is inferred from the body") {
    std::mt19937_64 rng(14);
    auto r = testsupport::random_edf(rng);
    auto bytes = edf::write_edf(r.header, r.digital);
    poke(bytes, 236, 8, "-1");
    const auto f = edf::parse_edf(bytes);
    CHECK(f.header.num_data_records == r.header.num_data_records);
    CHECK(f.digital == r.digital);
  }

  TEST_CASE("signal lookup and file I/O") {
    testsupport::TempDir dir("edf");
    std::mt19937_64 rng(15);
    const auto r = testsupport::random_edf(rng);
    edf::write_edf_file(dir.path / "a.edf", r.header, r.digital);
    const auto f = edf::read_edf(dir.path / "a.edf");
    CHECK(f.find_signal("  eeg fpz-cz ") == 0);
    CHECK_THROWS_AS(f.find_signal("EOG"), ConfigError);
    CHECK_THROWS_AS(edf::read_edf(dir.path / "missing.edf"), IoError);
    CHECK(f.sample_rate(0) == r.header.signals[0].samples_per_record / r.header.record_duration);
  }

  TEST_CASE("write rejects inconsistent sample counts") {
    std::mt19937_64 rng(16);
    auto r = testsupport::random_edf(rng);
    r.digital[0].push_back(0);
    CHECK_THROWS_AS(edf::write_edf(r.header, r.digital), ShapeError);
  }
}

TEST_SUITE("annotations") {
  TEST_CASE("stage token canonicalisation") {
    CHECK(canonical_stage_token("Sleep stage W") == "W");
    CHECK(canonical_stage_token("Sleep stage 4") == "N4");
    CHECK(canonical_stage_token(" r ") == "REM");
    CHECK(canonical_stage_token("Movement time") == "Movement");
    CHECK(canonical_stage_token("Sleep stage ?") == "?");
    CHECK(map_stage_token("N4") == Stage::N3);
    CHECK_FALSE(map_stage_token("M").has_value());
    CHECK_THROWS_AS(canonical_stage_token("Sleep stage 9"), UnknownStage);
  }

  TEST_CASE("CSV annotations with header and open durations") {
    std::istringstream in("onset_sec,stage\n0,W\n\n60,N1\n90,Sleep stage 3\n");
    const auto ann = read_csv_annotations(in);
    REQUIRE(ann.size() == 3);
    CHECK(ann[2].token == "N3");
    const auto tokens = parse_stage_annotations(ann, 150);
    CHECK(tokens == std::vector<std::string>{"W", "W", "N1", "N3", "N3"});
    std::istringstream bad("0,W\nabc,N1\n");
    CHECK_THROWS_AS(read_csv_annotations(bad), ConfigError);
  }

  TEST_CASE("coverage gaps and overlaps") {
    std::vector<StageAnnotation> ann = {{0, 60, "W"}, {90, 30, "N2"}};
    CHECK_THROWS_AS(parse_stage_annotations(ann, 120), CoverageGap);
    try {
      parse_stage_annotations(ann, 120);
    } catch (const CoverageGap& g) {
      CHECK(g.begin_sec() == 60);
      CHECK(g.end_sec() == 90);
    }
    // Overlap: the later onset wins.
    std::vector<StageAnnotation> ov = {{0, 120, "W"}, {30, 30, "REM"}};
    CHECK(parse_stage_annotations(ov, 90) == std::vector<std::string>{"W", "REM", "W"});
    CHECK(annotation_coverage_end(ann) == 120);
  }

  TEST_CASE("TAL parsing and EDF+ annotation signals") {
    auto tal = [](std::string s) {
      s.push_back('\0');
      return s;
    };
    const std::string raw = tal("+0\x14\x14") + tal("+0\x15" "30\x14Sleep stage W\x14") +
                            tal("+30\x14Lights off\x14Sleep stage 1\x14");
    std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
    const auto tals = parse_tals(bytes);
    REQUIRE(tals.size() == 3);
    CHECK(tals[0].texts.empty());
    CHECK(tals[1].duration == 30);
    CHECK(tals[2].texts == std::vector<std::string>{"Lights off", "Sleep stage 1"});

    edf::RecordingHeader h;
    h.reserved = "EDF+C";
    h.num_data_records = 1;
    h.record_duration = 60;
    edf::SignalSpec a;
    a.label = "EDF Annotations";
    a.digital_min = -32768;
    a.digital_max = 32767;
    auto padded = bytes;
    padded.resize(64, 0);
    a.samples_per_record = 32;
    h.signals.push_back(a);
    const auto f = edf::parse_edf(edf::write_edf(h, {edf::bytes_to_samples(padded)}));
    const auto ann = read_tal_annotations(f);
    REQUIRE(ann.size() == 2);
    CHECK(ann[0].token == "W");
    CHECK(ann[1].token == "N1");
    CHECK(std::isnan(ann[1].duration));
  }
}
