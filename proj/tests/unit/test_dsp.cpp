#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "neuronet/dsp.hpp"
#include "neuronet/errors.hpp"

using namespace neuronet;

namespace {

// Analytic squared magnitude of a digital Butterworth obtained through the
// prewarped bilinear transform: with w = tan(pi f / fs), wc = tan(pi fc / fs),
// |H_lp|^2 = 1 / (1 + (w / wc)^(2n)) and |H_hp|^2 = 1 / (1 + (wc / w)^(2n)).
double lp_mag2(int n, double f, double fc, double fs) {
  const double w = std::tan(std::numbers::pi * f / fs), wc = std::tan(std::numbers::pi * fc / fs);
  return 1.0 / (1.0 + std::pow(w / wc, 2 * n));
}
double hp_mag2(int n, double f, double fc, double fs) {
  const double w = std::tan(std::numbers::pi * f / fs), wc = std::tan(std::numbers::pi * fc / fs);
  return 1.0 / (1.0 + std::pow(wc / w, 2 * n));
}

std::vector<double> sine(std::size_t n, double f, double fs, double phase = 0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / fs + phase);
  return x;
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("butterworth magnitude responses match the analytic formula") {
    for (int order : {1, 2, 4, 5}) {
      const auto lp = dsp::butter_lowpass(order, 30, 200);
      const auto hp = dsp::butter_highpass(order, 1.5, 200);
      const auto bp = dsp::butter_bandpass(order, 1, 50, 256);
      for (double f : {0.3, 1.0, 1.5, 5.0, 20.0, 30.0, 45.0, 70.0, 99.0}) {
        CHECK(std::norm(dsp::sos_response(lp, f, 200)) == doctest::Approx(lp_mag2(order, f, 30, 200)).epsilon(1e-9));
        CHECK(std::norm(dsp::sos_response(hp, f, 200)) == doctest::Approx(hp_mag2(order, f, 1.5, 200)).epsilon(1e-9));
        CHECK(std::norm(dsp::sos_response(bp, f, 256)) ==
              doctest::Approx(hp_mag2(order, f, 1, 256) * lp_mag2(order, f, 50, 256)).epsilon(1e-9));
      }
    }
    // Low-pass stage dropped when the upper edge reaches Nyquist.
    const auto bp = dsp::butter_bandpass(5, 1, 50, 100);
    CHECK(std::norm(dsp::sos_response(bp, 40, 100)) == doctest::Approx(hp_mag2(5, 40, 1, 100)).epsilon(1e-9));
  }

  TEST_CASE("sosfilt is causal and matches a direct-form difference equation") {
    const auto sos = dsp::butter_lowpass(2, 10, 100);
    REQUIRE(sos.size() == 1);
    const auto& s = sos[0];
    std::vector<double> x(50, 0.0);
    x[0] = 1;
    x[7] = -0.5;
    const auto y = dsp::sosfilt(sos, x);
    std::vector<double> ref(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
      auto X = [&](long i) { return i < 0 ? 0.0 : x[static_cast<std::size_t>(i)]; };
      auto Y = [&](long i) { return i < 0 ? 0.0 : ref[static_cast<std::size_t>(i)]; };
      const long k = static_cast<long>(n);
      ref[n] = s.b0 * X(k) + s.b1 * X(k - 1) + s.b2 * X(k - 2) - s.a1 * Y(k - 1) - s.a2 * Y(k - 2);
    }
    for (std::size_t n = 0; n < x.size(); ++n) CHECK(y[n] == doctest::Approx(ref[n]).epsilon(1e-12));
  }

  TEST_CASE("sosfiltfilt is zero phase and passes in-band sinusoids") {
    const auto sos = dsp::butter_bandpass(5, 1, 40, 100);
    const auto x = sine(3000, 8, 100);
    const auto y = dsp::sosfiltfilt(sos, x);
    // Zero phase: in the middle the output tracks the input almost exactly.
    double err = 0;
    for (std::size_t i = 500; i < 2500; ++i) err = std::max(err, std::abs(y[i] - x[i]));
    CHECK(err < 1e-3);
    // Out of band: 0.1 Hz drift is removed.
    const auto drift = sine(3000, 0.1, 100);
    const auto yd = dsp::sosfiltfilt(sos, drift);
    double peak = 0;
    for (std::size_t i = 500; i < 2500; ++i) peak = std::max(peak, std::abs(yd[i]));
    CHECK(peak < 0.01);
    CHECK(dsp::sosfiltfilt(sos, std::vector<double>(5, 1.0)).size() == 5);
  }

  TEST_CASE("rational ratios") {
    auto r = dsp::rational_ratio(256, 100);
    CHECK(r.up == 25);
    CHECK(r.down == 64);
    r = dsp::rational_ratio(100, 100);
    CHECK((r.up == 1 && r.down == 1));
    r = dsp::rational_ratio(200, 100);
    CHECK((r.up == 1 && r.down == 2));
    r = dsp::rational_ratio(500, 100);
    CHECK((r.up == 1 && r.down == 5));
    CHECK_THROWS_AS(dsp::rational_ratio(0, 100), ConfigError);
    CHECK_THROWS_AS(dsp::rational_ratio(100.0007, 100), UnsupportedRate);
  }

  TEST_CASE("resample_poly lengths and sinusoid fidelity") {
    for (auto [fs, up, down] : std::vector<std::array<std::size_t, 3>>{{256, 25, 64}, {200, 1, 2}, {50, 2, 1}}) {
      const std::size_t n = fs * 30;
      const auto x = sine(n, 5, static_cast<double>(fs));
      const auto y = dsp::resample_poly(x, up, down);
      CHECK(y.size() == 3000);
      // Away from the edges the output equals the same sinusoid at 100 Hz.
      const auto ref = sine(3000, 5, 100);
      double err = 0;
      for (std::size_t i = 200; i < 2800; ++i) err = std::max(err, std::abs(y[i] - ref[i]));
      CHECK(err < 5e-3);
    }
    const std::vector<double> odd(7, 1.0);
    CHECK(dsp::resample_poly(odd, 1, 2).size() == 4);  // round(3.5)
  }
}
