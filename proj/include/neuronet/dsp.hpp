#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace neuronet::dsp {

// Direct-form II transposed second-order section, a0 normalised to 1.
// First-order sections carry b2 = a2 = 0.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};
using Sos = std::vector<Biquad>;

// Digital Butterworth designs via the prewarped bilinear transform.
Sos butter_lowpass(int order, double cutoff_hz, double fs);
Sos butter_highpass(int order, double cutoff_hz, double fs);
// High-pass at `low_hz` cascaded with low-pass at `high_hz`, each of `order`.
// The low-pass stage is omitted when `high_hz` is at or above Nyquist.
Sos butter_bandpass(int order, double low_hz, double high_hz, double fs);

std::complex<double> sos_response(const Sos& sos, double freq_hz, double fs);

// Single forward pass, zero initial state.
std::vector<double> sosfilt(const Sos& sos, std::span<const double> x);
// Zero-phase forward-backward filtering with odd-extension padding and
// steady-state initial conditions (same scheme as scipy's sosfiltfilt).
std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x);

struct Ratio {
  std::size_t up = 1;
  std::size_t down = 1;
};
// Reduced up/down pair mapping `from_hz` to `to_hz`. Non-integer rates are
// approximated at millihertz resolution.
Ratio rational_ratio(double from_hz, double to_hz);

// Polyphase rational resampling with a Kaiser-windowed sinc anti-aliasing
// filter (beta 5, 10 * max(up, down) taps per side). The output is aligned to
// the input (filter delay removed) and has round(n * up / down) samples.
std::vector<double> resample_poly(std::span<const double> x, std::size_t up, std::size_t down);

}  // namespace neuronet::dsp
