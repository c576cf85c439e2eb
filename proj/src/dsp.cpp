#include "neuronet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "neuronet/errors.hpp"

namespace neuronet::dsp {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

enum class Kind { Low, High };

Sos butter(int order, double cutoff_hz, double fs, Kind kind) {
  if (order < 1) throw ConfigError("Butterworth order must be >= 1");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0))
    throw ConfigError("Butterworth cutoff must lie in (0, fs/2)");
  const double k2 = 2.0 * fs;
  const double warped = k2 * std::tan(kPi * cutoff_hz / fs);
  Sos sos;
  // upper half-plane prototype poles plus the real pole for odd orders
  for (int i = 0; i < order / 2; ++i) {
    const double theta = kPi * (2.0 * i + order + 1) / (2.0 * order);
    const cd proto = std::polar(1.0, theta);
    const cd s = kind == Kind::Low ? warped * proto : warped / proto;
    const cd z = (k2 + s) / (k2 - s);
    Biquad q;
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    if (kind == Kind::Low) {
      q.b0 = 1; q.b1 = 2; q.b2 = 1;
    } else {
      q.b0 = 1; q.b1 = -2; q.b2 = 1;
    }
    sos.push_back(q);
  }
  if (order % 2 == 1) {
    const double s = -warped;  // real prototype pole at -1 maps to -warped for both kinds
    const double z = (k2 + s) / (k2 - s);
    Biquad q;
    q.a1 = -z;
    q.b0 = 1;
    q.b1 = kind == Kind::Low ? 1 : -1;
    sos.push_back(q);
  }
  // unit gain at DC (low-pass) or Nyquist (high-pass), per section
  for (auto& q : sos) {
    const double sign = kind == Kind::Low ? 1.0 : -1.0;
    const double num = q.b0 + sign * q.b1 + q.b2;
    const double den = 1.0 + sign * q.a1 + q.a2;
    const double g = num / den;
    q.b0 /= g; q.b1 /= g; q.b2 /= g;
  }
  return sos;
}

// Steady-state DF2T state of each section for a unit step at the cascade input.
std::vector<std::pair<double, double>> sos_step_state(const Sos& sos) {
  std::vector<std::pair<double, double>> zi;
  double in = 1.0;
  for (const auto& q : sos) {
    const double g = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double y = g * in;
    const double z2 = q.b2 * in - q.a2 * y;
    const double z1 = y - q.b0 * in;
    zi.emplace_back(z1, z2);
    in = y;
  }
  return zi;
}

void run_sos(const Sos& sos, std::vector<double>& x, std::vector<std::pair<double, double>> state) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& q = sos[s];
    double z1 = state[s].first, z2 = state[s].second;
    for (double& v : x) {
      const double in = v;
      const double y = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * y + z2;
      z2 = q.b2 * in - q.a2 * y;
      v = y;
    }
  }
}

double bessel_i0(double x) { return std::cyl_bessel_i(0.0, x); }

}  // namespace

Sos butter_lowpass(int order, double cutoff_hz, double fs) {
  return butter(order, cutoff_hz, fs, Kind::Low);
}

Sos butter_highpass(int order, double cutoff_hz, double fs) {
  return butter(order, cutoff_hz, fs, Kind::High);
}

Sos butter_bandpass(int order, double low_hz, double high_hz, double fs) {
  if (!(low_hz < high_hz)) throw ConfigError("bandpass needs low < high");
  Sos sos = butter_highpass(order, low_hz, fs);
  if (high_hz < fs / 2.0 * 0.999) {
    const Sos lp = butter_lowpass(order, high_hz, fs);
    sos.insert(sos.end(), lp.begin(), lp.end());
  }
  return sos;
}

std::complex<double> sos_response(const Sos& sos, double freq_hz, double fs) {
  const cd z1 = std::polar(1.0, -2.0 * kPi * freq_hz / fs);
  const cd z2 = z1 * z1;
  cd h = 1.0;
  for (const auto& q : sos) h *= (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
  return h;
}

std::vector<double> sosfilt(const Sos& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_sos(sos, y, std::vector<std::pair<double, double>>(sos.size(), {0.0, 0.0}));
  return y;
}

std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::size_t padlen = 3 * (2 * sos.size() + 1);
  padlen = std::min(padlen, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto unit = sos_step_state(sos);
  auto scaled = [&](double v) {
    auto zi = unit;
    for (auto& [a, b] : zi) {
      a *= v;
      b *= v;
    }
    return zi;
  };
  run_sos(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_sos(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

Ratio rational_ratio(double from_hz, double to_hz) {
  if (!(from_hz > 0.0) || !(to_hz > 0.0)) throw ConfigError("sample rates must be positive");
  auto as_millis = [](double v) { return static_cast<long long>(std::llround(v * 1000.0)); };
  long long up = as_millis(to_hz);
  long long down = as_millis(from_hz);
  const long long g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (std::max(up, down) > 4000)
    throw UnsupportedRate("no compact rational ratio for " + std::to_string(from_hz) + " Hz -> " +
                          std::to_string(to_hz) + " Hz");
  return {static_cast<std::size_t>(up), static_cast<std::size_t>(down)};
}

std::vector<double> resample_poly(std::span<const double> x, std::size_t up, std::size_t down) {
  if (up == 0 || down == 0) throw ConfigError("resample factors must be positive");
  const std::size_t n = x.size();
  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * static_cast<double>(up) / static_cast<double>(down)));
  if (up == down) return {x.begin(), x.end()};

  const std::size_t mx = std::max(up, down);
  const std::size_t half = 10 * mx;
  const std::size_t taps = 2 * half + 1;
  const double cutoff = 1.0 / static_cast<double>(mx);  // fraction of the upsampled Nyquist
  const double beta = 5.0;
  std::vector<double> h(taps);
  const double i0b = bessel_i0(beta);
  double hsum = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double m = static_cast<double>(i) - static_cast<double>(half);
    const double arg = kPi * cutoff * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(arg) / arg;
    const double r = m / static_cast<double>(half);
    const double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[i] = cutoff * sinc * w;
    hsum += h[i];
  }
  // unity DC gain per polyphase branch after zero stuffing
  for (auto& v : h) v *= static_cast<double>(up) / hsum;

  std::vector<double> y(n_out, 0.0);
  const auto sup = static_cast<long long>(up);
  for (std::size_t j = 0; j < n_out; ++j) {
    // y[j] = sum_i x[i] h[j*down - i*up + half]
    const long long center = static_cast<long long>(j * down + half);
    long long i_lo = center - static_cast<long long>(taps - 1);
    i_lo = i_lo <= 0 ? 0 : (i_lo + sup - 1) / sup;
    long long i_hi = center / sup;
    i_hi = std::min<long long>(i_hi, static_cast<long long>(n) - 1);
    double acc = 0.0;
    for (long long i = i_lo; i <= i_hi; ++i)
      acc += x[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(center - i * sup)];
    y[j] = acc;
  }
  return y;
}

}  // namespace neuronet::dsp
