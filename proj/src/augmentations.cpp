#include "neuronet/augmentations.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neuronet/dsp.hpp"
#include "neuronet/errors.hpp"

namespace neuronet {

std::vector<Band> default_bands() {
  return {{"delta", 1, 4}, {"theta", 4, 8}, {"alpha", 8, 13}, {"beta", 13, 30}, {"broadband", 1, 50}};
}

const char* augmentation_name(Augmentation::Kind k) {
  switch (k) {
    case Augmentation::Kind::GaussianNoise: return "gaussian_noise";
    case Augmentation::Kind::RandomCrop: return "random_crop";
    case Augmentation::Kind::RandomBandpass: return "random_bandpass";
    case Augmentation::Kind::TemporalCutout: return "temporal_cutout";
    case Augmentation::Kind::Permutation: return "permutation";
  }
  return "?";
}

Augmentation Augmentation::make(Kind k) {
  Augmentation a;
  a.kind = k;
  return a;
}

void Augmentation::validate() const {
  if (!(sigma > 0)) throw ConfigError("gaussian noise sigma must be positive");
  if (!(min_frac > 0 && min_frac < 1)) throw ConfigError("crop min_frac must lie in (0, 1)");
  if (!(max_frac > 0 && max_frac < 1)) throw ConfigError("cutout max_frac must lie in (0, 1)");
  if (!(sample_rate > 0)) throw ConfigError("sample rate must be positive");
  if (num_segments == 1) throw ConfigError("permutation needs at least 2 segments");
  if (num_segments == 0 && (min_segments < 2 || max_segments < min_segments))
    throw ConfigError("permutation segment range must satisfy 2 <= min <= max");
  for (const auto& b : bands)
    if (!(b.low_hz > 0 && b.high_hz > b.low_hz)) throw ConfigError("band '" + b.name + "' has an invalid range");
}

namespace {

std::size_t uniform_index(AugRng& rng, std::size_t lo, std::size_t hi) {  // inclusive
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<double> gaussian_noise(std::span<const double> x, const Augmentation& a, AugRng& rng) {
  double sigma = a.sigma;
  if (a.sigma_relative) {
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    sigma *= std::sqrt(var / static_cast<double>(x.size()));
  }
  std::vector<double> out(x.begin(), x.end());
  if (sigma == 0) return out;
  std::normal_distribution<double> nd(0.0, sigma);
  for (double& v : out) v += nd(rng);
  return out;
}

std::vector<double> random_crop(std::span<const double> x, const Augmentation& a, AugRng& rng) {
  const std::size_t n = x.size();
  const auto min_len = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(a.min_frac * static_cast<double>(n))));
  const std::size_t len = uniform_index(rng, std::min(min_len, n), n);
  const std::size_t start = uniform_index(rng, 0, n - len);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = n == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(len - 1) / static_cast<double>(n - 1);
    const auto j = std::min(static_cast<std::size_t>(pos), len - 1);
    const double frac = pos - static_cast<double>(j);
    const double a0 = x[start + j];
    const double a1 = j + 1 < len ? x[start + j + 1] : a0;
    out[i] = a0 + frac * (a1 - a0);
  }
  return out;
}

std::vector<double> random_bandpass(std::span<const double> x, const Augmentation& a, AugRng& rng) {
  const auto bands = a.bands.empty() ? default_bands() : a.bands;
  const Band& b = bands[uniform_index(rng, 0, bands.size() - 1)];
  return dsp::sosfiltfilt(dsp::butter_bandpass(4, b.low_hz, b.high_hz, a.sample_rate), x);
}

std::vector<double> temporal_cutout(std::span<const double> x, const Augmentation& a, AugRng& rng) {
  const std::size_t n = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const auto max_len = std::max<std::size_t>(1, static_cast<std::size_t>(a.max_frac * static_cast<double>(n)));
  const std::size_t len = uniform_index(rng, 1, max_len);
  const std::size_t start = uniform_index(rng, 0, n - len);
  std::vector<double> out(x.begin(), x.end());
  std::fill(out.begin() + static_cast<std::ptrdiff_t>(start), out.begin() + static_cast<std::ptrdiff_t>(start + len),
            mean);
  return out;
}

std::vector<double> permutation(std::span<const double> x, const Augmentation& a, AugRng& rng) {
  const std::size_t n = x.size();
  std::size_t segs = a.num_segments ? a.num_segments : uniform_index(rng, a.min_segments, a.max_segments);
  segs = std::min(segs, n);
  // segs - 1 distinct cut points in [1, n - 1]
  std::vector<std::size_t> cuts(n - 1);
  std::iota(cuts.begin(), cuts.end(), 1);
  for (std::size_t i = 0; i + 1 < segs; ++i) std::swap(cuts[i], cuts[uniform_index(rng, i, cuts.size() - 1)]);
  cuts.resize(segs - 1);
  std::sort(cuts.begin(), cuts.end());
  cuts.insert(cuts.begin(), 0);
  cuts.push_back(n);
  std::vector<std::size_t> order(segs);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t s : order) out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(cuts[s]),
                                         x.begin() + static_cast<std::ptrdiff_t>(cuts[s + 1]));
  return out;
}

}  // namespace

std::vector<double> apply_augmentation(std::span<const double> epoch, const Augmentation& aug, AugRng& rng) {
  aug.validate();
  if (epoch.size() < 2) throw ShapeError("augmentation needs at least 2 samples");
  for (double v : epoch)
    if (!std::isfinite(v)) throw NumericalError("augmentation input");
  switch (aug.kind) {
    case Augmentation::Kind::GaussianNoise: return gaussian_noise(epoch, aug, rng);
    case Augmentation::Kind::RandomCrop: return random_crop(epoch, aug, rng);
    case Augmentation::Kind::RandomBandpass: return random_bandpass(epoch, aug, rng);
    case Augmentation::Kind::TemporalCutout: return temporal_cutout(epoch, aug, rng);
    case Augmentation::Kind::Permutation: return permutation(epoch, aug, rng);
  }
  throw ConfigError("unknown augmentation kind");
}

std::vector<Augmentation> default_augmentations() {
  using K = Augmentation::Kind;
  return {Augmentation::make(K::GaussianNoise), Augmentation::make(K::RandomCrop),
          Augmentation::make(K::RandomBandpass), Augmentation::make(K::TemporalCutout),
          Augmentation::make(K::Permutation)};
}

std::vector<double> augment_view(std::span<const double> epoch, const std::vector<Augmentation>& pool, AugRng& rng,
                                 std::vector<Augmentation::Kind>* applied) {
  if (pool.size() < 2) throw ConfigError("augment_view needs at least two augmentations to choose from");
  const std::size_t first = uniform_index(rng, 0, pool.size() - 1);
  std::size_t second = uniform_index(rng, 0, pool.size() - 2);
  if (second >= first) ++second;
  auto out = apply_augmentation(epoch, pool[first], rng);
  out = apply_augmentation(out, pool[second], rng);
  if (applied) *applied = {pool[first].kind, pool[second].kind};
  return out;
}

}  // namespace neuronet
