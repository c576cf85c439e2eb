#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace neuronet {

struct Band {
  std::string name;
  double low_hz = 1, high_hz = 50;
};

std::vector<Band> default_bands();  // delta, theta, alpha, beta, broadband

struct Augmentation {
  enum class Kind { GaussianNoise, RandomCrop, RandomBandpass, TemporalCutout, Permutation };
  Kind kind = Kind::GaussianNoise;
  double sigma = 0.05;          // GaussianNoise; a fraction of the epoch std when sigma_relative
  bool sigma_relative = true;
  double min_frac = 0.5;        // RandomCrop
  std::vector<Band> bands;      // RandomBandpass; empty means default_bands()
  double max_frac = 0.25;       // TemporalCutout
  std::size_t num_segments = 0; // Permutation; 0 draws from [min_segments, max_segments]
  std::size_t min_segments = 4, max_segments = 8;
  double sample_rate = 100;

  void validate() const;
  static Augmentation make(Kind k);
};

const char* augmentation_name(Augmentation::Kind k);

using AugRng = std::mt19937_64;

std::vector<double> apply_augmentation(std::span<const double> epoch, const Augmentation& aug, AugRng& rng);

// Two distinct kinds drawn from `pool` and applied in the drawn order.
std::vector<double> augment_view(std::span<const double> epoch, const std::vector<Augmentation>& pool, AugRng& rng,
                                 std::vector<Augmentation::Kind>* applied = nullptr);

std::vector<Augmentation> default_augmentations();

}  // namespace neuronet
