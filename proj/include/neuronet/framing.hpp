#pragma once

#include <cstddef>
#include <span>

#include "neuronet/tensor.hpp"

namespace neuronet {

struct FrameConfig {
  std::size_t frame_len = 300;  // 3 s at 100 Hz
  std::size_t step = 75;        // 0.75 s

  void validate(std::size_t epoch_len) const;
};

// floor((epoch_len - frame_len) / step) + 1
std::size_t frame_count(std::size_t epoch_len, const FrameConfig& cfg);

// [M, frame_len]; frame m is epoch[m*step, m*step + frame_len).
Tensor frame_epoch(std::span<const float> epoch, const FrameConfig& cfg);
Tensor frame_epoch(std::span<const double> epoch, const FrameConfig& cfg);

// epochs[N, epoch_len] -> frames [N*M, 1, frame_len], sample-major.
Tensor frame_batch(const Tensor& epochs, const FrameConfig& cfg);

}  // namespace neuronet
