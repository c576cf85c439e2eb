#include "neuronet/framing.hpp"

#include <algorithm>

namespace neuronet {

void FrameConfig::validate(std::size_t epoch_len) const {
  if (step == 0 || frame_len == 0) throw ConfigError("frame_len and step must be positive");
  if (step > frame_len)
    throw ConfigError("frame step " + std::to_string(step) + " exceeds frame length " + std::to_string(frame_len));
  if (frame_len > epoch_len)
    throw ConfigError("frame length " + std::to_string(frame_len) + " exceeds epoch length " +
                      std::to_string(epoch_len));
}

std::size_t frame_count(std::size_t epoch_len, const FrameConfig& cfg) {
  cfg.validate(epoch_len);
  return (epoch_len - cfg.frame_len) / cfg.step + 1;
}

namespace {

template <typename T>
Tensor frame_impl(std::span<const T> epoch, const FrameConfig& cfg) {
  const std::size_t m = frame_count(epoch.size(), cfg);
  Tensor out({m, cfg.frame_len});
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(epoch.begin() + static_cast<std::ptrdiff_t>(i * cfg.step), cfg.frame_len,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * cfg.frame_len));
  return out;
}

}  // namespace

Tensor frame_epoch(std::span<const float> epoch, const FrameConfig& cfg) { return frame_impl(epoch, cfg); }

Tensor frame_epoch(std::span<const double> epoch, const FrameConfig& cfg) { return frame_impl(epoch, cfg); }

Tensor frame_batch(const Tensor& epochs, const FrameConfig& cfg) {
  if (epochs.rank() != 2) throw ShapeError("frame_batch expects [N, epoch_len]");
  const std::size_t n = epochs.dim(0), len = epochs.dim(1);
  const std::size_t m = frame_count(len, cfg);
  Tensor out({n * m, 1, cfg.frame_len});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(epochs.data.begin() + static_cast<std::ptrdiff_t>(b * len + i * cfg.step), cfg.frame_len,
                  out.data.begin() + static_cast<std::ptrdiff_t>((b * m + i) * cfg.frame_len));
  return out;
}

}  // namespace neuronet
