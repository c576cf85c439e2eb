#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "neuronet/nn.hpp"

namespace neuronet {

struct FrameNetConfig {
  std::size_t shared_kernel = 7;
  std::size_t shared_stride = 2;
  std::size_t shared_channels = 64;
  std::size_t pool_width = 2;
  std::array<std::size_t, 3> branch_kernels = {3, 5, 7};
  std::size_t blocks_per_branch = 3;
  std::size_t branch_channels = 64;
  std::size_t fc_hidden = 0;  // 0: 2 * embed_dim
  std::size_t embed_dim = 512;

  void validate(std::size_t frame_len) const;
  std::size_t hidden() const { return fc_hidden ? fc_hidden : 2 * embed_dim; }
  // Temporal length after the shared conv + pool stage.
  std::size_t trunk_len(std::size_t frame_len) const;
};

// Multiscale 1D residual CNN mapping each frame to an embedding.
//   shared: conv(k, stride) -> BN -> maxpool
//   3 branches (kernels 3/5/7): blocks x [conv -> BN -> ELU], + skip, global avg pool
//   concat -> FC -> ELU -> FC
class FrameNetwork {
 public:
  FrameNetwork() = default;
  FrameNetwork(nn::ParamSet& ps, const std::string& prefix, const FrameNetConfig& cfg, nn::Rng& rng);

  // frames [B, 1, frame_len] (or [B, frame_len]) -> [B, embed_dim]. Training
  // mode uses batch statistics over all B frames.
  ag::Var operator()(const ag::Var& frames, bool training);

  const FrameNetConfig& config() const { return cfg_; }

 private:
  struct Block {
    nn::Conv1d conv;
    nn::BatchNorm1d bn;
  };
  struct Branch {
    std::vector<Block> blocks;
    nn::Conv1d skip;  // 1x1, only when channel counts differ
    bool has_skip = false;
  };

  FrameNetConfig cfg_;
  std::string prefix_;
  nn::Conv1d shared_conv_;
  nn::BatchNorm1d shared_bn_;
  std::vector<Branch> branches_;
  nn::Linear fc1_, fc2_;
};

}  // namespace neuronet
