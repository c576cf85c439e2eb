#include "neuronet/frame_network.hpp"

#include <set>

namespace neuronet {

std::size_t FrameNetConfig::trunk_len(std::size_t frame_len) const {
  const std::size_t pad = shared_kernel / 2;
  if (frame_len + 2 * pad < shared_kernel) return 0;
  const std::size_t conv_len = (frame_len + 2 * pad - shared_kernel) / shared_stride + 1;
  return conv_len / pool_width;
}

void FrameNetConfig::validate(std::size_t frame_len) const {
  if (shared_kernel == 0 || shared_stride == 0 || pool_width == 0 || shared_channels == 0 ||
      branch_channels == 0 || embed_dim == 0 || blocks_per_branch == 0)
    throw ConfigError("frame network sizes must be positive");
  std::set<std::size_t> distinct(branch_kernels.begin(), branch_kernels.end());
  if (distinct.size() != 3) throw ConfigError("frame network branch kernels must be pairwise distinct");
  for (auto k : branch_kernels)
    if (k % 2 == 0) throw ConfigError("branch kernels must be odd for same padding");
  if (trunk_len(frame_len) == 0)
    throw ConfigError("frame length " + std::to_string(frame_len) + " collapses to zero in the shared stage");
}

FrameNetwork::FrameNetwork(nn::ParamSet& ps, const std::string& prefix, const FrameNetConfig& cfg, nn::Rng& rng)
    : cfg_(cfg), prefix_(prefix) {
  shared_conv_ = nn::Conv1d(ps, prefix + "shared.conv", 1, cfg.shared_channels, cfg.shared_kernel,
                            cfg.shared_stride, cfg.shared_kernel / 2, rng);
  shared_bn_ = nn::BatchNorm1d(ps, prefix + "shared.bn", cfg.shared_channels);
  for (std::size_t b = 0; b < 3; ++b) {
    Branch br;
    const std::string bp = prefix + "branch" + std::to_string(b) + ".";
    const std::size_t k = cfg.branch_kernels[b];
    for (std::size_t i = 0; i < cfg.blocks_per_branch; ++i) {
      const std::size_t in = i == 0 ? cfg.shared_channels : cfg.branch_channels;
      Block blk;
      blk.conv = nn::Conv1d(ps, bp + "block" + std::to_string(i) + ".conv", in, cfg.branch_channels, k, 1,
                            k / 2, rng);
      blk.bn = nn::BatchNorm1d(ps, bp + "block" + std::to_string(i) + ".bn", cfg.branch_channels);
      br.blocks.push_back(blk);
    }
    if (cfg.shared_channels != cfg.branch_channels) {
      br.skip = nn::Conv1d(ps, bp + "skip", cfg.shared_channels, cfg.branch_channels, 1, 1, 0, rng);
      br.has_skip = true;
    }
    branches_.push_back(std::move(br));
  }
  fc1_ = nn::Linear(ps, prefix + "fc1", 3 * cfg.branch_channels, cfg.hidden(), rng);
  fc2_ = nn::Linear(ps, prefix + "fc2", cfg.hidden(), cfg.embed_dim, rng);
}

ag::Var FrameNetwork::operator()(const ag::Var& frames, bool training) {
  ag::Var x = frames;
  if (x.value().rank() == 2) x = ag::reshape(x, {x.shape()[0], 1, x.shape()[1]});
  if (x.value().rank() != 3 || x.shape()[1] != 1) throw ShapeError("frame network expects [B, 1, frame_len]");

  auto checked = [&](const ag::Var& v, const std::string& layer) {
    ag::check_finite(v, prefix_ + layer);
    return v;
  };

  ag::Var trunk = checked(shared_conv_(x), "shared.conv");
  trunk = checked(shared_bn_(trunk, training), "shared.bn");
  trunk = ag::max_pool1d(trunk, cfg_.pool_width);

  std::vector<ag::Var> pooled;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    auto& br = branches_[b];
    const std::string bp = "branch" + std::to_string(b) + ".";
    ag::Var h = trunk;
    for (std::size_t i = 0; i < br.blocks.size(); ++i) {
      const std::string lp = bp + "block" + std::to_string(i);
      h = checked(br.blocks[i].conv(h), lp + ".conv");
      h = br.blocks[i].bn(h, training);
      h = checked(ag::elu(h), lp + ".elu");
    }
    const ag::Var skip = br.has_skip ? br.skip(trunk) : trunk;
    h = ag::add(h, skip);
    pooled.push_back(ag::global_avg_pool(h));
  }
  ag::Var feat = ag::concat_cols(pooled);
  ag::Var out = checked(ag::elu(fc1_(feat)), "fc1");
  return checked(fc2_(out), "fc2");
}

}  // namespace neuronet
