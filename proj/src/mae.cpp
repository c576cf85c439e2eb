#include "neuronet/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace neuronet {

nlohmann::json MaskPlan::to_json() const {
  return {{"kept", kept}, {"masked", masked}, {"seed", seed}};
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t sample_id, std::uint64_t path_id) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(global_seed) ^ sample_id) ^ (path_id * 0xd6e8feb86659fd93ULL));
}

std::size_t kept_count(std::size_t m, double mask_ratio) {
  if (m < 2) throw ConfigError("masking needs at least 2 frames, got " + std::to_string(m));
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio must lie in (0, 1)");
  const auto k = static_cast<std::size_t>(std::llround((1.0 - mask_ratio) * static_cast<double>(m)));
  return std::clamp<std::size_t>(k, 1, m - 1);
}

MaskPlan sample_mask(std::size_t m, double mask_ratio, std::uint64_t seed) {
  const std::size_t k = kept_count(m, mask_ratio);
  nn::Rng rng(seed);
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  // partial Fisher-Yates: the first k slots become the kept subset
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, m - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  MaskPlan plan;
  plan.seed = seed;
  plan.kept.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  plan.masked.assign(idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  std::sort(plan.kept.begin(), plan.kept.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  return plan;
}

MaskPlan full_plan(std::size_t m) {
  MaskPlan plan;
  plan.kept.resize(m);
  std::iota(plan.kept.begin(), plan.kept.end(), 0);
  return plan;
}

namespace {

Tensor position_codes(const std::vector<std::size_t>& positions, std::size_t dim) {
  Tensor t({positions.size(), dim});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto pe = nn::sinusoidal_position(positions[i], dim);
    std::copy(pe.begin(), pe.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return t;
}

void check_plans(const std::vector<MaskPlan>& plans, std::size_t n, std::size_t m) {
  if (plans.size() != n) throw ShapeError("one mask plan per sample required");
  const std::size_t k = plans.front().kept.size();
  for (const auto& p : plans) {
    if (p.frames() != m) throw ShapeError("mask plan covers " + std::to_string(p.frames()) + " frames, input has " +
                                          std::to_string(m));
    if (p.kept.size() != k) throw ShapeError("mask plans in one batch must keep the same number of frames");
    for (auto i : p.kept)
      if (i >= m) throw ShapeError("mask plan index out of range");
  }
}

}  // namespace

Encoder::Encoder(nn::ParamSet& ps, const std::string& prefix, std::size_t embed_dim, const EncoderConfig& cfg,
                 nn::Rng& rng)
    : cfg_(cfg), prefix_(prefix) {
  if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) throw ConfigError("encoder dim must be divisible by heads");
  proj_ = nn::Linear(ps, prefix + "proj", embed_dim, cfg.dim, rng);
  std::normal_distribution<double> nd(0.0, 0.02);
  Tensor cls({cfg.dim});
  for (auto& v : cls.data) v = nd(rng);
  cls_ = ps.add_param(prefix + "cls_token", std::move(cls));
  for (std::size_t i = 0; i < cfg.depth; ++i)
    blocks_.emplace_back(ps, block_prefix(i), cfg.dim, cfg.heads, cfg.mlp_ratio, rng);
}

ag::Var Encoder::tokens_before(const ag::Var& z, const std::vector<MaskPlan>& plans, std::size_t first_block) const {
  if (z.value().rank() != 3) throw ShapeError("encoder expects z [N, M, embed]");
  const std::size_t n = z.shape()[0], m = z.shape()[1];
  check_plans(plans, n, m);
  const std::size_t k = plans.front().kept.size();

  std::vector<std::size_t> rows, positions;
  rows.reserve(n * k);
  for (std::size_t b = 0; b < n; ++b)
    for (auto i : plans[b].kept) {
      rows.push_back(b * m + i);
      positions.push_back(i);
    }
  ag::Var tok = proj_(ag::gather_rows(z, rows));
  tok = ag::add(tok, ag::constant(position_codes(positions, cfg_.dim)));

  // interleave: [cls_b, tok_b0 .. tok_b(k-1)] per sample
  const ag::Var cls_rows = ag::gather_rows(ag::reshape(cls_, {1, cfg_.dim}), std::vector<std::size_t>(n, 0));
  const ag::Var both = ag::concat_rows(cls_rows, tok);
  std::vector<std::size_t> order;
  order.reserve(n * (k + 1));
  for (std::size_t b = 0; b < n; ++b) {
    order.push_back(b);
    for (std::size_t j = 0; j < k; ++j) order.push_back(n + b * k + j);
  }
  ag::Var h = ag::reshape(ag::gather_rows(both, order), {n, k + 1, cfg_.dim});
  for (std::size_t i = 0; i < first_block && i < blocks_.size(); ++i) h = blocks_[i](h);
  return h;
}

ag::Var Encoder::run_blocks(const ag::Var& tokens, std::size_t first_block) const {
  ag::Var h = tokens;
  for (std::size_t i = first_block; i < blocks_.size(); ++i) {
    h = blocks_[i](h);
    ag::check_finite(h, block_prefix(i) + "out");
  }
  return h;
}

ag::Var Encoder::class_token_from(const ag::Var& tokens, std::size_t first_block) const {
  if (tokens.value().rank() != 3) throw ShapeError("class_token_from expects [N, S, dim]");
  const std::size_t n = tokens.shape()[0], s = tokens.shape()[1];
  ag::Var h = tokens;
  for (std::size_t i = first_block; i + 1 < blocks_.size(); ++i) h = blocks_[i](h);
  if (first_block < blocks_.size()) {
    h = blocks_.back().first_row(h);
    ag::check_finite(h, block_prefix(blocks_.size() - 1) + "cls");
    return ag::reshape(h, {n, cfg_.dim});
  }
  std::vector<std::size_t> rows(n);
  for (std::size_t b = 0; b < n; ++b) rows[b] = b * s;
  return ag::gather_rows(h, rows);
}

ag::Var Encoder::operator()(const ag::Var& z, const std::vector<MaskPlan>& plans, PositionTrace* trace) const {
  if (trace) {
    trace->positions.clear();
    for (const auto& p : plans) trace->positions.insert(trace->positions.end(), p.kept.begin(), p.kept.end());
    trace->codes = position_codes(trace->positions, cfg_.dim);
  }
  return run_blocks(tokens_before(z, plans, 0), 0);
}

Decoder::Decoder(nn::ParamSet& ps, const std::string& prefix, std::size_t encoder_dim, std::size_t embed_dim,
                 const DecoderConfig& cfg, nn::Rng& rng)
    : cfg_(cfg) {
  if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) throw ConfigError("decoder dim must be divisible by heads");
  proj_ = nn::Linear(ps, prefix + "proj", encoder_dim, cfg.dim, rng);
  std::normal_distribution<double> nd(0.0, 0.02);
  Tensor mt({cfg.dim});
  for (auto& v : mt.data) v = nd(rng);
  mask_token_ = ps.add_param(prefix + "mask_token", std::move(mt));
  for (std::size_t i = 0; i < cfg.depth; ++i)
    blocks_.emplace_back(ps, prefix + "block" + std::to_string(i) + ".", cfg.dim, cfg.heads, cfg.mlp_ratio, rng);
  head_ = nn::Linear(ps, prefix + "head", cfg.dim, embed_dim, rng);
}

ag::Var Decoder::operator()(const ag::Var& latents, const std::vector<MaskPlan>& plans, PositionTrace* trace) const {
  if (latents.value().rank() != 3) throw ShapeError("decoder expects latents [N, kept, dim]");
  const std::size_t n = latents.shape()[0], k = latents.shape()[1];
  if (plans.size() != n) throw ShapeError("one mask plan per sample required");
  const std::size_t m = plans.front().frames();
  check_plans(plans, n, m);
  if (plans.front().kept.size() != k)
    throw ShapeError("decoder got " + std::to_string(k) + " latent rows for a plan keeping " +
                     std::to_string(plans.front().kept.size()));
  const std::size_t masked = m - k;

  const ag::Var kept = proj_(ag::reshape(latents, {n * k, latents.shape()[2]}));
  const ag::Var masks = ag::gather_rows(ag::reshape(mask_token_, {1, cfg_.dim}), std::vector<std::size_t>(n * masked, 0));
  const ag::Var both = masked ? ag::concat_rows(kept, masks) : kept;

  // slot (b, p) takes the j-th kept latent if p = kept[j], else a mask token
  std::vector<std::size_t> order(n * m), positions(n * m);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < k; ++j) order[b * m + plans[b].kept[j]] = b * k + j;
    for (std::size_t j = 0; j < masked; ++j) order[b * m + plans[b].masked[j]] = n * k + b * masked + j;
    for (std::size_t p = 0; p < m; ++p) positions[b * m + p] = p;
  }
  const Tensor codes = position_codes(positions, cfg_.dim);
  if (trace) {
    trace->positions = positions;
    trace->codes = codes;
  }
  ag::Var h = ag::add(ag::gather_rows(both, order), ag::constant(codes));
  h = ag::reshape(h, {n, m, cfg_.dim});
  for (const auto& blk : blocks_) h = blk(h);
  ag::Var r = head_(h);
  ag::check_finite(r, "decoder.head");
  return r;
}

std::pair<ag::Var, ag::Var> split_class_token(const ag::Var& h) {
  if (h.value().rank() != 3 || h.shape()[1] < 1) throw ShapeError("split_class_token expects [N, S, D]");
  const std::size_t n = h.shape()[0], s = h.shape()[1], d = h.shape()[2];
  std::vector<std::size_t> cls_rows(n), rest_rows;
  rest_rows.reserve(n * (s - 1));
  for (std::size_t b = 0; b < n; ++b) {
    cls_rows[b] = b * s;
    for (std::size_t j = 1; j < s; ++j) rest_rows.push_back(b * s + j);
  }
  ag::Var cls = ag::gather_rows(h, cls_rows);
  ag::Var rest = ag::reshape(ag::gather_rows(h, rest_rows), {n, s - 1, d});
  return {cls, rest};
}

ag::Var reconstruction_loss(const ag::Var& z, const ag::Var& r, const std::vector<MaskPlan>& plans,
                            bool stopgrad_targets) {
  if (z.shape() != r.shape()) throw ShapeError("reconstruction_loss: z " + shape_str(z.shape()) + " vs r " +
                                               shape_str(r.shape()));
  if (z.value().rank() != 3) throw ShapeError("reconstruction_loss expects [N, M, embed]");
  const std::size_t n = z.shape()[0], m = z.shape()[1];
  check_plans(plans, n, m);
  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < n; ++b)
    for (auto i : plans[b].masked) rows.push_back(b * m + i);
  if (rows.empty()) throw ConfigError("reconstruction loss needs at least one masked frame");
  const ag::Var target = ag::gather_rows(stopgrad_targets ? ag::detach(z) : z, rows);
  return ag::mse(ag::gather_rows(r, rows), target);
}

}  // namespace neuronet
