#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "neuronet/nn.hpp"

namespace neuronet {

struct EncoderConfig {
  std::size_t dim = 512;
  std::size_t depth = 4;
  std::size_t heads = 8;
  std::size_t mlp_ratio = 4;
};

struct DecoderConfig {
  std::size_t dim = 192;
  std::size_t depth = 1;
  std::size_t heads = 8;
  std::size_t mlp_ratio = 4;
};

struct MaskPlan {
  std::vector<std::size_t> kept;    // sorted unless deliberately permuted
  std::vector<std::size_t> masked;  // sorted complement
  std::uint64_t seed = 0;

  std::size_t frames() const { return kept.size() + masked.size(); }
  nlohmann::json to_json() const;
};

// splitmix64 mix of (global_seed, sample_id, path_id): a stream seed that does
// not depend on worker scheduling.
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t sample_id, std::uint64_t path_id);

// Keeps max(1, round((1 - ratio) * M)) frames drawn uniformly without replacement.
MaskPlan sample_mask(std::size_t m, double mask_ratio, std::uint64_t seed);
std::size_t kept_count(std::size_t m, double mask_ratio);
// Plan keeping every frame (inference path).
MaskPlan full_plan(std::size_t m);

// Per-token record of which positional code was added, for fidelity checks.
struct PositionTrace {
  std::vector<std::size_t> positions;  // original frame index per token slot
  Tensor codes;                        // [slots, dim] codes actually added
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(nn::ParamSet& ps, const std::string& prefix, std::size_t embed_dim, const EncoderConfig& cfg,
          nn::Rng& rng);

  // z [N, M, embed] with one plan per sample -> [N, kept+1, dim]; row 0 of each
  // sample is the class token.
  ag::Var operator()(const ag::Var& z, const std::vector<MaskPlan>& plans, PositionTrace* trace = nullptr) const;

  // Runs only the blocks from `first_block` on, starting from the tokens that
  // enter that block. Used to fine-tune the last layer on cached inputs.
  ag::Var run_blocks(const ag::Var& tokens, std::size_t first_block) const;
  // Token sequence entering block `first_block` (projection + positions +
  // class token, then blocks [0, first_block)).
  ag::Var tokens_before(const ag::Var& z, const std::vector<MaskPlan>& plans, std::size_t first_block) const;
  // Class-token output [N, dim] of the blocks from `first_block` on; the
  // final block only evaluates the class-token row.
  ag::Var class_token_from(const ag::Var& tokens, std::size_t first_block) const;

  const EncoderConfig& config() const { return cfg_; }
  std::size_t depth() const { return blocks_.size(); }
  const std::string& prefix() const { return prefix_; }
  std::string block_prefix(std::size_t i) const { return prefix_ + "block" + std::to_string(i) + "."; }

 private:
  EncoderConfig cfg_;
  std::string prefix_;
  nn::Linear proj_;
  ag::Var cls_;
  std::vector<nn::TransformerBlock> blocks_;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(nn::ParamSet& ps, const std::string& prefix, std::size_t encoder_dim, std::size_t embed_dim,
          const DecoderConfig& cfg, nn::Rng& rng);

  // latents [N, kept, encoder_dim] (class token removed) -> r [N, M, embed].
  ag::Var operator()(const ag::Var& latents, const std::vector<MaskPlan>& plans,
                     PositionTrace* trace = nullptr) const;

  const ag::Var& mask_token() const { return mask_token_; }

 private:
  DecoderConfig cfg_;
  nn::Linear proj_;
  ag::Var mask_token_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::Linear head_;
};

// h [N, S, D] -> (class tokens [N, D], remaining tokens [N, S-1, D]).
std::pair<ag::Var, ag::Var> split_class_token(const ag::Var& h);

// Squared error over masked positions only, averaged over samples, masked
// count and embedding width. Targets are detached when `stopgrad_targets`.
ag::Var reconstruction_loss(const ag::Var& z, const ag::Var& r, const std::vector<MaskPlan>& plans,
                            bool stopgrad_targets = true);

}  // namespace neuronet
