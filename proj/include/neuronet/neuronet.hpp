#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "json.hpp"
#include "neuronet/config.hpp"
#include "neuronet/signal_io.hpp"

namespace neuronet {

struct LossBundle {
  double l_rec1 = 0, l_rec2 = 0, l_contra = 0, l_total = 0;
};

// Shared frame network, one encoder/decoder used by both masked paths, and
// the contrastive projection head. Parameter names are prefixed with
// frame_net., encoder., decoder. and projection.
class NeuroNetModel {
 public:
  NeuroNetModel(const NeuroNetConfig& cfg, std::uint64_t init_seed);
  NeuroNetModel(const NeuroNetModel&) = delete;
  NeuroNetModel& operator=(const NeuroNetModel&) = delete;

  nn::ParamSet& params() { return ps_; }
  const nn::ParamSet& params() const { return ps_; }
  const NeuroNetConfig& config() const { return cfg_; }
  FrameNetwork& frame_net() { return frame_net_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }
  const ProjectionHead& projection() const { return projection_; }
  std::size_t frames_per_epoch() const;

  // epochs [N, epoch_len] -> z [N, M, embed]
  ag::Var frame_embeddings(const Tensor& epochs, bool training);

  struct SslOutput {
    ag::Var total, rec1, rec2, contra;
    ag::Var z, r1, r2;          // targets and both reconstructions
    ag::Var cls1, cls2;         // class tokens entering the projection head
    std::vector<MaskPlan> plans1, plans2;
    LossBundle losses() const;
  };
  // Test hook: replace both decoders' outputs by the (detached) targets.
  struct SslDebug {
    bool perfect_reconstruction = false;
  };
  // Both masked paths over one batch. Mask plans come from per-sample streams
  // derive_seed(seed, sample_ids[i], path).
  SslOutput ssl_forward(const Tensor& epochs, const std::vector<std::uint64_t>& sample_ids, std::uint64_t seed,
                        const SslDebug* debug = nullptr);

  // Eval-mode, gradient-free class tokens of the full (unmasked) frame set: [N, dim].
  Tensor embed(const Tensor& epochs);
  // Eval-mode tokens entering the last encoder block: [N, M + 1, dim].
  Tensor last_block_inputs(const Tensor& epochs);

  void save(const std::filesystem::path& stem, const nlohmann::json& meta) const;
  void load(const std::filesystem::path& stem);

 private:
  NeuroNetConfig cfg_;
  nn::ParamSet ps_;
  FrameNetwork frame_net_;
  Encoder encoder_;
  Decoder decoder_;
  ProjectionHead projection_;
};

// Copies epochs of the given (recording, epoch) pairs into [N, epoch_len].
Tensor gather_epochs(const std::vector<StagedRecording>& recs,
                     const std::vector<std::pair<std::size_t, std::size_t>>& items);

std::vector<double> embed_epoch(NeuroNetModel& model, std::span<const float> epoch);

// One optimisation step: forward both paths, backpropagate l_total, update.
LossBundle ssl_step(NeuroNetModel& model, nn::AdamW& opt, const Tensor& epochs,
                    const std::vector<std::uint64_t>& sample_ids, std::uint64_t seed);

struct PretrainOptions {
  std::uint64_t seed = 42;
  std::ostream* log = nullptr;  // JSON lines, one per step
  std::size_t max_steps = 0;    // 0: run every epoch of the schedule
  std::function<void(std::size_t epoch, const LossBundle& last)> on_epoch;
};

// SSL pretraining over every epoch of `recs` (labels unused).
std::vector<LossBundle> pretrain(NeuroNetModel& model, const std::vector<StagedRecording>& recs,
                                 const PretrainOptions& opts);

}  // namespace neuronet
