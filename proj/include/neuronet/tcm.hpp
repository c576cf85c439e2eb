#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "neuronet/nn.hpp"

namespace neuronet {

// ---- selective scan --------------------------------------------------------
//
// Per batch b, channel i and state n, with h_0 = 0:
//   h_t = exp(delta_t * A) h_{t-1} + delta_t * B_t * x_t
//   y_t = <C_t, h_t> + D * x_t
// Shapes: x, delta [B, L, Di]; A [Di, Ds]; Bs, Cs [B, L, Ds]; D [Di].

ag::Var selective_scan(const ag::Var& x, const ag::Var& delta, const ag::Var& a, const ag::Var& bs,
                       const ag::Var& cs, const ag::Var& d);

// Forward-only evaluation in chunks of `chunk` steps. Inside a chunk every
// output is formed from the carried state and closed-form cumulative decays,
// so it shares no recurrence code with selective_scan.
Tensor selective_scan_chunked(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& bs,
                              const Tensor& cs, const Tensor& d, std::size_t chunk);

// ---- Mamba block ---------------------------------------------------------

struct MambaConfig {
  std::size_t d_state = 16;
  std::size_t d_conv = 4;
  std::size_t expand = 2;
};

// x + out_proj( scan(SiLU(causal_conv(in_x))) * SiLU(in_z) ), with (in_x, in_z)
// = in_proj(LN(x)) and input-dependent delta, B, C.
class MambaBlock {
 public:
  MambaBlock() = default;
  MambaBlock(nn::ParamSet& ps, const std::string& prefix, std::size_t d_model, const MambaConfig& cfg,
             nn::Rng& rng);
  ag::Var operator()(const ag::Var& x) const;  // [B, L, d_model]

  std::size_t d_inner() const { return d_inner_; }
  std::size_t dt_rank() const { return dt_rank_; }

 private:
  MambaConfig cfg_;
  std::size_t d_inner_ = 0, dt_rank_ = 0;
  nn::LayerNorm ln_;
  nn::Linear in_proj_;
  ag::Var conv_w_, conv_b_;
  nn::Linear x_proj_;
  nn::Linear dt_proj_;
  ag::Var a_log_, d_;
  nn::Linear out_proj_;
};

// ---- temporal context models -------------------------------------------------

struct TcmConfig {
  std::string model = "mamba";  // mamba | lstm | attention | lstm_attention
  std::size_t blocks = 2;
  MambaConfig mamba;
  std::size_t heads = 8;              // attention variants
  std::string output_mode = "seq2seq";  // seq2seq | many2one
  std::size_t context_length = 20;

  bool seq2seq() const { return output_mode == "seq2seq"; }
  void validate(std::size_t d_model) const;
};

class TemporalContextModel {
 public:
  virtual ~TemporalContextModel() = default;
  // seq [B, L, d_model] -> per-position logits [B, L, 5]
  virtual ag::Var forward(const ag::Var& seq) const = 0;
};

std::unique_ptr<TemporalContextModel> make_tcm(nn::ParamSet& ps, const std::string& prefix, std::size_t d_model,
                                               const TcmConfig& cfg, nn::Rng& rng);

// One window of class tokens [context_length, d_model] -> [context_length, 5]
// logits. Throws ShapeError when the window length differs from the config.
ag::Var tcm_classify(const TemporalContextModel& tcm, const TcmConfig& cfg, const ag::Var& cls_tokens);

// ---- windowing -------------------------------------------------------------

struct Window {
  std::vector<std::size_t> epochs;  // context_length indices into the recording
  std::size_t keep_from = 0;        // positions before this carry no new prediction
};

enum class TailPolicy {
  Backfill,     // last window reaches back into already-covered epochs
  RepeatFirst,  // last window is left-padded by repeating its first epoch
};

// Non-overlapping windows covering every epoch's prediction exactly once.
std::vector<Window> inference_windows(std::size_t n_epochs, std::size_t context, TailPolicy tail);
// Training windows starting every `stride` epochs (plus one flush with the
// end). Recordings shorter than the context are left-padded.
std::vector<Window> training_windows(std::size_t n_epochs, std::size_t context, std::size_t stride);
// many2one: window ending at each epoch, left-padded at the start.
std::vector<Window> trailing_windows(std::size_t n_epochs, std::size_t context);

TailPolicy parse_tail_policy(const std::string& s);

}  // namespace neuronet
