#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "neuronet/autograd.hpp"

namespace neuronet::nn {

using Rng = std::mt19937_64;

// Ordered registry of named parameters and buffers (batch-norm running
// statistics). Entries hold Var handles, so a module and the registry share
// storage and moving modules around never invalidates the registry.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    ag::Var var;
    bool buffer = false;
  };

  ag::Var add_param(const std::string& name, Tensor init);
  ag::Var add_buffer(const std::string& name, Tensor init);

  const std::vector<Entry>& entries() const { return entries_; }
  ag::Var get(const std::string& name) const;
  bool contains(const std::string& name) const;

  // Trainable parameters only (buffers and frozen parameters excluded).
  std::vector<ag::Var> trainable() const;
  // Freezes/unfreezes every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool on);
  void zero_grad();
  std::size_t parameter_count() const;

  // Bit-level snapshot of every entry; used by freeze assertions.
  std::vector<std::vector<double>> snapshot() const;

 private:
  std::vector<Entry> entries_;
};

// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

struct Linear {
  ag::Var weight;  // [in, out]
  ag::Var bias;    // [out], empty when disabled

  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool with_bias = true);
  ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }
  std::size_t in_features() const { return weight.value().dim(0); }
  std::size_t out_features() const { return weight.value().dim(1); }
};

struct LayerNorm {
  ag::Var gamma;
  ag::Var beta;

  LayerNorm() = default;
  LayerNorm(ParamSet& ps, const std::string& name, std::size_t dim);
  ag::Var operator()(const ag::Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

struct Conv1d {
  ag::Var weight;  // [out, in, k]
  ag::Var bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  Conv1d() = default;
  Conv1d(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
         std::size_t stride, std::size_t pad, Rng& rng);
  ag::Var operator()(const ag::Var& x) const { return ag::conv1d(x, weight, bias, stride, pad); }
};

struct BatchNorm1d {
  ag::Var gamma;
  ag::Var beta;
  ag::Var running_mean;
  ag::Var running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm1d() = default;
  BatchNorm1d(ParamSet& ps, const std::string& name, std::size_t channels);
  ag::Var operator()(const ag::Var& x, bool training);
};

// Pre-norm Transformer block: x + MHA(LN(x)), then + MLP(LN(.)) with a GELU
// MLP of width mlp_ratio * dim.
struct TransformerBlock {
  LayerNorm ln1;
  Linear q, k, v, o;
  LayerNorm ln2;
  Linear fc1, fc2;
  std::size_t heads = 1;

  TransformerBlock() = default;
  TransformerBlock(ParamSet& ps, const std::string& name, std::size_t dim, std::size_t heads,
                   std::size_t mlp_ratio, Rng& rng);
  // x: [B, S, D]
  ag::Var operator()(const ag::Var& x, bool causal = false) const;
  // Row 0 of operator()(x) ([B, 1, D]) without computing the other rows'
  // outputs. Used when only the class token is consumed downstream.
  ag::Var first_row(const ag::Var& x) const;
};

// Fixed sinusoidal code for position `pos`, width `dim`.
std::vector<double> sinusoidal_position(std::size_t pos, std::size_t dim);

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay Adam over the trainable entries of a ParamSet.
class AdamW {
 public:
  AdamW(const ParamSet& params, AdamWOptions opts);
  // Applies one update from the accumulated gradients and clears them.
  void step();
  std::int64_t steps() const { return t_; }
  const AdamWOptions& options() const { return opts_; }

 private:
  AdamWOptions opts_;
  std::vector<ag::Var> vars_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace neuronet::nn
