#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "neuronet/contrastive.hpp"
#include "neuronet/frame_network.hpp"
#include "neuronet/framing.hpp"
#include "neuronet/mae.hpp"
#include "neuronet/tcm.hpp"

namespace neuronet {

struct PretrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 1024;
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
};

struct NeuroNetConfig {
  std::string preset = "T";
  FrameConfig frame;
  FrameNetConfig frame_net;
  EncoderConfig encoder;
  DecoderConfig decoder;
  ProjectionConfig projection;
  double mask_ratio = 0.75;
  double temperature = 0.5;
  double alpha = 1.0;
  bool stopgrad_targets = true;
  PretrainConfig train;

  std::size_t embed_dim() const { return encoder.dim; }
  void validate() const;
};

struct ProbeConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 512;
  double lr = 1e-5;
  double weight_decay = 0.01;
  bool class_weights = false;
};

struct FinetuneConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr = 5e-3;
  double weight_decay = 0.01;
  std::size_t window_stride = 5;
  std::string tail_policy = "repeat_first";
  bool class_weights = false;
};

struct EvalConfig {
  std::size_t folds = 5;
  std::size_t val_count = 15;
  std::uint64_t seed = 0;
  std::string znorm_scope = "recording";
};

struct RunConfig {
  NeuroNetConfig model;
  ProbeConfig probe;
  FinetuneConfig finetune;
  TcmConfig tcm;
  EvalConfig eval;
  std::string channel = "EEG Fpz-Cz";
  std::uint64_t seed = 42;

  // "T", "B" (full scale) or "desk" (dims / 8, short schedules).
  static RunConfig preset(const std::string& name);
  // `key = value` lines, '#' comments. A `preset` line selects the base
  // values; every other key overrides one field. Unknown keys and malformed
  // values raise ConfigError.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  std::string to_text() const;
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;
  void validate() const;
};

}  // namespace neuronet
