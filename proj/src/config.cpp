#include "neuronet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "neuronet/signal_io.hpp"

namespace neuronet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" + value + "'");
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true/false");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename M>
Field size_field(M member) {
  return {[member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_size(k, v); }};
}
template <typename M>
Field u64_field(M member) {
  return {[member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_u64(k, v); }};
}
template <typename M>
Field double_field(M member) {
  return {[member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_double(k, v); }};
}
template <typename M>
Field bool_field(M member) {
  return {[member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_bool(k, v); }};
}
template <typename M>
Field string_field(M member) {
  return {[member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); },
          [member](RunConfig& c, const std::string&, const std::string& v) { member(c) = v; }};
}

#define NN_FIELD(kind, expr) kind##_field([](RunConfig & c) -> auto& { return expr; })

// Ordered so that the written snapshot reads top-down like the hyperparameter table.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", NN_FIELD(u64, c.seed)},
      {"data.channel", NN_FIELD(string, c.channel)},
      {"pretrain.epochs", NN_FIELD(size, c.model.train.epochs)},
      {"pretrain.batch_size", NN_FIELD(size, c.model.train.batch_size)},
      {"pretrain.lr", NN_FIELD(double, c.model.train.lr)},
      {"pretrain.beta1", NN_FIELD(double, c.model.train.beta1)},
      {"pretrain.beta2", NN_FIELD(double, c.model.train.beta2)},
      {"pretrain.weight_decay", NN_FIELD(double, c.model.train.weight_decay)},
      {"frame.size", NN_FIELD(size, c.model.frame.frame_len)},
      {"frame.step", NN_FIELD(size, c.model.frame.step)},
      {"frame_net.shared_kernel", NN_FIELD(size, c.model.frame_net.shared_kernel)},
      {"frame_net.shared_stride", NN_FIELD(size, c.model.frame_net.shared_stride)},
      {"frame_net.shared_channels", NN_FIELD(size, c.model.frame_net.shared_channels)},
      {"frame_net.pool_width", NN_FIELD(size, c.model.frame_net.pool_width)},
      {"frame_net.branch_kernels",
       {[](const RunConfig& c) {
          const auto& k = c.model.frame_net.branch_kernels;
          return std::to_string(k[0]) + "," + std::to_string(k[1]) + "," + std::to_string(k[2]);
        },
        [](RunConfig& c, const std::string& key, const std::string& v) {
          const auto l = to_list(key, v);
          if (l.size() != 3) bad_value(key, v, "three kernel sizes");
          c.model.frame_net.branch_kernels = {l[0], l[1], l[2]};
        }}},
      {"frame_net.blocks_per_branch", NN_FIELD(size, c.model.frame_net.blocks_per_branch)},
      {"frame_net.branch_channels", NN_FIELD(size, c.model.frame_net.branch_channels)},
      {"frame_net.fc_hidden", NN_FIELD(size, c.model.frame_net.fc_hidden)},
      {"encoder.dim", NN_FIELD(size, c.model.encoder.dim)},
      {"encoder.depth", NN_FIELD(size, c.model.encoder.depth)},
      {"encoder.heads", NN_FIELD(size, c.model.encoder.heads)},
      {"encoder.mlp_ratio", NN_FIELD(size, c.model.encoder.mlp_ratio)},
      {"decoder.dim", NN_FIELD(size, c.model.decoder.dim)},
      {"decoder.depth", NN_FIELD(size, c.model.decoder.depth)},
      {"decoder.heads", NN_FIELD(size, c.model.decoder.heads)},
      {"decoder.mlp_ratio", NN_FIELD(size, c.model.decoder.mlp_ratio)},
      {"projection.hidden",
       {[](const RunConfig& c) {
          return std::to_string(c.model.projection.hidden) + "," + std::to_string(c.model.projection.out);
        },
        [](RunConfig& c, const std::string& key, const std::string& v) {
          const auto l = to_list(key, v);
          if (l.size() != 2) bad_value(key, v, "two widths (hidden,out)");
          c.model.projection.hidden = l[0];
          c.model.projection.out = l[1];
        }}},
      {"mask.ratio", NN_FIELD(double, c.model.mask_ratio)},
      {"loss.temperature", NN_FIELD(double, c.model.temperature)},
      {"loss.alpha", NN_FIELD(double, c.model.alpha)},
      {"loss.stopgrad_targets", NN_FIELD(bool, c.model.stopgrad_targets)},
      {"probe.epochs", NN_FIELD(size, c.probe.epochs)},
      {"probe.batch_size", NN_FIELD(size, c.probe.batch_size)},
      {"probe.lr", NN_FIELD(double, c.probe.lr)},
      {"probe.weight_decay", NN_FIELD(double, c.probe.weight_decay)},
      {"probe.class_weights", NN_FIELD(bool, c.probe.class_weights)},
      {"finetune.epochs", NN_FIELD(size, c.finetune.epochs)},
      {"finetune.batch_size", NN_FIELD(size, c.finetune.batch_size)},
      {"finetune.lr", NN_FIELD(double, c.finetune.lr)},
      {"finetune.weight_decay", NN_FIELD(double, c.finetune.weight_decay)},
      {"finetune.window_stride", NN_FIELD(size, c.finetune.window_stride)},
      {"finetune.tail_policy", NN_FIELD(string, c.finetune.tail_policy)},
      {"finetune.class_weights", NN_FIELD(bool, c.finetune.class_weights)},
      {"tcm.model", NN_FIELD(string, c.tcm.model)},
      {"tcm.blocks", NN_FIELD(size, c.tcm.blocks)},
      {"tcm.heads", NN_FIELD(size, c.tcm.heads)},
      {"tcm.output_mode", NN_FIELD(string, c.tcm.output_mode)},
      {"tcm.context_length", NN_FIELD(size, c.tcm.context_length)},
      {"mamba.d_state", NN_FIELD(size, c.tcm.mamba.d_state)},
      {"mamba.d_conv", NN_FIELD(size, c.tcm.mamba.d_conv)},
      {"mamba.expand", NN_FIELD(size, c.tcm.mamba.expand)},
      {"eval.folds", NN_FIELD(size, c.eval.folds)},
      {"eval.val_count", NN_FIELD(size, c.eval.val_count)},
      {"eval.seed", NN_FIELD(u64, c.eval.seed)},
      {"eval.znorm_scope", NN_FIELD(string, c.eval.znorm_scope)},
  };
  return table;
}

#undef NN_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void NeuroNetConfig::validate() const {
  frame.validate(kEpochLen);
  frame_net.validate(frame.frame_len);
  if (frame_net.embed_dim != encoder.dim)
    throw ConfigError("frame network width must match encoder.dim");
  if (encoder.heads == 0 || encoder.dim % encoder.heads != 0)
    throw ConfigError("encoder.dim must be divisible by encoder.heads");
  if (decoder.heads == 0 || decoder.dim % decoder.heads != 0)
    throw ConfigError("decoder.dim must be divisible by decoder.heads");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask.ratio must lie in (0, 1)");
  if (!(temperature > 0.0)) throw ConfigError("loss.temperature must be positive");
  if (!(alpha >= 0.0)) throw ConfigError("loss.alpha must be >= 0");
  if (train.batch_size < 2) throw ConfigError("pretrain.batch_size must be >= 2");
  if (!(train.lr > 0.0)) throw ConfigError("pretrain.lr must be positive");
  if (projection.hidden == 0 || projection.out == 0) throw ConfigError("projection widths must be positive");
}

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  auto& m = c.model;
  if (name == "T") {
    m.preset = "T";
    m.encoder = {512, 4, 8, 4};
    m.decoder = {192, 1, 8, 4};
  } else if (name == "B") {
    m.preset = "B";
    m.encoder = {768, 4, 8, 4};
    m.decoder = {256, 3, 8, 4};
  } else if (name == "desk") {
    m.preset = "desk";
    m.encoder = {64, 4, 8, 4};
    m.decoder = {24, 1, 8, 4};
    m.projection = {128, 64};
    m.frame_net.shared_channels = 8;
    m.frame_net.branch_channels = 8;
    m.train.epochs = 5;
    m.train.batch_size = 64;
    m.train.lr = 1e-3;
    c.probe.epochs = 100;
    c.probe.batch_size = 64;
    c.probe.lr = 5e-3;
    c.finetune.epochs = 20;
    c.finetune.batch_size = 32;
    c.finetune.lr = 1e-3;
    c.eval.val_count = 4;
  } else {
    throw ConfigError("unknown preset '" + name + "' (T | B | desk)");
  }
  m.frame_net.embed_dim = m.encoder.dim;
  return c;
}

RunConfig RunConfig::parse(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string preset_name = "T";
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "preset")
      preset_name = value;
    else
      kv.emplace_back(key, value);
  }
  RunConfig c = preset(preset_name);
  for (const auto& [k, v] : kv) c.set(k, v);
  c.model.frame_net.embed_dim = c.model.encoder.dim;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "preset") throw ConfigError("preset can only be chosen at the top of a config");
  find_field(key).set(*this, key, value);
  model.frame_net.embed_dim = model.encoder.dim;
}

std::string RunConfig::get(const std::string& key) const {
  if (key == "preset") return model.preset;
  return find_field(key).get(*this);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out{"preset"};
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "preset = " << model.preset << '\n';
  for (const auto& [k, f] : fields()) os << k << " = " << f.get(*this) << '\n';
  return os.str();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["preset"] = model.preset;
  for (const auto& [k, f] : fields()) j[k] = f.get(*this);
  return j;
}

void RunConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_text();
}

void RunConfig::validate() const {
  model.validate();
  tcm.validate(model.encoder.dim);
  parse_tail_policy(finetune.tail_policy);
  if (probe.batch_size == 0 || finetune.batch_size == 0) throw ConfigError("batch sizes must be positive");
  if (finetune.window_stride == 0) throw ConfigError("finetune.window_stride must be >= 1");
  if (eval.folds < 2) throw ConfigError("eval.folds must be >= 2");
  if (eval.znorm_scope != "recording" && eval.znorm_scope != "epoch" && eval.znorm_scope != "none")
    throw ConfigError("eval.znorm_scope must be recording, epoch or none");
}

}  // namespace neuronet
