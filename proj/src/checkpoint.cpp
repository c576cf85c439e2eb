#include "neuronet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace neuronet {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian host");

namespace {

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

}  // namespace

void save_checkpoint(const nn::ParamSet& params, const fs::path& stem, const json& meta) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary);
  if (!bin) throw IoError("cannot write " + with_ext(stem, ".bin").string());
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& e : params.entries()) {
    const auto& t = e.var.value();
    const std::size_t nbytes = t.size() * sizeof(double);
    bin.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(nbytes));
    tensors.push_back({{"name", e.name},
                       {"shape", t.shape},
                       {"dtype", "f64"},
                       {"offset", offset},
                       {"nbytes", nbytes},
                       {"buffer", e.buffer}});
    offset += nbytes;
  }
  if (!bin) throw IoError("short write to " + with_ext(stem, ".bin").string());
  json manifest = {{"format", kCheckpointFormat}, {"tensors", tensors}, {"meta", meta}};
  std::ofstream js(with_ext(stem, ".json"));
  if (!js) throw IoError("cannot write " + with_ext(stem, ".json").string());
  js << manifest.dump(2) << '\n';
}

json read_checkpoint_manifest(const fs::path& stem) {
  std::ifstream js(with_ext(stem, ".json"));
  if (!js) throw IoError("missing checkpoint manifest " + with_ext(stem, ".json").string());
  json manifest;
  try {
    js >> manifest;
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kCheckpointFormat)
    throw IoError("unsupported checkpoint format in " + with_ext(stem, ".json").string());
  return manifest;
}

json load_checkpoint(nn::ParamSet& params, const fs::path& stem, bool allow_missing) {
  const json manifest = read_checkpoint_manifest(stem);
  std::ifstream bin(with_ext(stem, ".bin"), std::ios::binary);
  if (!bin) throw IoError("missing checkpoint payload " + with_ext(stem, ".bin").string());
  std::map<std::string, json> index;
  for (const auto& t : manifest.at("tensors")) index[t.at("name").get<std::string>()] = t;
  for (const auto& e : params.entries()) {
    auto it = index.find(e.name);
    if (it == index.end()) {
      if (allow_missing) continue;
      throw IoError("checkpoint lacks tensor " + e.name);
    }
    const auto shape = it->second.at("shape").get<Shape>();
    auto& value = e.var.node()->value;
    if (shape != value.shape)
      throw ConfigError("checkpoint tensor " + e.name + " has shape " + shape_str(shape) +
                        ", model expects " + shape_str(value.shape));
    if (it->second.at("dtype").get<std::string>() != "f64") throw IoError("unsupported dtype for " + e.name);
    bin.seekg(static_cast<std::streamoff>(it->second.at("offset").get<std::size_t>()));
    bin.read(reinterpret_cast<char*>(value.ptr()),
             static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!bin) throw IoError("truncated checkpoint payload at " + e.name);
  }
  return manifest.value("meta", json::object());
}

}  // namespace neuronet
