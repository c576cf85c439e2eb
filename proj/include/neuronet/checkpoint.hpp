#pragma once

// Named-tensor checkpoint container shared by every model in the project.
//
//   <stem>.bin   concatenated little-endian float64 payloads
//   <stem>.json  manifest: {"format", "tensors": [{name, shape, dtype,
//                offset, nbytes}], "meta": {...}}
//
// `meta` carries whatever the caller wants to keep next to the weights
// (resolved config, model kind, provenance).

#include <filesystem>
#include <string>

#include "json.hpp"
#include "neuronet/nn.hpp"

namespace neuronet {

inline constexpr const char* kCheckpointFormat = "neuronet-tensors-v1";

void save_checkpoint(const nn::ParamSet& params, const std::filesystem::path& stem,
                     const nlohmann::json& meta);

// Reads only the manifest.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& stem);

// Copies stored tensors into matching entries of `params`. Every entry of
// `params` must be present with the same shape unless `allow_missing`.
// Returns the manifest's meta object.
nlohmann::json load_checkpoint(nn::ParamSet& params, const std::filesystem::path& stem,
                               bool allow_missing = false);

}  // namespace neuronet
