#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "del/layers.hpp"
#include "del/tensor.hpp"

namespace del {

struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Tensor>> params;  // file order
};

std::string squash_form_name(SquashForm form);
SquashForm squash_form_from_name(const std::string& name);

/// Container layout: 8-byte magic "DELCKPT1", u32 little-endian header
/// length, UTF-8 JSON header (model config, squash specs, seed, parameter
/// names and shapes), then each parameter's values as little-endian doubles
/// in header order.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     std::uint64_t seed);

/// Throws IoError on missing file, bad magic, truncated payload, or a header
/// that does not match the byte count that follows it.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model a checkpoint describes and copies its parameters in.
Model restore_model(const Checkpoint& ck);

}  // namespace del
